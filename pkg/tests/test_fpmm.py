import numpy as np
import pytest
from scipy.optimize import nnls

from cfisac.exceptions import InfeasibleConstraintsError
from cfisac.fpmm import (FpmmParams, beam_is_feasible, beamforming_step, fp_objective,
                         init_beamforming, max_min_sinr, mm_sqrt_bound, run_alternating,
                         update_filters, update_tau)
from cfisac.model import (Beamformer, FilterBank, ModeVector, QuadraticForms, assemble_sensing,
                          build_quadratic_forms, comm_sinrs, effective_channels, sensing_sinr,
                          sum_sensing_sinr)
from cfisac.precoding import solve_power_min
from cfisac.scenario import Scenario, generate_scenario

from conftest import crandn, desk_config


def setup(seed=0, bits=(1, 0, 1, 1, 0, 1), **changes):
    sc = generate_scenario(desk_config(**changes), seed)
    mode = ModeVector(bits)
    mats = assemble_sensing(sc, mode)
    beam = init_beamforming(sc, mode)
    return sc, mode, mats, beam


# ---------------------------------------------------------------- filters

def test_filters_beat_random_filters(rng):
    sc, mode, mats, beam = setup(1)
    filters = update_filters(mats, beam)
    rx = mode.rx_rows(sc.M)
    for l in range(sc.L):
        best = sensing_sinr(mats, beam, filters.u[l], l)
        for _ in range(1000):
            u = np.zeros(sc.J * sc.M, dtype=complex)
            u[rx] = crandn(rng, rx.size)
            assert sensing_sinr(mats, beam, u, l) <= best * (1 + 1e-9)


def test_filter_value_is_top_eigenvalue():
    sc, mode, mats, beam = setup(2)
    filters = update_filters(mats, beam)
    rx = mode.rx_rows(sc.M)
    for l in range(sc.L):
        B = mats.B(l, beam.W_bar)[np.ix_(rx, rx)]
        C = mats.C(l, beam.W_bar)[np.ix_(rx, rx)]
        lam = np.max(np.linalg.eigvals(np.linalg.solve(C, B)).real)
        assert sensing_sinr(mats, beam, filters.u[l], l) == pytest.approx(lam, rel=1e-6)
        assert np.linalg.norm(filters.u[l]) == pytest.approx(1.0)
        assert not np.any(filters.u[l][mode.tx_rows(sc.M)])


def test_zero_beam_gives_canonical_filter():
    sc, mode, mats, _ = setup(0)
    filters = update_filters(mats, Beamformer.zeros(sc.J, sc.M, sc.K))
    first = mode.rx_rows(sc.M)[0]
    for l in range(sc.L):
        expected = np.zeros(sc.J * sc.M)
        expected[first] = 1.0
        np.testing.assert_array_equal(filters.u[l], expected)
        assert sensing_sinr(mats, Beamformer.zeros(sc.J, sc.M, sc.K), filters.u[l], l) == 0


def test_target_relabelling_permutes_filters():
    sc, mode, mats, beam = setup(3, L=3)
    perm = [2, 0, 1]
    sp = Scenario(config=sc.config, bs_pos=sc.bs_pos, user_pos=sc.user_pos,
                  target_pos=sc.target_pos[perm], h=sc.h, g=sc.g, theta=sc.theta[:, perm],
                  beta=sc.beta[:, perm], xi=sc.xi[:, :, perm])
    a = update_filters(mats, beam).u
    b = update_filters(assemble_sensing(sp, mode), beam).u
    np.testing.assert_allclose(b, a[perm], atol=1e-10)


# ---------------------------------------------------------------- weights and bound

def toy_forms():
    v = np.zeros((1, 1, 2), dtype=complex)
    v[0, 0, 0] = 3.0
    return QuadraticForms(v=v, g=np.zeros((1, 2), dtype=complex), c_r=np.array([9.0]),
                          n_cols=1)


def test_tau_closed_form():
    forms = toy_forms()
    np.testing.assert_allclose(update_tau(np.array([1.0, 0.0]), forms), [1 / 3])
    np.testing.assert_array_equal(update_tau(np.zeros(2), forms), [0.0])


def test_fp_objective_attains_ratio_sum(rng):
    sc, mode, mats, beam = setup(4)
    forms = build_quadratic_forms(mats, update_filters(mats, beam))
    w = beam.w_hat
    tau = update_tau(w, forms)
    total = forms.ratios(w).sum()
    assert fp_objective(w, tau, forms) == pytest.approx(total, rel=1e-10)
    for _ in range(50):
        other = tau * np.exp(rng.normal(0, 0.5, tau.shape))
        assert fp_objective(w, other, forms) <= total * (1 + 1e-12)


def test_mm_bound_tangent_and_below(rng):
    sc, mode, mats, beam = setup(5)
    forms = build_quadratic_forms(mats, update_filters(mats, beam))
    w_t = beam.w_hat
    for l in range(sc.L):
        exact = np.sqrt(forms.d(l, l, w_t))
        assert mm_sqrt_bound(w_t, w_t, forms, l) == pytest.approx(exact, rel=1e-12)
        for _ in range(100):
            w = w_t + crandn(rng, w_t.size) * rng.uniform(0.01, 1.0)
            assert mm_sqrt_bound(w, w_t, forms, l) <= np.sqrt(forms.d(l, l, w)) * (1 + 1e-12)


# ---------------------------------------------------------------- beamforming step

@pytest.mark.parametrize("seed", range(4))
def test_step_feasible_and_ascending(seed):
    sc, mode, mats, beam = setup(seed)
    forms = build_quadratic_forms(mats, update_filters(mats, beam))
    w = beam.w_hat
    tau = update_tau(w, forms)
    w_new, info = beamforming_step(w, tau, forms, sc, mode, return_info=True)
    W_new = Beamformer.from_w_hat(w_new, sc.J * sc.M, sc.K)
    assert info.status == "optimal" and info.kkt_residual <= 1e-7
    assert np.all(comm_sinrs(sc, mode, W_new) >= np.array(sc.config.gamma) * (1 - 1e-6))
    assert W_new.power() <= sc.config.p_max * (1 + 1e-9)
    assert not np.any(W_new.W_bar[mode.rx_rows(sc.M)])
    assert info.surrogate_new >= info.surrogate_old - 1e-9 * abs(info.surrogate_old)
    assert forms.ratios(w_new).sum() >= forms.ratios(w).sum() * (1 - 1e-9)


def test_unreachable_targets_raise():
    sc, mode, mats, beam = setup(0)
    forms = build_quadratic_forms(mats, update_filters(mats, beam))
    hard = Scenario(**{**{k: getattr(sc, k) for k in Scenario.arrays},
                       "config": sc.config.replace(p_max=1e-12), "seed": sc.seed})
    with pytest.raises(InfeasibleConstraintsError):
        beamforming_step(beam.w_hat, update_tau(beam.w_hat, forms), forms, hard, mode)


def _real_coords(w, rows, JM, ncol):
    W = np.reshape(w, (JM, ncol), order="F")[rows]
    z = W.reshape(-1, order="F")
    return np.concatenate([z.real, z.imag])


@pytest.mark.parametrize("seed", [0, 2, 4])
def test_toy_fixed_point_is_kkt(seed):
    """J=2, M=2, K=1, L=1: repeated steps with fixed filters reach a KKT point."""
    sc = generate_scenario(desk_config(J=2, M=2, K=1, L=1), seed)
    mode = ModeVector((1, 0))
    mats = assemble_sensing(sc, mode)
    beam = init_beamforming(sc, mode)
    forms = build_quadratic_forms(mats, update_filters(mats, beam))
    w = beam.w_hat
    for _ in range(300):
        w = beamforming_step(w, update_tau(w, forms), forms, sc, mode)

    JM, ncol, rows = 4, 3, mode.tx_rows(2)
    n = rows.size * ncol
    cfg = sc.config
    H = effective_channels(sc, mode)

    def unpack(x):
        W = np.zeros((JM, ncol), dtype=complex)
        W[rows] = (x[:n] + 1j * x[n:]).reshape(rows.size, ncol, order="F")
        return W

    def objective(x):
        return forms.ratios(unpack(x).reshape(-1, order="F")).sum()

    def sinr_gap(x):
        r = np.abs(H[:, 0].conj() @ unpack(x)) ** 2
        return cfg.gamma[0] * (r.sum() - r[0] + cfg.sigma_c_sq) - r[0]

    def power_gap(x):
        return x @ x - cfg.p_max

    def grad(fn, x, h=1e-7):
        eye = np.eye(x.size) * h
        return np.array([(fn(x + e) - fn(x - e)) / (2 * h) for e in eye])

    x0 = _real_coords(w, rows, JM, ncol)
    assert power_gap(x0) <= 1e-9 and sinr_gap(x0) <= 0
    gf = grad(objective, x0)
    gc = [grad(power_gap, x0), grad(sinr_gap, x0)]
    G = np.stack([g / np.linalg.norm(g) for g in gc], axis=1)
    _, residual = nnls(G, gf)
    assert residual / np.linalg.norm(gf) <= 1e-4


# ---------------------------------------------------------------- initialisation

def single_user(seed=0, **changes):
    sc = generate_scenario(desk_config(J=2, M=2, K=1, L=1, **changes), seed)
    return sc, ModeVector((1, 0))


def test_init_single_user_matched_filter():
    sc, mode = single_user()
    cfg = sc.config
    beam = init_beamforming(sc, mode)
    h = sc.h[0, 0]
    w = beam.comm[:2, 0]
    assert abs(np.vdot(h, w)) == pytest.approx(np.linalg.norm(h) * np.linalg.norm(w), rel=1e-6)
    assert np.linalg.norm(w) ** 2 == pytest.approx(
        cfg.gamma[0] * cfg.sigma_c_sq / np.linalg.norm(h) ** 2, rel=1e-5)
    assert beam.power() == pytest.approx(cfg.p_max, rel=1e-9)
    assert beam_is_feasible(sc, mode, beam)


def test_max_min_single_user_closed_form():
    sc, mode = single_user(3)
    t, W_c = max_min_sinr(sc, mode)
    exact = sc.config.p_max * np.linalg.norm(sc.h[0, 0]) ** 2 / sc.config.sigma_c_sq
    assert t == pytest.approx(exact, rel=1e-3)
    assert np.linalg.norm(W_c) ** 2 == pytest.approx(sc.config.p_max, rel=1e-9)


def test_exhausted_budget_leaves_no_radar_power():
    sc, mode = single_user(1)
    need = solve_power_min(sc, mode.tx_set).total
    tight = Scenario(**{**{k: getattr(sc, k) for k in Scenario.arrays},
                        "config": sc.config.replace(p_max=need), "seed": sc.seed})
    beam = init_beamforming(tight, mode)
    assert np.linalg.norm(beam.radar) ** 2 <= 1e-6 * need
    assert beam.power() == pytest.approx(need, rel=1e-6)


def test_init_rejects_unreachable_targets():
    sc, mode = single_user(0, gamma=(1e12,))
    with pytest.raises(InfeasibleConstraintsError):
        init_beamforming(sc, mode)


def test_max_min_matches_grid_search():
    sc = generate_scenario(desk_config(J=3, M=2, K=2, L=1), 7)
    mode = ModeVector((1, 1, 0))
    t, W_c = max_min_sinr(sc, mode)
    W = np.hstack([W_c, np.zeros((6, 2))])
    assert comm_sinrs(sc, mode, W).min() >= t * (1 - 1e-5)
    grid = t * np.linspace(0.97, 1.03, 61)
    feasible = [g for g in grid
                if solve_power_min(sc, mode.tx_set, np.full(2, g)).total <= sc.config.p_max]
    assert abs(max(feasible) - t) <= 1e-2 * t


# ---------------------------------------------------------------- driver

def test_huge_tolerance_stops_after_one_iteration():
    sc, mode, *_ = setup(0)
    _, _, trace = run_alternating(sc, mode, FpmmParams(rel_tol=1e9))
    assert trace.iterations == 1


def test_iteration_cap_respected():
    sc, mode, *_ = setup(1)
    _, _, trace = run_alternating(sc, mode, FpmmParams(max_outer_iters=3, rel_tol=1e-12))
    assert trace.iterations == 3


@pytest.mark.parametrize("seed", range(3))
def test_alternating_monotone_and_feasible(seed):
    sc, mode, mats, _ = setup(seed, J=4, bits=(1, 0, 1, 0))
    beam, filters, trace = run_alternating(sc, mode)
    obj = np.array(trace.objective)
    assert np.all(np.diff(obj) >= -1e-9 * np.abs(obj[:-1]))
    gamma = np.array(sc.config.gamma)
    for sinrs, power in zip(trace.comm_sinr, trace.power):
        assert np.all(sinrs >= gamma * (1 - 1e-5))
        assert power <= sc.config.p_max * (1 + 1e-6)
    assert sum_sensing_sinr(mats, beam, filters) == pytest.approx(obj[-1], rel=1e-12)


def test_returned_filters_are_optimal_for_returned_beam():
    sc, mode, mats, _ = setup(2)
    beam, filters, _ = run_alternating(sc, mode, FpmmParams(max_outer_iters=10))
    again = update_filters(mats, beam)
    for l in range(sc.L):
        assert abs(np.vdot(again.u[l], filters.u[l])) == pytest.approx(1.0, abs=1e-10)


def test_params_validated():
    with pytest.raises(ValueError):
        FpmmParams(max_outer_iters=0)
