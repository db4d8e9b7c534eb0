"""Alternating receive-filter / transmit-beamforming optimisation for a fixed mode.

Each outer iteration refreshes the receive filters (top generalized
eigenvectors), the quadratic-transform weights ``tau`` and then the stacked
beamformer by maximising a concave minorant of the transformed objective
with a second-order cone program.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .exceptions import InfeasibleConstraintsError, ModeInfeasibleError, SolverError
from .model import (Beamformer, FilterBank, ModeVector, QuadraticForms,
                    SensingMatrices, assemble_sensing, build_quadratic_forms,
                    comm_sinrs, effective_channels, sum_sensing_sinr)
from .precoding import (GAMMA_MARGIN, apply_per_column, nullspace_precoder, sinr_cone,
                        solve_power_min)
from .scenario import Scenario

log = logging.getLogger(__name__)

__all__ = [
    "FpmmParams",
    "FpmmTrace",
    "StepInfo",
    "beamforming_step",
    "beam_is_feasible",
    "fp_objective",
    "init_beamforming",
    "max_min_sinr",
    "mm_sqrt_bound",
    "run_alternating",
    "surrogate",
    "update_filters",
    "update_tau",
]


@dataclass(frozen=True)
class FpmmParams:
    max_outer_iters: int = 100
    rel_tol: float = 1e-4
    socp_tol: float = 1e-8

    def __post_init__(self):
        if self.max_outer_iters < 1 or self.rel_tol <= 0 or self.socp_tol <= 0:
            raise ValueError("FpmmParams entries must be positive")


@dataclass
class FpmmTrace:
    objective: list = field(default_factory=list)
    comm_sinr: list = field(default_factory=list)
    power: list = field(default_factory=list)
    kkt: list = field(default_factory=list)

    def record(self, obj, sinrs, power, kkt=0.0):
        self.objective.append(float(obj))
        self.comm_sinr.append(np.asarray(sinrs, dtype=float))
        self.power.append(float(power))
        self.kkt.append(float(kkt))

    @property
    def iterations(self) -> int:
        return max(len(self.objective) - 1, 0)


# -- receive filters -----------------------------------------------------------

def update_filters(mats: SensingMatrices, W_bar) -> FilterBank:
    """Per-target max-SINR filters supported on receiver blocks, unit norm."""
    rx = mats.mode.rx_rows(mats.M)
    if rx.size == 0:
        raise ModeInfeasibleError("no receiving BS")
    W = W_bar.W_bar if isinstance(W_bar, Beamformer) else np.asarray(W_bar)
    u = np.zeros((mats.L, mats.JM), dtype=complex)
    # restrict to receiver rows before forming B and C
    A_rx = mats.A_hat[:, rx, :] @ W                       # (L, n_rx, K+M)
    G_rx = mats.G_hat.T[rx, :] @ W
    base = mats.sigma_r_sq * np.eye(rx.size) + G_rx @ G_rx.conj().T
    grams = [X @ X.conj().T for X in A_rx]
    for l in range(mats.L):
        C = base + sum(grams[s] for s in range(mats.L) if s != l)
        _, v = conic.max_generalized_eigenpair(grams[l], C)
        u[l, rx] = v
    return FilterBank(u)


# -- quadratic transform and MM bound -----------------------------------------

def update_tau(w_hat: np.ndarray, forms: QuadraticForms) -> np.ndarray:
    """Optimal auxiliary weights ``sqrt(num_l) / (interference_l + c_l)``."""
    return np.sqrt(forms.numerators(w_hat)) / (forms.interference(w_hat) + forms.c_r)


def fp_objective(w_hat, tau, forms: QuadraticForms) -> float:
    """Quadratic-transform objective including the ``tau^2 c`` terms.

    Its maximum over ``tau`` equals the sum of ratios.
    """
    tau = np.asarray(tau, dtype=float)
    num = forms.numerators(w_hat)
    den = forms.interference(w_hat) + forms.c_r
    return float(np.sum(2 * tau * np.sqrt(num) - tau ** 2 * den))


def _d_apply(forms: QuadraticForms, l: int, w_hat) -> np.ndarray:
    """``D_{l,l} w_hat`` as a (JM, K+M) matrix."""
    v = forms.v[l, l]
    W = forms._cols(w_hat)
    return np.outer(v, v.conj() @ W)


def mm_sqrt_bound(w_hat, w_t, forms: QuadraticForms, l: int) -> float:
    """First-order minorant of ``sqrt(w^H D_ll w)`` expanded at ``w_t``."""
    a_t = forms.d(l, l, w_t)
    if a_t <= 0:
        return 0.0
    Dw_t = _d_apply(forms, l, w_t).reshape(-1, order="F")
    lin = np.vdot(Dw_t, np.asarray(w_hat) - w_t).real
    return float(np.sqrt(a_t) + lin / np.sqrt(a_t))


def surrogate(w_hat, w_t, tau, forms: QuadraticForms) -> float:
    """Objective of the per-iteration cone program (constants dropped)."""
    val = 0.0
    interf = forms.interference(w_hat)
    for l in range(forms.L):
        a_t = forms.d(l, l, w_t)
        if a_t > 0:
            Dw_t = _d_apply(forms, l, w_t).reshape(-1, order="F")
            val += 2 * tau[l] * np.vdot(Dw_t, w_hat).real / np.sqrt(a_t)
        val -= tau[l] ** 2 * interf[l]
    return float(val)


# -- feasibility helpers -------------------------------------------------------

def beam_is_feasible(scenario: Scenario, mode: ModeVector, W_bar,
                     sinr_rtol: float = 1e-5, power_atol: float = 1e-7) -> bool:
    W = W_bar.W_bar if isinstance(W_bar, Beamformer) else np.asarray(W_bar)
    cfg = scenario.config
    sinrs = comm_sinrs(scenario, mode, W)
    power = Beamformer(W, scenario.K).power(mode)
    return bool(np.all(sinrs >= np.asarray(cfg.gamma) * (1 - sinr_rtol))
                and power <= cfg.p_max + power_atol)


def _phase_align(W: np.ndarray, H: np.ndarray, K: int) -> np.ndarray:
    """Rotate each user column so ``h_k^H w_k`` is real and non-negative."""
    W = W.copy()
    y = np.einsum("ik,ik->k", H.conj(), W[:, :K])
    phase = np.where(np.abs(y) > 0, np.exp(-1j * np.angle(y)), 1.0)
    W[:, :K] *= phase[None, :]
    return W


@dataclass
class StepInfo:
    status: str
    kkt_residual: float
    surrogate_old: float
    surrogate_new: float
    kept_previous: bool = False


def beamforming_step(w_t: np.ndarray, tau, forms: QuadraticForms, scenario: Scenario,
                     mode: ModeVector, tol: float = 1e-8, return_info: bool = False):
    """One MM update of the stacked beamformer.

    Solves the real-lifted cone program over the transmitter rows only and
    returns the new ``w_hat``.  If the expansion point is feasible and the
    solver's point does not improve the true objective (solver round-off),
    the expansion point is returned instead.
    """
    cfg = scenario.config
    J, M, K = scenario.J, scenario.M, scenario.K
    JM, ncol = J * M, K + M
    tau = np.asarray(tau, dtype=float)
    rows = mode.tx_rows(M)
    n_t = rows.size
    N = n_t * ncol
    n_var = 2 * N + 1
    H = effective_channels(scenario, mode)                       # (JM, K)
    mask = mode.row_mask(M)[:, None]

    W_t = _phase_align(np.reshape(w_t, (JM, ncol), order="F") * mask, H, K)
    w_t = W_t.reshape(-1, order="F")
    s = np.sqrt(cfg.p_max)                                       # w = s * w'

    cones, eq_rows = [], []
    for k in range(K):
        cone, eq = sinr_cone(H[rows, k], n_t, ncol, k, cfg.gamma[k] * (1 + GAMMA_MARGIN),
                             s / np.sqrt(cfg.sigma_c_sq), n_extra=1)
        cones.append(cone)
        eq_rows.append(eq)

    # total power ||w'|| <= 1
    A_pow = np.eye(2 * N, n_var)
    cones.append(conic.Cone(A=A_pow, b=np.zeros(2 * N), f=np.zeros(n_var), d=1.0))

    # linear part of the minorant
    gvec = np.zeros((n_t, ncol), dtype=complex)
    for l in range(forms.L):
        a_t = forms.d(l, l, w_t)
        if a_t > 0:
            gvec += 2 * tau[l] / np.sqrt(a_t) * _d_apply(forms, l, w_t)[rows]
    g_lin = s * conic.real_lift(gvec.reshape(-1, order="F"))
    # objective values are tiny in SI units; rescale so the solver's
    # absolute tolerances mean something (t absorbs the same factor)
    kappa = 1.0 / max(float(np.max(np.abs(g_lin))), 1e-300) if np.any(g_lin) else 1.0

    # penalty sum_i ||V^H w_i||^2 <= t as a rotated cone
    cols = []
    for l in range(forms.L):
        for s_idx in range(forms.L):
            if s_idx != l:
                cols.append(tau[l] * forms.v[l, s_idx])
        cols.append(tau[l] * forms.g[l])
    V = np.stack(cols, axis=1)[rows]                              # (n_t, r)
    R = apply_per_column(V, ncol) * (s * np.sqrt(kappa))
    A_pen = np.zeros((R.shape[0] + 1, n_var))
    A_pen[:-1, :2 * N] = 2 * R
    A_pen[-1, -1] = -1.0
    b_pen = np.zeros(A_pen.shape[0])
    b_pen[-1] = 1.0
    f_pen = np.zeros(n_var)
    f_pen[-1] = 1.0
    cones.append(conic.Cone(A=A_pen, b=b_pen, f=f_pen, d=1.0))

    c = np.zeros(n_var)
    c[:2 * N] = -kappa * g_lin
    c[-1] = 1.0

    problem = conic.SocpProblem(n=n_var, c=c, cones=cones,
                                E=np.vstack(eq_rows), e=np.zeros(K))
    sol = conic.solve_socp(problem, tol=tol)
    if sol.status == conic.INFEASIBLE:
        raise InfeasibleConstraintsError("SINR targets unreachable under the power budget")
    if not np.all(np.isfinite(sol.x)):
        raise SolverError("beamforming cone program failed")

    W_new = np.zeros((JM, ncol), dtype=complex)
    W_new[rows] = (s * conic.complex_from_real(sol.x[:2 * N])).reshape(n_t, ncol, order="F")
    power = np.vdot(W_new, W_new).real
    if power > cfg.p_max:
        W_new *= np.sqrt(cfg.p_max / power)
    w_new = W_new.reshape(-1, order="F")

    sur_old = surrogate(w_t, w_t, tau, forms)
    sur_new = surrogate(w_new, w_t, tau, forms)
    kept = False
    if beam_is_feasible(scenario, mode, W_t):
        if (not beam_is_feasible(scenario, mode, W_new)
                or forms.ratios(w_new).sum() < forms.ratios(w_t).sum()):
            w_new, sur_new, kept = w_t, sur_old, True
    elif sol.status != conic.OPTIMAL and not beam_is_feasible(scenario, mode, W_new):
        raise SolverError(f"beamforming step ended uncertified (kkt={sol.kkt_residual:.2e})")
    if return_info:
        return w_new, StepInfo(sol.status, sol.kkt_residual, sur_old, sur_new, kept)
    return w_new


# -- initialisation --------------------------------------------------------------

def max_min_sinr(scenario: Scenario, mode: ModeVector, rel_width: float = 1e-3,
                 tol: float = 1e-8):
    """Bisection on a common SINR target under the total power budget.

    Returns ``(t, W_c)``: the largest verified-feasible common target and
    the matching power-minimising communication beams (JM x K).
    """
    cfg = scenario.config
    H = effective_channels(scenario, mode)
    hi = cfg.p_max * float(np.max(np.sum(np.abs(H) ** 2, axis=0))) / cfg.sigma_c_sq
    lo, best = 0.0, None
    while hi - lo > rel_width * hi:
        mid = 0.5 * (lo + hi)
        try:
            res = solve_power_min(scenario, mode.tx_set, np.full(scenario.K, mid), tol=tol)
        except InfeasibleConstraintsError:
            hi = mid
            continue
        if res.total <= cfg.p_max:
            lo, best = mid, res
        else:
            hi = mid
    W_c = best.W_c * np.sqrt(cfg.p_max / best.total) if best is not None else None
    return lo, W_c


def init_beamforming(scenario: Scenario, mode: ModeVector, tol: float = 1e-8,
                     require_receiver: bool = True) -> Beamformer:
    """Feasible starting beamformer for a fixed mode.

    User beams solve the power minimisation at the required targets; the
    leftover budget drives null-space radar beams.  ``require_receiver=False``
    admits the all-transmitter starting mode of the joint selection method.  Whether the targets fit
    the budget is exactly the outcome of bisecting the common max-min SINR,
    so the power-minimisation value alone decides feasibility.
    """
    cfg = scenario.config
    if require_receiver:
        mode.require_feasible(scenario.M, scenario.K)
    res = solve_power_min(scenario, mode.tx_set, cfg.gamma, tol=tol)
    if res.total > cfg.p_max * (1 + 1e-9):
        raise InfeasibleConstraintsError(
            f"required communication power {res.total:.3e} W exceeds budget {cfg.p_max:.3e} W")
    W_c = res.W_c
    if res.total > cfg.p_max:
        W_c = W_c * np.sqrt(cfg.p_max / res.total)
    remaining = max(cfg.p_max - res.total, 0.0)
    W_r = nullspace_precoder(scenario, mode.tx_set, remaining)
    return Beamformer(np.hstack([W_c, W_r]), scenario.K)


# -- Algorithm driver -----------------------------------------------------------

def run_alternating(scenario: Scenario, mode: ModeVector, params: FpmmParams | None = None,
                    init: Beamformer | None = None):
    """Alternate filters, weights and beamformer until the objective settles.

    ``trace.objective[0]`` is the objective of the initial beamformer with
    its optimal filters; each further entry follows one full iteration.
    """
    params = params or FpmmParams()
    mode.require_feasible(scenario.M, scenario.K)
    mats = assemble_sensing(scenario, mode)
    beam = init if init is not None else init_beamforming(scenario, mode, tol=params.socp_tol)
    JM, K = scenario.J * scenario.M, scenario.K
    w = beam.w_hat
    filters = update_filters(mats, beam)
    obj = sum_sensing_sinr(mats, beam, filters)
    trace = FpmmTrace()
    trace.record(obj, comm_sinrs(scenario, mode, beam), beam.power(mode))
    for _ in range(params.max_outer_iters):
        forms = build_quadratic_forms(mats, filters)
        tau = update_tau(w, forms)
        w, info = beamforming_step(w, tau, forms, scenario, mode, tol=params.socp_tol,
                                   return_info=True)
        beam = Beamformer.from_w_hat(w, JM, K)
        filters = update_filters(mats, beam)
        new = sum_sensing_sinr(mats, beam, filters)
        trace.record(new, comm_sinrs(scenario, mode, beam), beam.power(mode), info.kkt_residual)
        done = abs(new - obj) <= params.rel_tol * max(abs(obj), 1e-300)
        obj = new
        if done:
            break
    return beam, filters, trace
