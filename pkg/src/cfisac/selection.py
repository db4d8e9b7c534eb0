"""Heuristic BS mode selection, plus random and exhaustive baselines.

The three greedy methods start with every BS transmitting and move one BS
per round into receive mode, scoring rounds by the sum of sensing SINRs.
A round that lowers the score ends the search and the best mode seen so
far is kept; that mode is then re-optimised with the full alternating
algorithm, always from the same deterministic initial beamformer, so all
methods (and the exhaustive oracle) are compared on equal footing.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InfeasibleConstraintsError, ModeInfeasibleError
from .fpmm import (FpmmParams, FpmmTrace, beamforming_step, init_beamforming,
                   run_alternating, update_filters, update_tau)
from .model import (Beamformer, FilterBank, ModeVector, assemble_sensing,
                    build_quadratic_forms, sum_sensing_sinr)
from .precoding import nullspace_precoder, solve_power_min
from .scenario import NetworkConfig, Scenario

__all__ = [
    "SelectionResult",
    "draw_random_mode",
    "feasible_modes",
    "nullspace_precoder",
    "select_comm_centric",
    "select_exhaustive",
    "select_joint",
    "select_random",
    "select_sensing_centric",
    "solve_power_min",
]

MAX_EXHAUSTIVE_J = 10


@dataclass
class SelectionResult:
    method: str
    mode: ModeVector
    beamformer: Beamformer
    filters: FilterBank
    objective: float
    history: list = field(default_factory=list)
    trace: FpmmTrace | None = None

    @property
    def rounds(self) -> int:
        return len(self.history)


def feasible_modes(J: int, M: int, K: int) -> list:
    """Every mode meeting the Tx/Rx count constraints, in lexicographic order."""
    modes = (ModeVector(bits) for bits in itertools.product((0, 1), repeat=J))
    return [m for m in modes if m.is_feasible(M, K)]


def draw_random_mode(J: int, M: int, K: int, rng: np.random.Generator) -> ModeVector:
    modes = feasible_modes(J, M, K)
    if not modes:
        raise ModeInfeasibleError(f"no feasible mode for J={J}, M={M}, K={K}")
    return modes[int(rng.integers(len(modes)))]


def _check_inputs(scenario: Scenario):
    if scenario.L < 1:
        raise ValueError("at least one target is required")
    if (scenario.J - 1) * scenario.M < scenario.K:
        raise ModeInfeasibleError(
            "no mode leaves a receiver while keeping enough transmit antennas")


def _can_move(n_tx: int, M: int, K: int) -> bool:
    return n_tx > 1 and (n_tx - 1) * M >= K


def _score(scenario: Scenario, mode: ModeVector, W: np.ndarray):
    """Optimal filters and the sum of sensing SINRs for a fixed beamformer."""
    mats = assemble_sensing(scenario, mode)
    filters = update_filters(mats, W)
    return filters, sum_sensing_sinr(mats, W, filters)


def _linear_beams(scenario: Scenario, mode: ModeVector, gamma):
    """Power-min user beams plus null-space radar beams with the leftover power.

    Returns ``None`` when the user beams alone exceed the budget.
    """
    cfg = scenario.config
    pm = solve_power_min(scenario, mode.tx_set, gamma)
    remaining = cfg.p_max - pm.total
    if remaining < 0:
        return None, pm
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        W_r = nullspace_precoder(scenario, mode.tx_set, remaining)
    return np.hstack([pm.W_c, W_r]), pm


def _finish(method: str, scenario: Scenario, mode: ModeVector, history: list,
            params: FpmmParams | None) -> SelectionResult:
    beam, filters, trace = run_alternating(scenario, mode, params)
    mats = assemble_sensing(scenario, mode)
    return SelectionResult(method=method, mode=mode, beamformer=beam, filters=filters,
                           objective=sum_sensing_sinr(mats, beam, filters),
                           history=history, trace=trace)


def _argmax(scores: dict) -> int:
    """Key with the largest value, lowest BS index on ties."""
    best = max(scores.values())
    return min(j for j, v in scores.items() if v == best)


def _argmin(scores: dict) -> int:
    best = min(scores.values())
    return min(j for j, v in scores.items() if v == best)


def select_comm_centric(scenario: Scenario, config: NetworkConfig | None = None,
                        params: FpmmParams | None = None, rule: str = "argmin") -> SelectionResult:
    """Communication-centric greedy selection.

    Each round solves the per-BS power minimisation and turns one BS into a
    receiver: by default the one with the *least* power (it contributes
    least to the users); ``rule="argmax"`` picks the largest instead.
    """
    if rule not in ("argmin", "argmax"):
        raise ValueError("rule must be 'argmin' or 'argmax'")
    _check_inputs(scenario)
    cfg = config or scenario.config
    M, K, J = scenario.M, scenario.K, scenario.J
    mode = ModeVector((1,) * J)
    pm = solve_power_min(scenario, mode.tx_set, cfg.gamma)
    pick = _argmin if rule == "argmin" else _argmax
    history, best_mode, best_obj = [], None, -np.inf
    while _can_move(mode.n_tx, M, K):
        powers = {j: float(pm.powers[j]) for j in mode.tx_set}
        j_star = pick(powers)
        cand = mode.without(j_star)
        try:
            W, pm_new = _linear_beams(scenario, cand, cfg.gamma)
        except InfeasibleConstraintsError:
            break
        if W is None:
            break
        _, obj = _score(scenario, cand, W)
        history.append({"selected": j_star, "objective": obj, "scores": powers})
        if obj < best_obj:
            break
        best_mode, best_obj = cand, obj
        mode, pm = cand, pm_new
    if best_mode is None:
        raise InfeasibleConstraintsError("no receiver could be selected within the budget")
    return _finish("cc", scenario, best_mode, history, params)


def select_sensing_centric(scenario: Scenario, config: NetworkConfig | None = None,
                           params: FpmmParams | None = None) -> SelectionResult:
    """Sensing-centric greedy selection.

    Candidates are scored with the whole budget on null-space radar beams;
    the winner's round is then re-scored with power-min user beams and the
    leftover power on radar beams.
    """
    _check_inputs(scenario)
    cfg = config or scenario.config
    M, K, J = scenario.M, scenario.K, scenario.J
    mode = ModeVector((1,) * J)
    history, best_mode, best_obj = [], None, -np.inf
    while _can_move(mode.n_tx, M, K):
        gammas = {}
        for j in mode.tx_set:
            cand = mode.without(j)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                W_r = nullspace_precoder(scenario, cand.tx_set, cfg.p_max)
            W = np.hstack([np.zeros((J * M, K), dtype=complex), W_r])
            gammas[j] = _score(scenario, cand, W)[1]
        j_star = _argmax(gammas)
        cand = mode.without(j_star)
        try:
            W, _ = _linear_beams(scenario, cand, cfg.gamma)
        except InfeasibleConstraintsError:
            break
        if W is None:
            break
        _, obj = _score(scenario, cand, W)
        history.append({"selected": j_star, "objective": obj, "scores": gammas})
        if obj < best_obj:
            break
        best_mode, best_obj = cand, obj
        mode = cand
    if best_mode is None:
        raise InfeasibleConstraintsError("no receiver could be selected within the budget")
    return _finish("sc", scenario, best_mode, history, params)


def select_joint(scenario: Scenario, config: NetworkConfig | None = None,
                 params: FpmmParams | None = None) -> SelectionResult:
    """Joint selection interleaved with the alternating beamformer updates.

    Candidates are scored with the previous round's beamformer (rows of the
    candidate receiver zeroed) and freshly optimised filters.  After a move
    the filters, weights and beamformer each get one update.
    """
    _check_inputs(scenario)
    cfg = config or scenario.config
    M, K, J = scenario.M, scenario.K, scenario.J
    params = params or FpmmParams()
    mode = ModeVector((1,) * J)
    W = init_beamforming(scenario, mode, tol=params.socp_tol, require_receiver=False).W_bar
    history, best_mode, best_obj = [], None, -np.inf
    while _can_move(mode.n_tx, M, K):
        gammas = {}
        for j in mode.tx_set:
            cand = mode.without(j)
            W_cand = W * cand.row_mask(M)[:, None]
            gammas[j] = _score(scenario, cand, W_cand)[1]
        j_star = _argmax(gammas)
        cand = mode.without(j_star)
        W_start = W * cand.row_mask(M)[:, None]
        mats = assemble_sensing(scenario, cand)
        filters = update_filters(mats, W_start)
        forms = build_quadratic_forms(mats, filters)
        w_start = W_start.reshape(-1, order="F")
        tau = update_tau(w_start, forms)
        try:
            w_new = beamforming_step(w_start, tau, forms, scenario, cand, tol=params.socp_tol)
        except InfeasibleConstraintsError:
            break
        W_new = np.reshape(w_new, (J * M, K + M), order="F")
        _, obj = _score(scenario, cand, W_new)
        history.append({"selected": j_star, "objective": obj, "scores": gammas})
        if obj < best_obj:
            break
        best_mode, best_obj = cand, obj
        mode, W = cand, W_new
    if best_mode is None:
        raise InfeasibleConstraintsError("no receiver could be selected within the budget")
    return _finish("joint", scenario, best_mode, history, params)


def select_random(scenario: Scenario, config: NetworkConfig | None = None, seed: int = 0,
                  params: FpmmParams | None = None) -> SelectionResult:
    """Uniformly random feasible mode, then the alternating optimisation."""
    _check_inputs(scenario)
    rng = np.random.default_rng(seed)
    mode = draw_random_mode(scenario.J, scenario.M, scenario.K, rng)
    return _finish("random", scenario, mode, [], params)


def select_exhaustive(scenario: Scenario, config: NetworkConfig | None = None,
                      params: FpmmParams | None = None,
                      max_J: int = MAX_EXHAUSTIVE_J) -> SelectionResult:
    """Run the alternating optimisation on every feasible mode and keep the best.

    Ties go to fewer transmitters, then to the lexicographically smaller
    mode.  Modes whose SINR targets do not fit the budget are skipped.
    """
    _check_inputs(scenario)
    if scenario.J > max_J:
        raise ValueError(f"exhaustive search refused for J={scenario.J} > {max_J}")
    best, history = None, []
    for mode in feasible_modes(scenario.J, scenario.M, scenario.K):
        try:
            res = _finish("exhaustive", scenario, mode, [], params)
        except InfeasibleConstraintsError:
            history.append({"mode": mode.bits, "objective": None})
            continue
        history.append({"mode": mode.bits, "objective": res.objective})
        key = (res.objective, -mode.n_tx, tuple(-a for a in mode.alpha))
        if best is None or key > best[0]:
            best = (key, res)
    if best is None:
        raise InfeasibleConstraintsError("no feasible mode meets the SINR targets")
    result = best[1]
    result.history = history
    return result


METHODS = {
    "cc": select_comm_centric,
    "sc": select_sensing_centric,
    "joint": select_joint,
    "exhaustive": select_exhaustive,
}
