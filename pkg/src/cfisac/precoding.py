"""Linear-precoding subproblems: per-BS power minimisation and null-space radar beams.

Both are used by the FP-MM initialiser and by the mode-selection heuristics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import conic
from .exceptions import InfeasibleConstraintsError, SolverError
from .model import ModeVector
from .scenario import Scenario

__all__ = [
    "PowerMinResult",
    "apply_per_column",
    "nullspace_precoder",
    "nullspace_direction",
    "sinr_cone",
    "solve_power_min",
    "stacked_steering",
]

# SINR targets are tightened by this factor inside every cone program so the
# returned beams meet the original targets despite solver round-off.
GAMMA_MARGIN = 1e-7


def apply_per_column(a: np.ndarray, n_cols: int) -> np.ndarray:
    """Real lift of ``w_hat -> [a^H w_1, ..., a^H w_n]`` (a may be a matrix).

    Rows come out as all real parts first, then all imaginary parts.
    """
    a = np.atleast_2d(np.asarray(a).T).T          # (n_rows, r)
    return conic.real_lift_matrix(np.kron(np.eye(n_cols), a.conj().T))


def sinr_cone(h_r: np.ndarray, n_rows: int, n_cols: int, k: int, gamma: float,
              scale: float, n_extra: int = 0):
    """SOC form of ``SINR_k >= gamma`` over the column-stacked variable.

    With ``y_i = h^H w_i``, the constraint after rotating ``y_k`` onto the
    non-negative real axis reads
    ``sqrt(1 + 1/gamma) Re(y_k) >= ||[y_1 .. y_n, 1/scale]||``
    where ``scale`` has already absorbed the noise level.  Returns the cone
    and the equality row ``Im(y_k) = 0``.
    """
    Y = apply_per_column(h_r, n_cols) * scale                  # (2 n_cols, 2N)
    A = np.zeros((Y.shape[0] + 1, Y.shape[1] + n_extra))
    A[:-1, :Y.shape[1]] = Y
    b = np.zeros(A.shape[0])
    b[-1] = 1.0
    f = np.sqrt(1.0 + 1.0 / gamma) * A[k]
    eq = A[n_cols + k]
    return conic.Cone(A=A, b=b, f=f, d=0.0), eq


@dataclass
class PowerMinResult:
    """Communication beams on the full JM row space and per-BS powers (J,)."""

    W_c: np.ndarray
    powers: np.ndarray
    tx_set: tuple
    kkt_residual: float = 0.0

    @property
    def total(self) -> float:
        return float(self.powers.sum())


def solve_power_min(scenario: Scenario, tx_set, gamma=None, tol: float = 1e-8) -> PowerMinResult:
    """Minimise the sum of per-BS powers subject to every user's SINR target.

    Interference counts only the K communication columns.  Raises
    :class:`InfeasibleConstraintsError` when the cone program is infeasible.
    """
    cfg = scenario.config
    M, K, J = scenario.M, scenario.K, scenario.J
    tx = tuple(sorted(tx_set))
    if len(tx) * M < K:
        raise InfeasibleConstraintsError(
            f"{len(tx)} transmitters x {M} antennas cannot serve {K} users")
    gamma = np.broadcast_to(np.asarray(cfg.gamma if gamma is None else gamma,
                                       dtype=float), (K,))
    n_t = len(tx) * M
    N = n_t * K
    H = np.concatenate([scenario.h[j] for j in tx], axis=1).T      # (n_t, K)

    # variables: w = sqrt(s0) * w', P = s0 * P'; s0 is the matched-filter
    # lower bound on the optimum so everything is O(1)
    norms = np.sum(np.abs(H) ** 2, axis=0)
    s0 = float(np.sum(gamma * cfg.sigma_c_sq / norms))
    n_var = 2 * N + len(tx)
    cones, eq_rows = [], []
    for k in range(K):
        cone, eq = sinr_cone(H[:, k], n_t, K, k, gamma[k] * (1 + GAMMA_MARGIN),
                             np.sqrt(s0 / cfg.sigma_c_sq), n_extra=len(tx))
        cones.append(cone)
        eq_rows.append(eq)
    # ||W_{c,j}||_F^2 <= P_j as rotated cones ||[2 w_j; 1 - P_j]|| <= 1 + P_j
    for b_idx in range(len(tx)):
        rows = np.arange(b_idx * M, (b_idx + 1) * M)
        cols = (np.arange(K)[:, None] * n_t + rows[None, :]).ravel()
        sel = np.concatenate([cols, N + cols])
        m = sel.size
        A = np.zeros((m + 1, n_var))
        A[np.arange(m), sel] = 2.0
        A[m, 2 * N + b_idx] = -1.0
        b = np.zeros(m + 1)
        b[-1] = 1.0
        f = np.zeros(n_var)
        f[2 * N + b_idx] = 1.0
        cones.append(conic.Cone(A=A, b=b, f=f, d=1.0))
    c = np.zeros(n_var)
    c[2 * N:] = 1.0
    problem = conic.SocpProblem(n=n_var, c=c, cones=cones,
                                E=np.vstack(eq_rows), e=np.zeros(K))
    sol = conic.solve_socp(problem, tol=tol)
    if sol.status == conic.INFEASIBLE:
        raise InfeasibleConstraintsError("SINR targets unreachable")
    if sol.status != conic.OPTIMAL and not np.isfinite(sol.kkt_residual):
        raise SolverError("power minimisation did not converge")

    w = conic.complex_from_real(sol.x[:2 * N]) * np.sqrt(s0)
    W_r = w.reshape(n_t, K, order="F")
    W_c = np.zeros((J * M, K), dtype=complex)
    powers = np.zeros(J)
    for b_idx, j in enumerate(tx):
        blk = W_r[b_idx * M:(b_idx + 1) * M]
        W_c[j * M:(j + 1) * M] = blk
        powers[j] = np.vdot(blk, blk).real
    return PowerMinResult(W_c=W_c, powers=powers, tx_set=tx,
                          kkt_residual=sol.kkt_residual)


def stacked_steering(scenario: Scenario, tx_set, l: int) -> np.ndarray:
    """``[a(theta_{j,l})]_{j in T}`` stacked into one vector."""
    return np.concatenate([scenario.steering(j, l) for j in tx_set])


def nullspace_direction(H: np.ndarray, steering: list, atol: float = 1e-12):
    """Sum of the unit-normalised projections of each steering vector onto null(H^H).

    Returns ``(w_au, n_used)``; terms whose projection has norm below ``atol``
    (relative to the steering norm) are skipped.
    """
    n = steering[0].shape[0]
    basis = sla.orth(H) if H.shape[1] else np.zeros((n, 0))
    w_au = np.zeros(n, dtype=complex)
    used = 0
    for a in steering:
        p = a - basis @ (basis.conj().T @ a)
        norm = np.linalg.norm(p)
        if norm == 0 or norm < atol * np.linalg.norm(a):
            continue
        w_au += p / norm
        used += 1
    return w_au, used


def nullspace_precoder(scenario: Scenario, tx_set, P: float) -> np.ndarray:
    """Radar beams ``sqrt(P/M) w_au/||w_au|| (x) 1_M^T`` on the full JM rows.

    ``w_au`` is orthogonal to every user channel restricted to the
    transmitters, so the radar columns cause no user interference.  A
    degenerate direction (e.g. ``|T| M <= K``) yields an all-zero block and
    a :class:`RuntimeWarning`.
    """
    if P < 0:
        raise ValueError("sensing power must be non-negative")
    M, J = scenario.M, scenario.J
    tx = tuple(sorted(tx_set))
    W_r = np.zeros((J * M, M), dtype=complex)
    if P == 0 or not tx:
        return W_r
    H = np.concatenate([scenario.h[j] for j in tx], axis=1).T
    steering = [stacked_steering(scenario, tx, l) for l in range(scenario.L)]
    w_au, _ = nullspace_direction(H, steering)
    norm = np.linalg.norm(w_au)
    if norm < 1e-12 * max(np.linalg.norm(s) for s in steering):
        warnings.warn("null-space precoder is degenerate; radar beams set to zero",
                      RuntimeWarning, stacklevel=2)
        return W_r
    col = np.sqrt(P / M) * w_au / norm
    rows = ModeVector.from_tx(tx, J).tx_rows(M)
    W_r[rows] = col[:, None]
    return W_r
