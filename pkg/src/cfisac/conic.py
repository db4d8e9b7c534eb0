"""Numerical kernels: a real SOCP front end and the top generalized eigenpair.

The SOCP interface speaks in terms of norm constraints
``||A x + b||_2 <= f^T x + d`` and linear equalities; it is mapped onto the
interior-point solver Clarabel.  KKT residuals are recomputed here from the
returned primal/dual pair so the certificate does not depend on the
solver's internal scaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import clarabel
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .exceptions import InvalidProblemError, NumericalDomainError

__all__ = [
    "Cone",
    "SocpProblem",
    "SocpSolution",
    "complex_from_real",
    "max_generalized_eigenpair",
    "real_lift",
    "real_lift_matrix",
    "solve_socp",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max-iter"

KKT_CERTIFIED = 1e-7


@dataclass
class Cone:
    """Constraint ``||A x + b||_2 <= f^T x + d`` (``A`` dense or scipy sparse)."""

    A: object
    b: np.ndarray
    f: np.ndarray
    d: float = 0.0


@dataclass
class SocpProblem:
    """Minimise ``c^T x`` over second-order cones and ``E x = e``."""

    n: int
    c: np.ndarray
    cones: Sequence[Cone]
    E: object = None
    e: np.ndarray | None = None

    def check(self):
        c = np.asarray(self.c, dtype=float)
        if c.shape != (self.n,):
            raise InvalidProblemError(f"c has shape {c.shape}, expected ({self.n},)")
        if not self.cones:
            raise InvalidProblemError("problem needs at least one cone")
        for i, cone in enumerate(self.cones):
            m = np.shape(cone.b)[0]
            if cone.A.shape != (m, self.n):
                raise InvalidProblemError(
                    f"cone {i}: A has shape {cone.A.shape}, expected ({m}, {self.n})")
            if np.shape(cone.f) != (self.n,):
                raise InvalidProblemError(f"cone {i}: f has wrong length")
        if self.E is not None:
            if self.e is None or self.E.shape != (np.shape(self.e)[0], self.n):
                raise InvalidProblemError("equality block E, e is inconsistent")


@dataclass
class SocpSolution:
    x: np.ndarray
    status: str
    kkt_residual: float
    objective: float = np.nan
    iterations: int = 0
    z: np.ndarray = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _dense(A) -> np.ndarray:
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def _stack(problem: SocpProblem):
    """Clarabel standard form ``A x + s = b`` with cone list (A dense)."""
    rows, rhs, cones = [], [], []
    if problem.E is not None and problem.E.shape[0]:
        rows.append(_dense(problem.E))
        rhs.append(np.asarray(problem.e, dtype=float))
        cones.append(clarabel.ZeroConeT(problem.E.shape[0]))
    for cone in problem.cones:
        rows.append(-np.asarray(cone.f, dtype=float)[None, :])
        rows.append(-_dense(cone.A))
        rhs.append(np.concatenate([[float(cone.d)], np.asarray(cone.b, dtype=float)]))
        cones.append(clarabel.SecondOrderConeT(np.shape(cone.b)[0] + 1))
    return np.vstack(rows), np.concatenate(rhs), cones


def _soc_violation(v: np.ndarray) -> float:
    return max(0.0, float(np.linalg.norm(v[1:]) - v[0]))


def kkt_residual(problem: SocpProblem, x, z, stacked=None) -> float:
    """Max of scaled primal infeasibility, dual residual/infeasibility and gap."""
    A, b, _ = stacked if stacked is not None else _stack(problem)
    c = np.asarray(problem.c, dtype=float)
    s = b - A @ x
    scale_b = 1.0 + np.max(np.abs(b))
    scale_c = 1.0 + np.max(np.abs(c))
    primal = 0.0
    dual = float(np.max(np.abs(c + A.T @ z))) / scale_c
    pos = 0
    if problem.E is not None and problem.E.shape[0]:
        m = problem.E.shape[0]
        primal = float(np.max(np.abs(s[:m])))
        pos = m
    for cone in problem.cones:
        m = np.shape(cone.b)[0] + 1
        primal = max(primal, _soc_violation(s[pos:pos + m]))
        dual = max(dual, _soc_violation(z[pos:pos + m]) / scale_c)
        pos += m
    primal /= scale_b
    obj = float(c @ x)
    gap = abs(obj + float(b @ z)) / (1.0 + abs(obj))
    return max(primal, dual, gap)


def solve_socp(problem: SocpProblem, tol: float = 1e-8, max_iter: int = 200) -> SocpSolution:
    """Solve with a primal-dual interior-point method (Clarabel)."""
    problem.check()
    stacked = _stack(problem)
    A, b, cones = stacked
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = max_iter
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.tol_ktratio = min(settings.tol_ktratio, tol * 100)
    settings.max_threads = 1
    n = problem.n
    P = sp.csc_matrix((n, n))
    sol = clarabel.DefaultSolver(P, np.asarray(problem.c, dtype=float),
                                 sp.csc_matrix(A), b, cones, settings).solve()
    status = str(sol.status)
    x = np.asarray(sol.x, dtype=float)
    z = np.asarray(sol.z, dtype=float)
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SocpSolution(x=x, status=INFEASIBLE, kkt_residual=np.inf,
                            iterations=sol.iterations, z=z)
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(z)):
        return SocpSolution(x=x, status=MAX_ITER, kkt_residual=np.inf,
                            iterations=sol.iterations, z=z)
    res = kkt_residual(problem, x, z, stacked)
    certified = status in ("Solved", "AlmostSolved") and res <= KKT_CERTIFIED
    return SocpSolution(x=x, status=OPTIMAL if certified else MAX_ITER,
                        kkt_residual=res, objective=float(problem.c @ x),
                        iterations=sol.iterations, z=z)


# -- complex <-> real lifting -------------------------------------------------

def real_lift(z: np.ndarray) -> np.ndarray:
    """``[Re z; Im z]``."""
    z = np.asarray(z)
    return np.concatenate([z.real, z.imag])


def complex_from_real(x: np.ndarray) -> np.ndarray:
    n = x.shape[0] // 2
    return x[:n] + 1j * x[n:]


def real_lift_matrix(A: np.ndarray) -> np.ndarray:
    """Real matrix R with ``real_lift(A z) = R real_lift(z)``.

    For Hermitian ``P``, ``z^H P z = x^T R x`` with ``x = real_lift(z)``.
    """
    A = np.asarray(A)
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


# -- generalized eigenproblem --------------------------------------------------

def max_generalized_eigenpair(B: np.ndarray, C: np.ndarray):
    """Largest ``lam`` and unit ``v`` with ``B v = lam C v``.

    Uses the Cholesky factor ``C = L L^H`` and a Hermitian eigensolve of
    ``L^{-1} B L^{-H}``.  A zero ``B`` returns ``(0, e_1)``.
    """
    B = 0.5 * (B + B.conj().T)
    C = 0.5 * (C + C.conj().T)
    try:
        Lc = np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise NumericalDomainError("C is not positive definite") from exc
    n = B.shape[0]
    if not np.any(B):
        v = np.zeros(n, dtype=complex)
        v[0] = 1.0
        return 0.0, v
    X = sla.solve_triangular(Lc, B, lower=True)
    X = sla.solve_triangular(Lc, X.conj().T, lower=True).conj().T
    X = 0.5 * (X + X.conj().T)
    w, V = np.linalg.eigh(X)
    y = V[:, -1]
    v = sla.solve_triangular(Lc.conj().T, y, lower=False)
    v = v / np.linalg.norm(v)
    # fix the global phase so the output is reproducible
    idx = np.argmax(np.abs(v))
    v = v * np.exp(-1j * np.angle(v[idx]))
    return float(w[-1]), v
