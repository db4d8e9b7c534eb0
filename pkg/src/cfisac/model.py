"""Mode vectors, beamformers, receive filters and the SINR evaluations.

Index conventions follow the stacked notation used throughout the package:
the transmit matrix ``W_bar`` is ``JM x (K+M)`` (BS blocks of M rows; the
first K columns carry user streams, the last M the radar waveforms), its
column-major vectorisation is ``w_hat``, and each receive filter ``u_l`` is a
length-JM vector split into J blocks of M entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import InvalidFilterError, ModeInfeasibleError
from .scenario import Scenario, steering_vector

__all__ = [
    "Beamformer",
    "FilterBank",
    "ModeVector",
    "QuadraticForms",
    "SensingMatrices",
    "assemble_sensing",
    "build_quadratic_forms",
    "comm_sinr",
    "comm_sinrs",
    "effective_channel",
    "effective_channels",
    "sensing_sinr",
    "sum_sensing_sinr",
]


@dataclass(frozen=True)
class ModeVector:
    """Binary Tx/Rx assignment; ``alpha[j] == 1`` means BS j transmits."""

    alpha: tuple

    def __post_init__(self):
        alpha = tuple(int(a) for a in self.alpha)
        if any(a not in (0, 1) for a in alpha):
            raise ValueError("alpha entries must be 0 or 1")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def from_tx(cls, tx, J: int) -> "ModeVector":
        tx = set(tx)
        return cls(tuple(int(j in tx) for j in range(J)))

    @property
    def J(self) -> int:
        return len(self.alpha)

    @property
    def n_tx(self) -> int:
        return sum(self.alpha)

    @property
    def tx_set(self) -> tuple:
        return tuple(j for j, a in enumerate(self.alpha) if a)

    @property
    def rx_set(self) -> tuple:
        return tuple(j for j, a in enumerate(self.alpha) if not a)

    @property
    def bits(self) -> str:
        return "".join(str(a) for a in self.alpha)

    def is_feasible(self, M: int, K: int) -> bool:
        """At least one Tx, enough Tx antennas for K users, at least one Rx."""
        n = self.n_tx
        return n >= 1 and M * n >= K and n <= self.J - 1

    def require_feasible(self, M: int, K: int) -> "ModeVector":
        if not self.is_feasible(M, K):
            raise ModeInfeasibleError(
                f"mode {self.bits} violates Tx/Rx count constraints (M={M}, K={K})")
        return self

    def without(self, j: int) -> "ModeVector":
        """Copy with BS j switched to receive mode."""
        alpha = list(self.alpha)
        alpha[j] = 0
        return ModeVector(tuple(alpha))

    def tx_rows(self, M: int) -> np.ndarray:
        """Indices of the rows of ``W_bar`` owned by transmitters."""
        return np.concatenate([np.arange(j * M, (j + 1) * M) for j in self.tx_set]
                              ) if self.n_tx else np.zeros(0, dtype=int)

    def rx_rows(self, M: int) -> np.ndarray:
        """Indices of filter entries owned by receivers."""
        rx = self.rx_set
        return np.concatenate([np.arange(j * M, (j + 1) * M) for j in rx]
                              ) if rx else np.zeros(0, dtype=int)

    def row_mask(self, M: int) -> np.ndarray:
        return np.repeat(np.asarray(self.alpha, dtype=float), M)


@dataclass(frozen=True, eq=False)
class Beamformer:
    """Stacked transmit matrix ``W_bar`` (JM x (K+M))."""

    W_bar: np.ndarray
    K: int

    @classmethod
    def zeros(cls, J: int, M: int, K: int) -> "Beamformer":
        return cls(np.zeros((J * M, K + M), dtype=complex), K)

    @classmethod
    def from_w_hat(cls, w_hat: np.ndarray, JM: int, K: int) -> "Beamformer":
        return cls(np.reshape(w_hat, (JM, -1), order="F"), K)

    @property
    def w_hat(self) -> np.ndarray:
        """Column-stacked vector ``[w_1; ...; w_{K+M}]``."""
        return self.W_bar.reshape(-1, order="F")

    @property
    def comm(self) -> np.ndarray:
        return self.W_bar[:, :self.K]

    @property
    def radar(self) -> np.ndarray:
        return self.W_bar[:, self.K:]

    def power(self, mode: ModeVector | None = None) -> float:
        """Transmit power ``w_hat^H Omega w_hat``."""
        W = self.W_bar
        if mode is not None:
            W = W * mode.row_mask(W.shape[0] // mode.J)[:, None]
        return float(np.vdot(W, W).real)


@dataclass(frozen=True, eq=False)
class FilterBank:
    """Receive filters, one row ``u[l]`` of length JM per target."""

    u: np.ndarray

    @property
    def L(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True, eq=False)
class SensingMatrices:
    """Masked target responses and inter-BS interference for a fixed mode."""

    mode: ModeVector
    M: int
    K: int
    A_hat: np.ndarray   # (L, JM, JM)
    G_hat: np.ndarray   # (JM, JM)
    sigma_r_sq: float

    @property
    def L(self) -> int:
        return self.A_hat.shape[0]

    @property
    def JM(self) -> int:
        return self.G_hat.shape[0]

    @cached_property
    def Q(self) -> np.ndarray:
        q = np.repeat((1.0 - np.asarray(self.mode.alpha, dtype=float)) ** 2, self.M)
        return np.diag(q)

    @cached_property
    def nu(self) -> np.ndarray:
        return np.tile(self.mode.row_mask(self.M), self.K + self.M)

    @property
    def Omega(self) -> np.ndarray:
        return np.diag(self.nu)

    def B(self, l: int, W_bar) -> np.ndarray:
        X = self.A_hat[l] @ _as_matrix(W_bar)
        return X @ X.conj().T

    def C(self, l: int, W_bar) -> np.ndarray:
        W = _as_matrix(W_bar)
        C = self.sigma_r_sq * self.Q.astype(complex)
        for s in range(self.L):
            if s != l:
                X = self.A_hat[s] @ W
                C += X @ X.conj().T
        Y = self.G_hat.T @ W
        return C + Y @ Y.conj().T


def _as_matrix(W_bar) -> np.ndarray:
    return W_bar.W_bar if isinstance(W_bar, Beamformer) else np.asarray(W_bar)


def steering_stack(scenario: Scenario) -> np.ndarray:
    """All steering vectors, shape (J, L, M)."""
    cfg = scenario.config
    return steering_vector(scenario.theta[..., None], scenario.beta[..., None],
                           scenario.M, cfg.d, cfg.lam)


def assemble_sensing(scenario: Scenario, mode: ModeVector,
                     check: bool = True) -> SensingMatrices:
    """Build the masked target matrices ``A_hat_l`` and interference ``G_hat``.

    Block (j, i) of ``A_hat_l`` is ``(1-alpha_j) alpha_i xi_{j,i,l} a_j a_i^T``
    and block (i, j) of ``G_hat`` is ``alpha_i (1-alpha_j) G_{i,j}``.
    ``check=False`` skips the mode feasibility test (diagnostics only).
    """
    J, M, K = scenario.J, scenario.M, scenario.K
    if check:
        mode.require_feasible(M, K)
    alpha = np.asarray(mode.alpha, dtype=float)
    a = steering_stack(scenario)
    mask = (1.0 - alpha)[:, None] * alpha[None, :]               # (j, i)
    coef = scenario.xi * mask[:, :, None]                          # (j, i, l)
    A = np.einsum("jil,jlm,iln->ljmin", coef, a, a)
    A_hat = A.reshape(scenario.L, J * M, J * M)
    G = scenario.g * mask.T[:, :, None, None]                      # (i, j, m, n)
    G_hat = G.transpose(0, 2, 1, 3).reshape(J * M, J * M)
    return SensingMatrices(mode=mode, M=M, K=K, A_hat=A_hat, G_hat=G_hat,
                           sigma_r_sq=scenario.config.sigma_r_sq)


def effective_channel(scenario: Scenario, mode: ModeVector, k: int) -> np.ndarray:
    """Concatenation over j of ``alpha_j h_{j,k}``."""
    alpha = np.asarray(mode.alpha, dtype=float)
    return (alpha[:, None] * scenario.h[:, k, :]).reshape(-1)


def effective_channels(scenario: Scenario, mode: ModeVector) -> np.ndarray:
    """All effective channels as columns, shape (JM, K)."""
    alpha = np.asarray(mode.alpha, dtype=float)
    H = alpha[:, None, None] * scenario.h            # (J, K, M)
    return H.transpose(0, 2, 1).reshape(-1, scenario.K)


def comm_sinrs(scenario: Scenario, mode: ModeVector, W_bar) -> np.ndarray:
    """SINR of every user; interference counts all other columns, radar included."""
    W = _as_matrix(W_bar)
    H = effective_channels(scenario, mode)
    R = np.abs(H.conj().T @ W) ** 2                   # (K, K+M)
    K = scenario.K
    signal = R[np.arange(K), np.arange(K)]
    interference = R.sum(axis=1) - signal
    return signal / (interference + scenario.config.sigma_c_sq)


def comm_sinr(scenario: Scenario, mode: ModeVector, W_bar, k: int) -> float:
    if not 0 <= k < scenario.K:
        raise IndexError(f"user index {k} out of range")
    return float(comm_sinrs(scenario, mode, W_bar)[k])


def sensing_sinr(mats: SensingMatrices, W_bar, u_l: np.ndarray, l: int) -> float:
    """Generalised Rayleigh quotient ``u^H B_l u / u^H C_l u``."""
    u = np.asarray(u_l)
    if not np.any(u[mats.mode.rx_rows(mats.M)]):
        raise InvalidFilterError("filter is zero on every receiver block")
    W = _as_matrix(W_bar)
    num = np.linalg.norm(u.conj() @ mats.A_hat[l] @ W) ** 2
    den = mats.sigma_r_sq * np.vdot(u, mats.Q @ u).real
    for s in range(mats.L):
        if s != l:
            den += np.linalg.norm(u.conj() @ mats.A_hat[s] @ W) ** 2
    den += np.linalg.norm(u.conj() @ mats.G_hat.T @ W) ** 2
    return float(num / den)


def sum_sensing_sinr(mats: SensingMatrices, W_bar, filters: FilterBank) -> float:
    """Objective: sum of the per-target sensing SINRs."""
    return float(sum(sensing_sinr(mats, W_bar, filters.u[l], l)
                     for l in range(mats.L)))


@dataclass(frozen=True, eq=False)
class QuadraticForms:
    """Filter-dependent quadratic forms in ``w_hat``, held implicitly.

    ``v[l, s] = A_hat_s^H u_l`` and ``g[l] = conj(G_hat) u_l``, so that
    ``w_hat^H D_{l,s} w_hat = sum_i |v[l,s]^H w_i|^2`` and similarly for F_l.
    """

    v: np.ndarray     # (L, L, JM)
    g: np.ndarray     # (L, JM)
    c_r: np.ndarray   # (L,)
    n_cols: int

    @property
    def L(self) -> int:
        return self.v.shape[0]

    def _cols(self, w_hat):
        return np.reshape(w_hat, (self.v.shape[2], self.n_cols), order="F")

    def d(self, l: int, s: int, w_hat) -> float:
        return float(np.sum(np.abs(self.v[l, s].conj() @ self._cols(w_hat)) ** 2))

    def f(self, l: int, w_hat) -> float:
        return float(np.sum(np.abs(self.g[l].conj() @ self._cols(w_hat)) ** 2))

    def numerators(self, w_hat) -> np.ndarray:
        return np.array([self.d(l, l, w_hat) for l in range(self.L)])

    def interference(self, w_hat) -> np.ndarray:
        """``sum_{s!=l} w^H D_{l,s} w + w^H F_l w`` for every l."""
        out = np.empty(self.L)
        for l in range(self.L):
            out[l] = sum(self.d(l, s, w_hat) for s in range(self.L) if s != l)
            out[l] += self.f(l, w_hat)
        return out

    def ratios(self, w_hat) -> np.ndarray:
        return self.numerators(w_hat) / (self.interference(w_hat) + self.c_r)

    def D_explicit(self, l: int, s: int) -> np.ndarray:
        v = self.v[l, s]
        return np.kron(np.eye(self.n_cols), np.outer(v, v.conj()))

    def F_explicit(self, l: int) -> np.ndarray:
        g = self.g[l]
        return np.kron(np.eye(self.n_cols), np.outer(g, g.conj()))


def build_quadratic_forms(mats: SensingMatrices, filters: FilterBank) -> QuadraticForms:
    u = filters.u
    # v[l, s] = A_s^H u_l
    v = np.einsum("sji,lj->lsi", mats.A_hat.conj(), u)
    g = mats.G_hat.conj() @ u.T
    c_r = mats.sigma_r_sq * np.einsum("li,ij,lj->l", u.conj(), mats.Q, u).real
    return QuadraticForms(v=v, g=g.T, c_r=c_r, n_cols=mats.K + mats.M)
