"""Random network instances for the cooperative cell-free ISAC simulator.

BSs, users and targets are dropped uniformly in a disc; every link gets a
distance-dependent path gain and i.i.d. Rayleigh small-scale fading.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InvalidConfigError

__all__ = [
    "NetworkConfig",
    "Scenario",
    "db_to_linear",
    "dbm_to_watts",
    "generate_scenario",
    "path_gain",
    "steering_vector",
]


def db_to_linear(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def dbm_to_watts(x):
    return 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class NetworkConfig:
    """Scalar parameters of one network (all quantities linear / SI).

    ``gamma`` holds one SINR target per user; a scalar passed at
    construction is broadcast to length ``K``.
    """

    J: int = 6
    K: int = 3
    L: int = 2
    M: int = 2
    lam: float = 0.1
    d: float | None = None
    sigma_t_sq: float = 1.0
    sigma_r_sq: float = 1e-11
    sigma_c_sq: float = 1e-11
    gamma: tuple = (10.0 ** 0.8,)
    p_max: float = 1.0
    radius: float = 100.0
    pl_exp_bt: float = 2.2
    pl_exp_bu: float = 2.5
    pl_exp_bb: float = 3.8
    ref_gain: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.d is None:
            object.__setattr__(self, "d", self.lam / 2)
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if gamma.size == 1 and self.K != 1:
            gamma = np.full(self.K, gamma[0])
        object.__setattr__(self, "gamma", tuple(float(g) for g in gamma))

    # -- validation ---------------------------------------------------------
    def validate(self) -> "NetworkConfig":
        """Raise :class:`InvalidConfigError` unless every invariant holds."""
        for name in ("J", "K", "L", "M"):
            if int(getattr(self, name)) != getattr(self, name):
                raise InvalidConfigError(f"{name} must be an integer")
        if self.J < 2:
            raise InvalidConfigError("need at least two BSs (one Tx and one Rx)")
        if self.K < 1 or self.L < 1 or self.M < 1:
            raise InvalidConfigError("K, L and M must be positive")
        if self.J * self.M <= self.K:
            raise InvalidConfigError(
                f"J*M = {self.J * self.M} must exceed K = {self.K}")
        if len(self.gamma) != self.K:
            raise InvalidConfigError(
                f"gamma has {len(self.gamma)} entries, expected K = {self.K}")
        positive = ("lam", "d", "sigma_t_sq", "sigma_r_sq", "sigma_c_sq",
                    "p_max", "radius", "ref_gain")
        for name in positive:
            if not getattr(self, name) > 0:
                raise InvalidConfigError(f"{name} must be strictly positive")
        if min(self.gamma) <= 0:
            raise InvalidConfigError("SINR targets must be strictly positive")
        return self

    # -- derived copies -----------------------------------------------------
    def replace(self, **changes) -> "NetworkConfig":
        """Copy with fields replaced; ``gamma`` is re-broadcast when K changes."""
        if "K" in changes and "gamma" not in changes:
            if len(set(self.gamma)) != 1:
                raise InvalidConfigError(
                    "cannot change K with heterogeneous SINR targets")
            changes["gamma"] = (self.gamma[0],)
        if "lam" in changes and "d" not in changes:
            changes["d"] = None
        return dataclasses.replace(self, **changes)

    # -- I/O ----------------------------------------------------------------
    @classmethod
    def from_dict(cls, doc: dict) -> "NetworkConfig":
        """Build from a JSON-style mapping.

        Keys ending in ``_dbm`` are read as dBm and converted to watts; keys
        ending in ``_db`` are read as dB and converted to linear.  The
        suffix is stripped, so ``gamma_db`` fills ``gamma``.
        """
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in doc.items():
            if key.endswith("_dbm"):
                base, value = key[:-4], dbm_to_watts(value)
            elif key.endswith("_db"):
                base, value = key[:-3], db_to_linear(value)
            else:
                base = key
            if base == "lambda":
                base = "lam"
            if base not in names:
                raise InvalidConfigError(f"unknown config key {key!r}")
            if base in kwargs:
                raise InvalidConfigError(f"{base!r} given twice")
            if isinstance(value, np.ndarray):
                value = value.tolist() if value.ndim else float(value)
            kwargs[base] = value
        return cls(**kwargs).validate()

    @classmethod
    def from_json(cls, path) -> "NetworkConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["gamma"] = list(self.gamma)
        return doc


@dataclass(frozen=True, eq=False)
class Scenario:
    """One random draw of geometry, channels and target parameters.

    Array layouts (0-based indices):

    * ``h[j, k]``        channel from BS j to user k, length M
    * ``g[i, j]``        M x M channel from Tx BS i to Rx BS j, ``g[i, i] = 0``
    * ``theta[j, l]``    azimuth of target l seen from BS j (broadside = 0)
    * ``beta[j, l]``     amplitude path gain BS j <-> target l
    * ``xi[j, i, l]``    RCS of target l on the path BS i -> target -> BS j
    """

    config: NetworkConfig
    bs_pos: np.ndarray
    user_pos: np.ndarray
    target_pos: np.ndarray
    h: np.ndarray
    g: np.ndarray
    theta: np.ndarray
    beta: np.ndarray
    xi: np.ndarray
    seed: int = 0

    arrays = ("bs_pos", "user_pos", "target_pos", "h", "g", "theta", "beta",
              "xi")

    def __post_init__(self):
        for name in self.arrays:
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def J(self) -> int:
        return self.h.shape[0]

    @property
    def K(self) -> int:
        return self.h.shape[1]

    @property
    def M(self) -> int:
        return self.h.shape[2]

    @property
    def L(self) -> int:
        return self.theta.shape[1]

    def steering(self, j: int, l: int) -> np.ndarray:
        """Steering vector a(theta_{j,l}) including the path gain beta_{j,l}."""
        cfg = self.config
        return steering_vector(self.theta[j, l], self.beta[j, l], self.M,
                               cfg.d, cfg.lam)

    def equals(self, other: "Scenario") -> bool:
        """Field-by-field bitwise equality."""
        return self.config == other.config and all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in self.arrays)


def path_gain(dist, exponent, ref_gain):
    """Power gain ``ref_gain * dist**-exponent`` with distance clamped at 1 m."""
    dist = np.asarray(dist, dtype=float)
    if np.any(dist <= 0):
        raise ValueError("distance must be positive")
    return ref_gain * np.maximum(dist, 1.0) ** (-exponent)


def steering_vector(theta, beta, M, d, lam):
    """ULA response ``beta * exp(1j*2*pi/lam * m*d*sin(theta))``, m = 0..M-1."""
    m = np.arange(M)
    return beta * np.exp(1j * 2 * np.pi / lam * m * d * np.sin(theta))


def _uniform_disc(rng, n, radius):
    r = radius * np.sqrt(rng.random(n))
    phi = 2 * np.pi * rng.random(n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def _crandn(rng, shape):
    # real/imag interleaved so a longer draw extends a shorter one
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    x = rng.standard_normal(shape + (2,))
    return (x[..., 0] + 1j * x[..., 1]) / np.sqrt(2)


# stream tags for per-entity draws
_BS, _USER, _TARGET, _H, _G, _XI = range(6)


def _stream(seed: int, tag: int, *index: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag, *index])


def generate_scenario(config: NetworkConfig, seed: int | None = None) -> Scenario:
    """Draw a scenario; identical ``(config, seed)`` give identical output.

    Every BS, user, target and link draws from its own stream keyed by
    ``(seed, kind, indices)``, so growing J, K or L under the same seed adds
    entities to an otherwise unchanged network (paired sweep points).
    """
    config.validate()
    if seed is None:
        seed = config.seed
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    J, K, L, M = config.J, config.K, config.L, config.M
    R = config.radius

    bs = np.vstack([_uniform_disc(_stream(seed, _BS, j), 1, R) for j in range(J)])
    users = np.vstack([_uniform_disc(_stream(seed, _USER, k), 1, R) for k in range(K)]
                      ) if K else np.zeros((0, 2))
    targets = np.vstack([_uniform_disc(_stream(seed, _TARGET, l), 1, R) for l in range(L)]
                        ) if L else np.zeros((0, 2))

    d_bu = np.linalg.norm(bs[:, None, :] - users[None, :, :], axis=-1)
    gain_bu = path_gain(d_bu, config.pl_exp_bu, config.ref_gain)
    fading = np.zeros((J, K, M), dtype=complex)
    for j in range(J):
        for k in range(K):
            fading[j, k] = _crandn(_stream(seed, _H, j, k), M)
    h = np.sqrt(gain_bu)[..., None] * fading

    d_bb = np.linalg.norm(bs[:, None, :] - bs[None, :, :], axis=-1)
    np.fill_diagonal(d_bb, 1.0)
    gain_bb = path_gain(d_bb, config.pl_exp_bb, config.ref_gain)
    g = np.zeros((J, J, M, M), dtype=complex)
    for i in range(J):
        for j in range(J):
            if i != j:
                g[i, j] = np.sqrt(gain_bb[i, j]) * _crandn(_stream(seed, _G, i, j), (M, M))

    # arrays lie along the x axis, broadside along +y
    delta = targets[None, :, :] - bs[:, None, :]
    theta = np.arctan2(delta[..., 0], delta[..., 1])
    beta = np.sqrt(path_gain(np.linalg.norm(delta, axis=-1), config.pl_exp_bt,
                             config.ref_gain))

    xi = np.zeros((J, J, L), dtype=complex)
    for j in range(J):
        for i in range(J):
            xi[j, i] = _crandn(_stream(seed, _XI, j, i), L)
    xi *= np.sqrt(config.sigma_t_sq)

    return Scenario(config=config, bs_pos=bs, user_pos=users,
                    target_pos=targets, h=h, g=g, theta=theta, beta=beta,
                    xi=xi, seed=seed)


def load_config(path: str | Path) -> NetworkConfig:
    return NetworkConfig.from_json(path)
