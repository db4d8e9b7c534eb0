"""Monte Carlo trials and parameter sweeps with CSV/JSON output.

Trial ``t`` of every sweep point and every method uses scenario seed
``seed0 + t``, so methods are always compared on identical networks.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (InfeasibleConstraintsError, InvalidConfigError, ModeInfeasibleError,
                         NumericalDomainError, SolverError)
from .fpmm import FpmmParams
from .model import Beamformer, FilterBank, ModeVector, assemble_sensing, comm_sinrs, sum_sensing_sinr
from .scenario import NetworkConfig, db_to_linear, generate_scenario
from .selection import MAX_EXHAUSTIVE_J, METHODS, select_random

log = logging.getLogger(__name__)

__all__ = [
    "CSV_HEADER",
    "SweepSpec",
    "TrialRecord",
    "aggregate",
    "emit_results",
    "load_records",
    "recompute_objective",
    "run_sweep",
    "run_trial",
]

METHOD_NAMES = ("cc", "sc", "joint", "random", "exhaustive")
AXES = ("num_bs", "gamma_db", "num_users")
CSV_HEADER = ["method", "axis", "value", "seed", "status", "objective_db", "rounds",
              "wall_ms", "mode_bits"]

OK, INFEASIBLE, SOLVER_FAIL = "ok", "infeasible", "solver-fail"


@dataclass
class TrialRecord:
    method: str
    seed: int
    status: str
    axis: str | None = None
    value: float | None = None
    objective: float | None = None
    objective_db: float | None = None
    comm_sinrs: list = field(default_factory=list)
    mode_bits: str = ""
    rounds: int = 0
    iterations: int = 0
    wall_ms: float = 0.0
    message: str = ""
    config: dict = field(default_factory=dict)
    w_hat: list = field(default_factory=list, repr=False)
    filters: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrialRecord":
        return cls(**doc)

    def sort_key(self):
        return (_method_rank(self.method), self.value if self.value is not None else 0.0,
                self.seed)


def _method_rank(method: str) -> int:
    return METHOD_NAMES.index(method) if method in METHOD_NAMES else len(METHOD_NAMES)


def _pack(z: np.ndarray) -> list:
    return [[float(v.real), float(v.imag)] for v in np.ravel(z)]


def _unpack(pairs: list) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return arr[:, 0] + 1j * arr[:, 1]


def run_trial(config: NetworkConfig, method: str, seed: int, axis: str | None = None,
              value: float | None = None, params: FpmmParams | None = None) -> TrialRecord:
    """Run one method on the scenario drawn from ``seed``; failures become data."""
    if method not in METHOD_NAMES:
        raise ValueError(f"unknown method {method!r}")
    config.validate()
    record = TrialRecord(method=method, seed=int(seed), status=OK, axis=axis, value=value,
                         config=config.to_dict())
    start = time.perf_counter()
    try:
        scenario = generate_scenario(config, seed)
        if method == "random":
            result = select_random(scenario, seed=seed, params=params)
        else:
            result = METHODS[method](scenario, params=params)
    except (InfeasibleConstraintsError, ModeInfeasibleError) as exc:
        record.status, record.message = INFEASIBLE, str(exc)
    except (SolverError, NumericalDomainError, np.linalg.LinAlgError) as exc:
        record.status, record.message = SOLVER_FAIL, str(exc)
    else:
        mats = assemble_sensing(scenario, result.mode)
        obj = sum_sensing_sinr(mats, result.beamformer, result.filters)
        record.objective = obj
        record.objective_db = float(10 * np.log10(obj)) if obj > 0 else float("-inf")
        record.comm_sinrs = [float(x) for x in comm_sinrs(scenario, result.mode,
                                                          result.beamformer)]
        record.mode_bits = result.mode.bits
        record.rounds = result.rounds
        record.iterations = result.trace.iterations if result.trace else 0
        record.w_hat = _pack(result.beamformer.w_hat)
        record.filters = _pack(result.filters.u)
    record.wall_ms = 1e3 * (time.perf_counter() - start)
    return record


def recompute_objective(record: TrialRecord) -> float:
    """Objective re-evaluated from the stored mode, beamformer and filters."""
    config = NetworkConfig(**record.config)
    scenario = generate_scenario(config, record.seed)
    mode = ModeVector(tuple(int(c) for c in record.mode_bits))
    JM, K = config.J * config.M, config.K
    beam = Beamformer.from_w_hat(_unpack(record.w_hat), JM, K)
    filters = FilterBank(_unpack(record.filters).reshape(config.L, JM))
    return sum_sensing_sinr(assemble_sensing(scenario, mode), beam, filters)


@dataclass
class SweepSpec:
    base: NetworkConfig
    sweep_axis: str
    values: list
    methods: list
    trials: int = 30
    seed0: int = 0

    def __post_init__(self):
        if self.sweep_axis not in AXES:
            raise InvalidConfigError(f"sweep_axis must be one of {AXES}")
        if not self.values:
            raise InvalidConfigError("sweep values must be non-empty")
        if self.trials < 1:
            raise InvalidConfigError("trials must be >= 1")
        unknown = set(self.methods) - set(METHOD_NAMES)
        if unknown or not self.methods:
            raise InvalidConfigError(f"unknown methods {sorted(unknown)}")
        for v in self.values:
            self.config_at(v).validate()
            if "exhaustive" in self.methods and self.config_at(v).J > MAX_EXHAUSTIVE_J:
                raise InvalidConfigError(
                    f"exhaustive search needs J <= {MAX_EXHAUSTIVE_J} at every sweep point")

    def config_at(self, value) -> NetworkConfig:
        if self.sweep_axis == "num_bs":
            return self.base.replace(J=int(value))
        if self.sweep_axis == "num_users":
            return self.base.replace(K=int(value))
        return self.base.replace(gamma=(float(db_to_linear(value)),))

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepSpec":
        doc = dict(doc)
        base = doc.pop("base", {})
        base = base if isinstance(base, NetworkConfig) else NetworkConfig.from_dict(base)
        try:
            return cls(base=base, **doc)
        except TypeError as exc:
            raise InvalidConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "SweepSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _run_job(job):
    return run_trial(*job)


def run_sweep(spec: SweepSpec, workers: int = 1, params: FpmmParams | None = None):
    """Every (value, method, trial) combination; returns ``(records, table)``."""
    jobs = []
    for value in spec.values:
        config = spec.config_at(value)
        for method in spec.methods:
            for t in range(spec.trials):
                jobs.append((config, method, spec.seed0 + t, spec.sweep_axis, value, params))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_job, jobs, chunksize=1))
    else:
        records = [_run_job(job) for job in jobs]
    records.sort(key=TrialRecord.sort_key)
    return records, aggregate(records)


def aggregate(records) -> list:
    """Per (method, value): count, mean and standard error over ok trials."""
    groups = {}
    for r in records:
        groups.setdefault((r.method, r.axis, r.value), []).append(r)
    table = []
    for (method, axis, value), rs in sorted(groups.items(),
                                            key=lambda kv: (_method_rank(kv[0][0]),
                                                            kv[0][2] if kv[0][2] is not None else 0)):
        objs = np.array([r.objective for r in rs if r.status == OK], dtype=float)
        n = objs.size
        mean = float(objs.mean()) if n else None
        sem = float(objs.std(ddof=1) / np.sqrt(n)) if n > 1 else None
        table.append({"method": method, "axis": axis, "value": value, "trials": len(rs),
                      "ok": int(n), "mean": mean, "sem": sem,
                      "mean_db": float(10 * np.log10(mean)) if mean and mean > 0 else None})
    return table


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.9g}"


def emit_results(records, path, fmt: str = "both", table=None, timing: bool = False):
    """Write ``results.csv`` and/or ``results.json`` under directory ``path``.

    The CSV leaves ``wall_ms`` empty unless ``timing`` is set, so repeated
    runs produce byte-identical files.
    """
    if fmt not in ("csv", "json", "both"):
        raise ValueError("format must be csv, json or both")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("csv", "both"):
        target = out / "results.csv"
        with open(target, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for r in records:
                writer.writerow([r.method, r.axis or "", _fmt(r.value), r.seed, r.status,
                                 _fmt(r.objective_db) if r.status == OK else "",
                                 r.rounds, _fmt(r.wall_ms) if timing else "", r.mode_bits])
        written.append(target)
    if fmt in ("json", "both"):
        target = out / "results.json"
        doc = {"records": [r.to_dict() for r in records],
               "aggregate": table if table is not None else aggregate(records)}
        with open(target, "w") as fh:
            json.dump(doc, fh, indent=1)
        written.append(target)
    return written


def load_records(path) -> list:
    with open(path) as fh:
        doc = json.load(fh)
    return [TrialRecord.from_dict(d) for d in doc["records"]]
