import functools

import numpy as np
import pytest

from cfisac.harness import run_trial
from cfisac.model import ModeVector
from cfisac.scenario import NetworkConfig, Scenario, generate_scenario
from cfisac.selection import select_exhaustive

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    def _report(criterion, passed, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
    return _report


@functools.lru_cache(maxsize=None)
def cached_trial(config: NetworkConfig, method: str, seed: int):
    """Trials are pure functions of their arguments; share them across tests."""
    return run_trial(config, method, seed)


@functools.lru_cache(maxsize=None)
def cached_exhaustive(config: NetworkConfig, seed: int):
    return select_exhaustive(generate_scenario(config, seed))


def desk_config(**changes) -> NetworkConfig:
    base = NetworkConfig(J=6, M=2, K=3, L=2, gamma=(10 ** 0.8,), p_max=1.0,
                         sigma_r_sq=1e-11, sigma_c_sq=1e-11)
    return base.replace(**changes).validate() if changes else base.validate()


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def manual_scenario(config: NetworkConfig, rng, h=None, L=None) -> Scenario:
    """Scenario with caller-chosen dimensions (bypasses config validation)."""
    J, K, M = config.J, config.K, config.M
    L = config.L if L is None else L
    return Scenario(
        config=config,
        bs_pos=np.zeros((J, 2)), user_pos=np.zeros((K, 2)), target_pos=np.zeros((L, 2)),
        h=crandn(rng, J, K, M) if h is None else h,
        g=np.zeros((J, J, M, M), dtype=complex),
        theta=rng.uniform(-np.pi / 2, np.pi / 2, (J, L)),
        beta=rng.uniform(0.5, 1.5, (J, L)),
        xi=crandn(rng, J, J, L))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_scenario():
    cfg = desk_config(J=3, M=2, K=2, L=2)
    return generate_scenario(cfg, 11)


@pytest.fixture
def small_mode():
    return ModeVector((1, 0, 1))
