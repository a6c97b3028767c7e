import numpy as np
import pytest

from diatomic_freeze import ChainParams, PhasePoint, build_basis


def random_state(params, rng, batch=(), scale=0.3, p_scale=None):
    """Random real state with zero total momentum."""
    shape = tuple(batch) + (2 * params.N,)
    m = params.masses
    p = rng.normal(size=shape) * (np.sqrt(m) * scale if p_scale is None else p_scale)
    p -= m * p.sum(axis=-1, keepdims=True) / m.sum()
    return PhasePoint(p, rng.normal(size=shape) * scale)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture
def small_chain():
    return ChainParams(4, 16.0, 1.0, 1.0, 1.0, 1.0)


@pytest.fixture
def small_basis(small_chain):
    return build_basis(small_chain)


ACCEPTANCE_LINES = []


def record_criterion(label, ok, detail):
    """Print one PASS/FAIL line and keep it for the end-of-run summary."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
