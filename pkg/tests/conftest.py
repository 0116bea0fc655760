import numpy as np
import pytest

from fastkm.operators import make_rotation_resolvent
from fastkm.schemes import SchemeConfig, run

ACCEPTANCE_LINES = []


def rotation_start(n):
    return np.concatenate([np.ones(n), np.zeros(n)])


@pytest.fixture(scope="session")
def rotation50():
    return make_rotation_resolvent(50, 2.0)


@pytest.fixture(scope="session")
def fast_km_trace(rotation50):
    """Fast KM, alpha=3, s=2, from (1_50; 0_50), 10^4 iterations."""
    cfg = SchemeConfig("fast_km", 10_000, alpha=3.0, step=2.0)
    return run(rotation50, cfg, rotation_start(50), store=True)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
