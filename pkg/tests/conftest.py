import time

import numpy as np
import pytest

from se23align import sim

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def mc_desk():
    """20-trial Monte Carlo at the reference sensor grade and its wall time (s)."""
    start = time.perf_counter()
    results = sim.monte_carlo(sim.SimConfig(seed=2024), ["rso", "lso", "rse", "lse"], 20)
    return results, time.perf_counter() - start
