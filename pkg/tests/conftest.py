import numpy as np
import pytest

from rdca.solver import SimParams, random_init, simulate


@pytest.fixture(scope="session")
def small_trajs():
    """Three 1 s-sampled trajectories on a 16x16 grid, 4 s long."""
    p = SimParams.for_grid(16)
    return [simulate(random_init(s, 16), p, 4.0, 1000) for s in (0, 1, 2)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def criterion():
    """Record one pass/fail line for the end-of-run acceptance summary."""
    def record(name, passed, detail):
        ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
