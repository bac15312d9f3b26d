import numpy as np
import pytest

import ddesolve as dde


def linear_problem(tF=3.0, tau=1.0, history=1.0):
    """y' = -y(t - tau) with constant history."""
    return dde.DDEProblem(lambda t, y, d: -d[0], [dde.DelayFunction.constant(tau)],
                          dde.HistoryFunction.constant(history), 0.0, tF)


def decay_ode(tF=1.0):
    return dde.DDEProblem(lambda t, y, d: -y, [], dde.HistoryFunction.constant(1.0), 0.0, tF)


@pytest.fixture
def linear():
    return linear_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One-line results of tests/test_acceptance.py, repeated in the terminal summary
# so they are visible without ``-s``.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("]")[1].split(".")[0])):
            terminalreporter.write_line(line)
