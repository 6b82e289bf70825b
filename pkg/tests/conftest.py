import os

import numpy as np
import pytest

from fiml.channel import CaseConfig, grid_for, solve_forward

# criterion lines collected by test_acceptance and echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def case550():
    return CaseConfig(re_tau=550.0, n=64)


@pytest.fixture(scope="session")
def grid550(case550):
    return grid_for(case550)


@pytest.fixture(scope="session")
def base550(case550, grid550):
    return solve_forward(np.ones(grid550.n), case550, grid550)


@pytest.fixture
def numpy_only(monkeypatch):
    from fiml import kernels

    monkeypatch.setattr(kernels, "USE_NUMBA", False)
    yield


def pytest_configure(config):
    os.environ.setdefault("PYTHONHASHSEED", "0")
