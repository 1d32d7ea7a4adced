import numpy as np
import pytest

from _shared import ACCEPTANCE_LINES, COARSE_GRID, COARSE_SOLVER, benchmark_solution


@pytest.fixture(scope="session")
def sol05():
    return benchmark_solution(0.5, 1.0)


@pytest.fixture(scope="session")
def sol_n09():
    return benchmark_solution(-0.9, 1.0)


@pytest.fixture(scope="session")
def sol_w2():
    return benchmark_solution(0.5, 2.0)


@pytest.fixture(scope="session")
def sol_coarse():
    return benchmark_solution(0.5, 1.0, COARSE_GRID, COARSE_SOLVER)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
