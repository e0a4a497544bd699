import numpy as np
import pytest

from meshnoise.fem import assemble
from meshnoise.linalg import generalized_eigs
from meshnoise.primitives import icosphere, square_grid, unit_square


@pytest.fixture(scope="session")
def sphere2():
    return icosphere(2)


@pytest.fixture(scope="session")
def sphere3():
    return icosphere(3)


@pytest.fixture(scope="session")
def sphere2_ops(sphere2):
    L, M = assemble(sphere2)
    return L, M, generalized_eigs(L, M)


@pytest.fixture(scope="session")
def sphere3_ops(sphere3):
    L, M = assemble(sphere3)
    return L, M, generalized_eigs(L, M)


@pytest.fixture
def square():
    return unit_square()


@pytest.fixture(scope="session")
def grid8():
    return square_grid(8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
