import numpy as np
import pytest

from newtonres.geometry import make_ball, make_box
from newtonres.operators import assemble_newton
from newtonres.spectral import eig_newton0


@pytest.fixture(scope="session")
def ball8():
    return make_ball(1.0, 8)


@pytest.fixture(scope="session")
def ball8_spec(ball8):
    return eig_newton0(assemble_newton(ball8, 0))


@pytest.fixture(scope="session")
def ball6():
    return make_ball(1.0, 6)


@pytest.fixture(scope="session")
def box():
    return make_box((2.0, 1.0, 1.0), 6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for num in sorted(REPORT):
            terminalreporter.write_line(REPORT[num])
