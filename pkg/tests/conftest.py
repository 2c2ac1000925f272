import pytest

from acceptance_log import LINES as ACCEPTANCE_LINES
from pdwave import coeff


@pytest.fixture(scope="session")
def constant():
    return coeff.Constant(1.0)


@pytest.fixture(scope="session")
def sinusoid():
    return coeff.Sinusoid(1.0, 0.5, 0.0)


@pytest.fixture(scope="session")
def square():
    return coeff.SquareWave(0.5, 1.5, 0.5)


@pytest.fixture(scope="session")
def profiles(constant, sinusoid, square):
    return {"constant": constant, "sinusoid": sinusoid, "square": square}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
