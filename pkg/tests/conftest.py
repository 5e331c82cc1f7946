import numpy as np
import pytest

from srsaoa.array import UlaGeometry
from srsaoa.waveform import SrsConfig


@pytest.fixture(scope="session")
def cfg():
    return SrsConfig()


@pytest.fixture(scope="session")
def geom():
    return UlaGeometry()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
