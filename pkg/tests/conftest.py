import numpy as np
import pytest

from dss_meanfield.config import example1, example2
from dss_meanfield.distributions import PhaseTypeDist, ShiftedDist
from dss_meanfield.storage_model import FileClass, SystemConfig


def mm1(lam: float = 0.7, mu: float = 1.0) -> SystemConfig:
    """A single class with d = k = 1 and exponential service: the M/M/1 queue."""
    return SystemConfig(lam, 1.0, (FileClass("a", 1.0, 1, 1, ShiftedDist(0.0, PhaseTypeDist.exponential(mu))),))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ex1():
    return example1


@pytest.fixture(scope="session")
def ex2():
    return example2


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(REPORT, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
