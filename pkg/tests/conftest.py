import numpy as np
import pytest
from hypothesis import settings

from reduced_rejection.rng import RngStream

# first calls compile numba kernels, which no per-example deadline survives
settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return RngStream(20240601)


def pytest_configure(config):
    np.seterr(all="raise", under="ignore")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
