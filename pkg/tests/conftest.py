import numpy as np
import pytest

from fluidbia.channel import sample_geometry, wavelength_for

LAMBDA = wavelength_for(60e9)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def geom(rng):
    return sample_geometry(4, 4, LAMBDA, rng)


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# acceptance criteria register one line each; printed in the terminal summary
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
