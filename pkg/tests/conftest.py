import numpy as np
import pytest

from dmnls.groundstate import petviashvili
from dmnls.spectral import Field, Grid


@pytest.fixture(scope="session")
def grid1d():
    return Grid(1, 256, 20.0)


@pytest.fixture(scope="session")
def gaussian1d(grid1d):
    return Field(grid1d, np.exp(-grid1d.x ** 2 / 2))


@pytest.fixture(scope="session")
def q1d():
    return petviashvili(Grid(1, 1024, 20.0), tol=1e-10)


@pytest.fixture
def rng():
    return np.random.default_rng(20131)


def random_smooth_field(grid, rng, modes=12):
    """Band-limited random field with Gaussian envelope."""
    shape = grid.shape
    coeffs = np.zeros(shape, dtype=complex)
    idx = np.abs(grid.mode_index) <= modes
    sel = np.ix_(*([np.flatnonzero(idx)] * grid.dimension))
    sub = coeffs[sel]
    coeffs[sel] = rng.normal(size=sub.shape) + 1j * rng.normal(size=sub.shape)
    u = np.fft.ifftn(coeffs, norm="ortho") * np.exp(-grid.radius_sq / 8)
    return Field(grid, u)
