import numpy as np
import pytest

from ds2d.fields import ComplexField
from ds2d.grid import Grid2D
from ds2d.groundstate import SolverSettings, minimize_J, solve_fixed_omega


@pytest.fixture(scope="session")
def grid128():
    return Grid2D(128, 128, 40.0, 40.0)


@pytest.fixture(scope="session")
def settings128(grid128):
    return SolverSettings(grid=grid128)


@pytest.fixture(scope="session")
def dj128(settings128):
    _, dj = minimize_J(settings128)
    return dj


@pytest.fixture(scope="session")
def gs03(settings128, dj128):
    """Reference profile at frequency 0.3 on the development grid."""
    return solve_fixed_omega(0.3, 2.0, settings128, dj128)


@pytest.fixture(scope="session")
def grid_small():
    return Grid2D(64, 64, 20.0, 20.0)


def random_smooth(grid, seed, width=3.0, complex_=True):
    """Localized smooth test field, deterministic in the seed."""
    rng = np.random.default_rng(seed)
    kc = 2.0 * np.pi / width
    env = np.exp(-grid.k2 / (2.0 * kc * kc))
    noise = rng.standard_normal(grid.shape)
    if complex_:
        noise = noise + 1j * rng.standard_normal(grid.shape)
    f = np.fft.ifft2(env * np.fft.fft2(noise))
    r = grid.radius()
    window = np.exp(-((r / (0.3 * grid.lx)) ** 2))
    out = f * window
    if not complex_:
        out = np.real(out).astype(complex)
    return ComplexField(grid, out)
