import numpy as np
import pytest

from ds2d.errors import ConfigurationError
from ds2d.grid import Grid2D, require_spectral


def test_spacing_is_exact():
    g = Grid2D(64, 128, 40.0, 20.0)
    assert g.dx * g.nx == g.lx
    assert g.dy * g.ny == g.ly


def test_wavenumbers_standard_ordering():
    g = Grid2D(16, 16, 8.0, 8.0)
    assert g.kx[0] == 0.0
    assert np.isclose(g.kx[1], 2.0 * np.pi / 8.0)
    # negative frequencies occupy the upper half and mirror about Nyquist
    ny = g.nx // 2
    for j in range(1, ny):
        assert np.isclose(g.kx[ny - j], -g.kx[ny + j])


def test_non_power_of_two_allowed_for_storage_only():
    g = Grid2D(48, 48, 10.0, 10.0)
    assert not g.spectral_ok
    with pytest.raises(ConfigurationError):
        require_spectral(g)


def test_too_small_grid_rejected_for_spectral_use():
    g = Grid2D(8, 8, 10.0, 10.0)
    assert not g.spectral_ok


def test_invalid_sizes():
    with pytest.raises(ConfigurationError):
        Grid2D(0, 16, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        Grid2D(16, 16, -1.0, 1.0)


def test_dealias_mask_cuts_two_thirds():
    g = Grid2D(32, 32, 10.0, 10.0)
    kmax = np.abs(g.kx).max()
    inside = np.abs(g.KX) <= (2.0 / 3.0) * kmax
    assert np.array_equal(g.dealias_mask & ~inside, np.zeros_like(inside, dtype=bool))


def test_rescaled_carries_same_samples_smaller_box():
    g = Grid2D(32, 32, 10.0, 10.0)
    g2 = g.rescaled(2.0)
    assert g2.nx == g.nx and g2.lx == 5.0
