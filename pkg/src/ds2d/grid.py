"""Periodic computational grid for the 2D pseudo-spectral laboratory.

A square-box stand-in for the whole plane: real-space nodes x_i = i*dx on
[0, Lx) x [0, Ly) and the matching integer wavenumber lattice in standard
FFT ordering (negative frequencies in the upper half). Fields are sampled
on arrays of shape (nx, ny) indexed [ix, iy].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid2D:
    """Pre-computed spectral quantities for a periodic rectangular box.

    Parameters
    ----------
    nx, ny : int
        Node counts per axis. Spectral operations require powers of two
        >= 16; other sizes are allowed for storage only (spectral_ok is
        then False and operators reject the grid).
    lx, ly : float
        Box side lengths.
    """

    nx: int
    ny: int
    lx: float
    ly: float

    def __post_init__(self):
        if self.nx <= 0 or self.ny <= 0:
            raise ConfigurationError(f"node counts must be positive, got {self.nx}x{self.ny}")
        if self.lx <= 0 or self.ly <= 0:
            raise ConfigurationError(f"box sides must be positive, got {self.lx}x{self.ly}")
        spectral_ok = _is_pow2(self.nx) and _is_pow2(self.ny) and self.nx >= 16 and self.ny >= 16
        object.__setattr__(self, "spectral_ok", spectral_ok)
        # division by a power of two is exact in binary floating point,
        # so dx * nx == lx holds exactly when spectral_ok
        dx = self.lx / self.nx
        dy = self.ly / self.ny
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dy", dy)
        object.__setattr__(self, "area", self.lx * self.ly)
        object.__setattr__(self, "weight", dx * dy)
        object.__setattr__(self, "x", np.arange(self.nx) * dx)
        object.__setattr__(self, "y", np.arange(self.ny) * dy)
        kx = 2.0 * np.pi * np.fft.fftfreq(self.nx, d=dx)
        ky = 2.0 * np.pi * np.fft.fftfreq(self.ny, d=dy)
        object.__setattr__(self, "kx", kx)
        object.__setattr__(self, "ky", ky)
        KX, KY = np.meshgrid(kx, ky, indexing="ij")
        object.__setattr__(self, "KX", KX)
        object.__setattr__(self, "KY", KY)
        object.__setattr__(self, "k2", KX**2 + KY**2)
        kx_cut = (2.0 / 3.0) * np.abs(kx).max()
        ky_cut = (2.0 / 3.0) * np.abs(ky).max()
        object.__setattr__(
            self, "dealias_mask", (np.abs(KX) <= kx_cut) & (np.abs(KY) <= ky_cut)
        )

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def center(self):
        return np.array([self.lx / 2.0, self.ly / 2.0])

    def meshes(self):
        """Node coordinate meshes (X, Y), each of shape (nx, ny)."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def radius(self):
        """Distance of each node from the box center, shape (nx, ny)."""
        X, Y = self.meshes()
        cx, cy = self.center
        return np.hypot(X - cx, Y - cy)

    def rescaled(self, lam: float) -> "Grid2D":
        """Grid carrying u_lam(x) = lam*u(lam*x): same nodes, box sides / lam."""
        return Grid2D(self.nx, self.ny, self.lx / lam, self.ly / lam)


def require_spectral(grid: Grid2D):
    """Reject grids that cannot support spectral operators."""
    if not grid.spectral_ok:
        raise ConfigurationError(
            f"spectral operations need power-of-two node counts >= 16, got {grid.nx}x{grid.ny}"
        )
