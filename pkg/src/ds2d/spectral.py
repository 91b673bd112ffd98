"""Spectral operators and scalar functionals on periodic fields.

All derivatives are Fourier multipliers; all integrals are the trapezoid
(= rectangle) rule dx*dy*sum, which is spectrally accurate for smooth
periodic integrands. The anisotropic zero-order operators E_j carry the
symbol k1*kj/|k|^2 with the k = 0 mode mapped to zero: on the torus the
mean of a field has no image under the Poisson-route definition
E_j(w) = -d1 dj (-Lap)^{-1} w, so the convention is forced.

The quartic functional is a different story. On the plane it is the
integral of sigma_1 |F(|u|^2)|^2 over all of frequency space, and the
single point xi = 0 has measure zero; on the lattice, dropping the k = 0
term removes a whole quadrature cell whose weight is (mean of |u|^2)^2
times the angular average of the symbol, which is exactly 1/2. Without
that cell the functional (and every identity built on it) is off by
(1/2) (mass)^2 / area, an O(1/L^2) error that no resolution can cure.
The functional therefore assigns the k = 0 cell its exact average 1/2,
and the matching constant mean(|u|^2)/2 joins the nonlinear potential so
that profiles, frequencies and reported functionals stay one consistent
discretization of the planar problem (residual box artifacts then decay
like 1/L^4).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError
from .fields import ComplexField
from .grid import Grid2D, require_spectral

_fft2 = np.fft.fft2
_ifft2 = np.fft.ifft2


# ---------------------------------------------------------------------------
# multiplier symbols and basic calculus on raw arrays
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def sigma_j(grid: Grid2D, j: int) -> np.ndarray:
    """Symbol k1*kj/|k|^2 on the wavenumber lattice, zero at k = 0."""
    if j not in (1, 2):
        raise DomainError(f"axis index must be 1 or 2, got {j}")
    kj = grid.KX if j == 1 else grid.KY
    with np.errstate(divide="ignore", invalid="ignore"):
        sig = np.where(grid.k2 > 0.0, grid.KX * kj / np.where(grid.k2 > 0.0, grid.k2, 1.0), 0.0)
    sig.flags.writeable = False
    return sig


@lru_cache(maxsize=32)
def sigma_1_cell(grid: Grid2D) -> np.ndarray:
    """Quadrature symbol for the quartic functional: sigma_1 with the
    k = 0 cell at its exact angular average 1/2."""
    sig = sigma_j(grid, 1).copy()
    sig[0, 0] = 0.5
    sig.flags.writeable = False
    return sig


def ej_array(grid: Grid2D, w: np.ndarray, j: int = 1) -> np.ndarray:
    """E_j applied to a real array; output real to round-off."""
    require_spectral(grid)
    return np.real(_ifft2(sigma_j(grid, j) * _fft2(w)))


def mean_value(grid: Grid2D, w: np.ndarray) -> float:
    return float(np.mean(w.real)) if np.iscomplexobj(w) else float(np.mean(w))


def e1_poisson_array(grid: Grid2D, w: np.ndarray) -> np.ndarray:
    """E_1 of a real array computed through the explicit Poisson route.

    Solves -Lap f = w on the mean-free part, returns -d1 d1 f. Kept as a
    genuinely separate computational path (two transform round trips) so
    it can cross-check the direct multiplier.
    """
    require_spectral(grid)
    what = _fft2(w)
    with np.errstate(divide="ignore", invalid="ignore"):
        fhat = np.where(grid.k2 > 0.0, what / np.where(grid.k2 > 0.0, grid.k2, 1.0), 0.0)
    f = np.real(_ifft2(fhat))
    return np.real(_ifft2(grid.KX**2 * _fft2(f)))


def gradient_arrays(grid: Grid2D, u: np.ndarray):
    require_spectral(grid)
    uhat = _fft2(u)
    return _ifft2(1j * grid.KX * uhat), _ifft2(1j * grid.KY * uhat)


def laplacian_array(grid: Grid2D, u: np.ndarray) -> np.ndarray:
    require_spectral(grid)
    return _ifft2(-grid.k2 * _fft2(u))


def dealias_array(grid: Grid2D, u: np.ndarray) -> np.ndarray:
    """2/3-rule spectral truncation."""
    require_spectral(grid)
    out = _ifft2(grid.dealias_mask * _fft2(u))
    return np.real(out) if np.isrealobj(u) else out


def integral(grid: Grid2D, vals: np.ndarray):
    """Trapezoid-rule integral over the box."""
    return grid.weight * vals.sum()


def l2_norm_sq(grid: Grid2D, u: np.ndarray) -> float:
    return float(grid.weight * np.sum(np.abs(u) ** 2))


def l2_norm(grid: Grid2D, u: np.ndarray) -> float:
    return float(np.sqrt(l2_norm_sq(grid, u)))


def h1_norm_sq_array(grid: Grid2D, u: np.ndarray) -> float:
    require_spectral(grid)
    uhat = _fft2(u)
    n = grid.nx * grid.ny
    return float(grid.weight / n * np.sum((1.0 + grid.k2) * np.abs(uhat) ** 2))


def abs2(u: np.ndarray) -> np.ndarray:
    return u.real * u.real + u.imag * u.imag


def power_abs(u: np.ndarray, q: float) -> np.ndarray:
    """|u|^q computed as (|u|^2)^(q/2), well defined at u = 0 for q > 0."""
    return abs2(u) ** (0.5 * q)


def potential_array(grid: Grid2D, u: np.ndarray, p: float, dealias: bool = True) -> np.ndarray:
    """Real nonlinear potential |u|^(p-1) + E_1(|u|^2) + mean(|u|^2)/2.

    The constant term is the k = 0 quadrature cell of the quartic
    functional (see the module docstring); it keeps the stationary
    equation the exact Euler-Lagrange equation of the reported energy.
    With dealias=True the variable part is 2/3-truncated; the potential
    stays real either way, so the exact phase-rotation substep of the
    integrator remains unitary.
    """
    w = abs2(u)
    v = power_abs(u, p - 1.0) + ej_array(grid, w, 1)
    if dealias:
        v = dealias_array(grid, v)
    return v + 0.5 * float(np.mean(w))


def stationary_residual(
    grid: Grid2D, q: np.ndarray, omega: float, p: float, dealias: bool = True
) -> np.ndarray:
    """Lap q - omega q + (|q|^(p-1) + E_1(|q|^2) + mean(|q|^2)/2) q."""
    return laplacian_array(grid, q) - omega * q + potential_array(grid, q, p, dealias) * q


def symmetrize_even(vals: np.ndarray) -> np.ndarray:
    """Average over the reflections through the box center (both axes).

    The center lies on a lattice node (index n/2), so the reflections are
    exact index permutations i -> (n - i) mod n.
    """
    rx = np.roll(vals[::-1, :], 1, axis=0)
    ry = np.roll(vals[:, ::-1], 1, axis=1)
    rxy = np.roll(np.roll(vals[::-1, ::-1], 1, axis=0), 1, axis=1)
    return 0.25 * (vals + rx + ry + rxy)


# ---------------------------------------------------------------------------
# field-level contracts
# ---------------------------------------------------------------------------

def apply_multiplier_ej(j: int, f: ComplexField) -> ComplexField:
    """Zero-order anisotropic operator E_j on a real field."""
    vals = f.real_values()
    return f.with_values(ej_array(f.grid, vals, j).astype(np.complex128))


def apply_e1_poisson(f: ComplexField) -> ComplexField:
    """E_1 via the fundamental-solution route; agrees with the multiplier
    on mean-free fields to round-off."""
    vals = f.real_values()
    return f.with_values(e1_poisson_array(f.grid, vals).astype(np.complex128))


@dataclass(frozen=True)
class FunctionalReport:
    """All scalar functionals of one field at one nonlinearity exponent.

    momentum is Im of the pairing of the conjugate field with its
    gradient; gn_ratio is mass * gradient-term / quartic and is absent
    when the quartic term vanishes.
    """

    mass: float
    energy: float
    momentum: np.ndarray
    gn_ratio: float | None
    nehari: float
    quartic: float
    h1_norm_sq: float

    # recomputable split of h1_norm_sq
    gradient_term: float = 0.0


def functionals(u: ComplexField, p: float) -> FunctionalReport:
    if p <= 1.0:
        raise DomainError(f"nonlinearity exponent must exceed 1, got {p}")
    grid = u.grid
    require_spectral(grid)
    vals = u.values
    n = grid.nx * grid.ny
    uhat = _fft2(vals)
    spec_weight = grid.weight / n

    mass = float(grid.weight * np.sum(abs2(vals)))
    grad = float(spec_weight * np.sum(grid.k2 * abs2(uhat)))
    pw = float(grid.weight * np.sum(power_abs(vals, p + 1.0)))
    momentum = np.array(
        [
            spec_weight * np.sum(grid.KX * abs2(uhat)),
            spec_weight * np.sum(grid.KY * abs2(uhat)),
        ]
    )
    # quartic term evaluated on the Fourier side: sum of sigma_1 |F(|u|^2)|^2
    # with the k = 0 cell at its exact average; manifestly nonnegative
    what = _fft2(abs2(vals))
    quartic = float(spec_weight * np.sum(sigma_1_cell(grid) * abs2(what)))

    energy = grad - (2.0 / (p + 1.0)) * pw - 0.5 * quartic
    nehari = 2.0 * grad - (2.0 * (p - 1.0) / (p + 1.0)) * pw - quartic

    floor = 1e-12 * mass * grad
    gn_ratio = (mass * grad / quartic) if quartic > floor and quartic > 0.0 else None

    return FunctionalReport(
        mass=mass,
        energy=energy,
        momentum=momentum,
        gn_ratio=gn_ratio,
        nehari=nehari,
        quartic=quartic,
        h1_norm_sq=mass + grad,
        gradient_term=grad,
    )


def h1_distance(u: ComplexField, v: ComplexField) -> float:
    u.same_grid(v)
    return float(np.sqrt(h1_norm_sq_array(u.grid, u.values - v.values)))


def h1_norm(u: ComplexField) -> float:
    return float(np.sqrt(h1_norm_sq_array(u.grid, u.values)))
