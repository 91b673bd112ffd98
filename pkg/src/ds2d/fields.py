"""Complex-valued fields sampled on a Grid2D.

A ComplexField is the in-memory form of everything the laboratory moves
around: evolving states, stationary profiles, perturbations. Samples are
stored as a complex128 array of shape (nx, ny) indexed [ix, iy]; the
on-disk layout (x fastest) is handled by the io module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .grid import Grid2D


@dataclass(frozen=True)
class ComplexField:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.complex128)
        if vals.shape != self.grid.shape:
            raise DomainError(
                f"field shape {vals.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals.view(np.float64))):
            raise DomainError("field contains non-finite samples")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zero(cls, grid: Grid2D) -> "ComplexField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    def with_values(self, values: np.ndarray) -> "ComplexField":
        return ComplexField(self.grid, values)

    def real_values(self, tol: float = 1e-10) -> np.ndarray:
        """Real part, rejecting fields with a meaningful imaginary part."""
        scale = float(np.max(np.abs(self.values))) or 1.0
        if float(np.max(np.abs(self.values.imag))) > tol * scale:
            raise DomainError("field has a non-negligible imaginary part")
        return np.real(self.values)

    def same_grid(self, other: "ComplexField"):
        if self.grid != other.grid:
            raise DomainError("fields live on different grids")


def as_field(grid: Grid2D, values: np.ndarray) -> ComplexField:
    return ComplexField(grid, values)
