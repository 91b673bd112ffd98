"""Pseudo-spectral laboratory for a 2D nonlocal focusing Schrodinger model.

The model couples a power nonlinearity with the anisotropic zero-order
operator E_1 (symbol k1^2/|k|^2). The package computes ground-state
solitons by constrained descent plus Newton polish, maps the
mass-frequency curve and the linearized spectrum that govern orbital
stability, propagates fields with a conservative split-step integrator,
and assembles multi-soliton solutions by backward integration from a
far-future anchor profile.
"""

from .errors import (
    BlowUpError,
    BracketError,
    CommensurabilityWarning,
    ConfigurationError,
    DegenerateSeedError,
    DomainError,
    DS2DError,
    FormatError,
    IntegratorHealthError,
    IterationError,
    LinearSolverError,
    NumericalFailure,
    OrderingError,
    PlacementError,
    TubeExitError,
    ValidationFailure,
)
from .fields import ComplexField, as_field
from .grid import Grid2D
from .spectral import (
    FunctionalReport,
    apply_e1_poisson,
    apply_multiplier_ej,
    functionals,
    h1_distance,
    h1_norm,
)

__all__ = [
    "BlowUpError",
    "BracketError",
    "CommensurabilityWarning",
    "ComplexField",
    "ConfigurationError",
    "DS2DError",
    "DegenerateSeedError",
    "DomainError",
    "FormatError",
    "FunctionalReport",
    "Grid2D",
    "IntegratorHealthError",
    "IterationError",
    "LinearSolverError",
    "NumericalFailure",
    "OrderingError",
    "PlacementError",
    "TubeExitError",
    "ValidationFailure",
    "apply_e1_poisson",
    "apply_multiplier_ej",
    "as_field",
    "functionals",
    "h1_distance",
    "h1_norm",
]

__version__ = "0.1.0"
