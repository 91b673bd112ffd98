"""Exception hierarchy for the ds2d laboratory.

Validation failures (bad parameters, malformed files) and numerical
failures (divergent iterations, blow-up) are kept on separate branches so
the CLI can map them to distinct exit codes.
"""

from __future__ import annotations


class DS2DError(Exception):
    """Base class for all ds2d errors."""


class ValidationFailure(DS2DError):
    """Bad inputs: rejected before any numerical work starts."""


class NumericalFailure(DS2DError):
    """Numerical work started but could not be completed."""


class ConfigurationError(ValidationFailure):
    """Grid or settings violate a structural requirement."""


class DomainError(ValidationFailure):
    """A parameter lies outside the admissible range of an operation."""


class OrderingError(ValidationFailure):
    """Soliton velocities are not strictly ordered in the chosen frame."""


class PlacementError(ValidationFailure):
    """A soliton center sits too close to the box edge for its decay length."""


class FormatError(ValidationFailure):
    """A field file or config file does not match its declared layout."""


class DegenerateSeedError(NumericalFailure):
    """An iteration collapsed to the zero field."""


class IterationError(NumericalFailure):
    """An iteration failed to converge within its budget.

    Carries the last iterate and the final convergence measure so callers
    can inspect or restart.
    """

    def __init__(self, message, last_iterate=None, measure=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.measure = measure


class BracketError(NumericalFailure):
    """A root bracket could not be established; carries the nearest sample."""

    def __init__(self, message, nearest=None):
        super().__init__(message)
        self.nearest = nearest


class LinearSolverError(NumericalFailure):
    """A Krylov solve inside Newton broke down."""


class BlowUpError(NumericalFailure):
    """The evolution produced non-finite values or uncontrolled growth.

    Carries the last finite state for post-mortem diagnostics.
    """

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class IntegratorHealthError(NumericalFailure):
    """A conserved quantity drifted beyond the integrator's contract."""


class TubeExitError(NumericalFailure):
    """A field left the modulation neighbourhood of the soliton sum."""


class CommensurabilityWarning(UserWarning):
    """A velocity or shift was snapped to the nearest lattice-compatible value."""
