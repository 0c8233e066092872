"""Shared error types for the numerical library.

Every error that a caller may want to catch programmatically gets its own
class; messages carry the offending numbers so failures are diagnosable
from logs alone.
"""
from __future__ import annotations


class NumericalError(Exception):
    """Base class for numerical failures (CLI maps these to exit code 2)."""


class NonFiniteIntegrandError(NumericalError):
    """An integrand returned NaN or +-inf at a quadrature node."""


class VanishingMassError(NumericalError):
    """A tilted-measure denominator fell below the configured floor."""

    def __init__(self, message: str, denominator: float):
        super().__init__(f"{message} (denominator={denominator:.6e})")
        self.denominator = denominator


class DegenerateFixedPointError(NumericalError):
    """An operation requires q > 0, psi > 0 but the annealed branch was hit."""


class NoBracketingRootError(NumericalError):
    """The fixed-point scan found no sign change on [0, q_max]."""


class MultipleRootsError(NumericalError):
    """The fixed-point scan found more than one sign change."""

    def __init__(self, message: str, brackets):
        super().__init__(f"{message}: brackets={brackets}")
        self.brackets = list(brackets)


class StateEvolutionDegeneracyError(NumericalError):
    """A cumulative sum of squares reached 1 before the recursion finished."""


class CollinearityError(NumericalError):
    """Gram-Schmidt pivot below threshold: iterates are numerically collinear."""


class DegenerateConfigurationError(NumericalError):
    """A spin configuration lies in the span of the AMP iterates."""


class CapViolationError(NumericalError):
    """A vector violates a norm cap required by the functional being evaluated."""
