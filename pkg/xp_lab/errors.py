"""
Exception hierarchy shared by every xp_lab module.

Verifiers catch these at their boundary and turn them into report statuses;
library code raises them and never returns error dicts.
"""
from typing import Any, Optional


class XpLabError(Exception):
    """Base class for all xp_lab failures."""


class DomainError(XpLabError):
    """Input outside the mathematical domain (boundary points, bad regimes)."""


class PrecisionError(XpLabError):
    """A numerical result is not trustworthy at the requested tolerance."""


class RangeError(XpLabError):
    """A search bound is too small or above its guard."""


class ResourceError(XpLabError):
    """An enumeration or quadrature budget ran out before completion."""

    def __init__(self, message: str, partial: Any = None,
                 estimate: Optional[float] = None, error_bound: Optional[float] = None):
        super().__init__(message)
        self.partial = partial
        self.estimate = estimate
        self.error_bound = error_bound


class StructuralError(XpLabError):
    """An algebraic object does not have the expected shape."""


class PreconditionError(XpLabError):
    """A check was invoked on data violating its hypothesis."""


class UsageError(XpLabError):
    """Bad command line or configuration."""
