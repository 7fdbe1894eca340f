"""Error and warning types shared across bivex.

Input errors subclass ValueError so callers that already guard on
ValueError keep working. Numerical conditions that should not abort a
sweep are warning categories instead.
"""

from __future__ import annotations


class DegenerateCorrelation(ValueError):
    """Raised when |rho| = 1 and the operation needs an invertible covariance."""


class InvalidThreshold(ValueError):
    """Raised when a threshold lies outside the domain where a formula applies."""


class UnsortedThreshold(ValueError):
    """Raised when an operation stated for u2 <= u1 receives u2 > u1."""


class RegimeViolation(ValueError):
    """Raised when a check is requested outside the regime it is valid in."""


class UsageError(ValueError):
    """Raised by the command line front end for invalid flag combinations."""


class PrecisionLossWarning(RuntimeWarning):
    """Two evaluation routes of the same quantity disagree beyond tolerance."""


class EffectiveSampleCollapseWarning(RuntimeWarning):
    """Importance weights are concentrated on too few trials."""


# Row-level Monte Carlo flags carried on estimate objects.
ZERO_HITS = "ZeroHits"
INSUFFICIENT_HITS = "InsufficientHits"
EFFECTIVE_SAMPLE_COLLAPSE = "EffectiveSampleCollapse"


__all__ = [
    "DegenerateCorrelation",
    "InvalidThreshold",
    "UnsortedThreshold",
    "RegimeViolation",
    "UsageError",
    "PrecisionLossWarning",
    "EffectiveSampleCollapseWarning",
    "ZERO_HITS",
    "INSUFFICIENT_HITS",
    "EFFECTIVE_SAMPLE_COLLAPSE",
]
