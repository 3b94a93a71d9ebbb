"""Exception hierarchy for smoothbound.

All library errors derive from :class:`SmoothboundError` so callers can catch
one base class; the CLI maps subclasses onto its exit-code convention.
"""


class SmoothboundError(Exception):
    """Base class for every error raised by this package."""


class UnstableSystem(SmoothboundError):
    """Spectral radius of the dynamics matrix is not strictly below one."""


class SingularA(SmoothboundError):
    """A matrix that must be inverted (A, or A times a covariance) is singular."""


class NonPSDNoise(SmoothboundError):
    """A noise covariance fails its symmetry / positive-(semi)definiteness check."""


class NoConvergence(SmoothboundError):
    """An iterative solve exhausted its iteration budget."""


class IllConditioned(SmoothboundError):
    """A linear solve encountered a condition number beyond the trusted range."""


class SingularSigma(SmoothboundError):
    """The steady-state error covariance is singular where an inverse is required."""


class DimensionMismatch(SmoothboundError):
    """Array shapes are inconsistent with the declared block structure."""


class LengthMismatch(SmoothboundError):
    """Sequences that must share a horizon have different lengths."""


class PoleHit(SmoothboundError):
    """The scalar dual function was evaluated at a pole with nonzero weight."""


class NumericalBreakdown(SmoothboundError):
    """A solver finished without meeting its stationarity / KKT tolerance."""


class Divergence(SmoothboundError):
    """Training loss blew up beyond the configured guard factor."""


class ConfigError(SmoothboundError):
    """An experiment configuration failed schema validation."""
