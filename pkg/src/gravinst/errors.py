class GeometryError(Exception):
    """Base class for every error raised by gravinst."""


class DomainError(GeometryError):
    """A point (or a differentiation stencil) lies outside the chart domain."""


class NotPositiveDefinite(GeometryError):
    """The metric is not positive definite at the requested point."""


class JetOrderError(GeometryError):
    """A computation needs more metric derivatives than were supplied."""


class WuCriterionError(GeometryError):
    """det W+ <= 0 (or the top eigenvalue is not simple) where it must be positive."""


class NotEinsteinError(GeometryError):
    """An identity that needs an Einstein metric was handed something else."""


class InconsistentSpectrum(GeometryError):
    """Input to the cubic solver is not trace-free symmetric, or the radicand is
    negative beyond rounding."""


class ConvergenceError(GeometryError):
    """Quadrature or fitting did not stabilise at the requested tolerance."""


class ConfigError(GeometryError):
    """Malformed run configuration."""


class AsymptoteError(GeometryError):
    """The candidate Killing field has (numerically) no component along the
    asymptotic fibre field."""
