"""Exception types shared across the package."""


class OdflowError(Exception):
    """Base class for all package-specific errors."""


class IngestError(OdflowError):
    """A CSV input violates the expected schema or an invariant."""


class DomainError(OdflowError):
    """An operation was evaluated outside its mathematical domain."""


class FitError(OdflowError):
    """Parameter estimation cannot proceed (degenerate or collinear data)."""


class MetricError(OdflowError):
    """A metric is undefined for the given inputs (e.g. zero variance)."""


class ConfigError(OdflowError):
    """User-supplied configuration is invalid."""
