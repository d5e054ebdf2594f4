"""Exception hierarchy. The CLI maps these onto exit codes."""


class QutritCtxError(Exception):
    """Base class for package errors."""


class ValidationError(QutritCtxError, ValueError):
    """Input violates a type invariant (normalization, hermiticity, ...)."""


class UsageError(QutritCtxError, ValueError):
    """Caller asked for something outside an operation's domain of arguments."""


class CapacityError(QutritCtxError):
    """Exhaustive computation would be too large."""


class DomainError(QutritCtxError, ValueError):
    """Mathematically undefined request (e.g. threshold with no violation)."""


class ConsistencyError(QutritCtxError):
    """An internal invariant failed."""


class ConstructionError(QutritCtxError):
    """An object could not be built from otherwise valid parts."""


class InsufficientDataError(QutritCtxError):
    """No post-selected trials to estimate from."""


class ConfigurationError(QutritCtxError):
    """Experiment plan lacks something the requested analysis needs."""


class IngestionError(QutritCtxError):
    """Persisted data could not be read back."""
