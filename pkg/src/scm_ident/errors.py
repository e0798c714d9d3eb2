"""Exception types shared across the package."""


class ScmIdentError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(ScmIdentError, ValueError):
    """An array or matrix has the wrong dimensions."""


class DomainError(ScmIdentError, ValueError):
    """A numeric value lies outside its permitted domain."""


class LabelError(ScmIdentError, ValueError):
    """A name list is the wrong length or contains duplicates."""


class CapacityError(ScmIdentError):
    """The request exceeds a hard size limit of the implementation."""


class ConfigError(ScmIdentError):
    """A configuration value or reference is invalid."""


class DataError(ScmIdentError):
    """Input data does not match the expected schema."""


class SingularModelError(ScmIdentError):
    """Optimization produced a numerically singular mixing map."""


class DegenerateError(ScmIdentError):
    """Input data is degenerate, e.g. a zero-variance column."""
