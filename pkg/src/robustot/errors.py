"""Exception hierarchy shared across the package."""


class RobustOTError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(RobustOTError):
    """Raised when a caller passes an out-of-range or inconsistent parameter."""


class FileFormatError(RobustOTError):
    """Raised when a measure, plan, or framework file cannot be parsed."""


class NumericError(RobustOTError):
    """Raised when input data is numerically unusable (NaN, negative weights)."""


class InternalError(RobustOTError):
    """Raised when an internal consistency check fails (e.g. a duality gap
    exceeding tolerance, or a curve that should be monotone but is not)."""
