"""Exception types raised across the package.

Everything derives from MenkfError so callers can catch one base class.
Shape problems and bad argument values additionally subclass ValueError,
matching what plain numpy code would raise in the same spot.
"""


class MenkfError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MenkfError, ValueError):
    """Array arguments do not conform (wrong rank, shape, or length)."""


class InvalidInputError(MenkfError, ValueError):
    """An argument value is outside its documented domain."""


class NumericError(MenkfError):
    """A numerical operation failed at runtime."""


class NotSpdError(NumericError):
    """A matrix expected to be symmetric positive definite failed to factor."""


class ConfigError(MenkfError, ValueError):
    """A configuration document could not be validated."""


class DataFormatError(MenkfError, ValueError):
    """A data file could not be parsed; the message names the offending cell."""
