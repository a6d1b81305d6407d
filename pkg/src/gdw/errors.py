"""Exception hierarchy shared by all modules and mapped to CLI exit codes."""


class GdwError(Exception):
    """Base class for errors raised by this package."""


class DataError(GdwError, ValueError):
    """Malformed input data, inconsistent shapes or invalid parameters."""


class ShapeError(DataError):
    """Two operands have incompatible shapes."""


class NumericalError(GdwError, ArithmeticError):
    """A numerical routine broke down (singular system, non-finite values)."""
