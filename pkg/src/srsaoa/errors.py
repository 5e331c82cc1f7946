"""Exception hierarchy. The CLI maps these onto exit codes."""


class AoaError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(AoaError, ValueError):
    pass


class DimensionError(AoaError, ValueError):
    pass


class ScenarioError(AoaError, ValueError):
    pass


class OrderError(AoaError, ValueError):
    """Requested model order is not supported by the data."""

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class NumericError(AoaError, ArithmeticError):
    pass


class FormatError(AoaError, IOError):
    """Malformed capture file. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset
