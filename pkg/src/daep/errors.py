"""Exception types raised across the planner stack."""


class DaepError(Exception):
    """Base class for all errors raised by this package."""


class OutOfBounds(DaepError, ValueError):
    pass


class ConfigMismatch(DaepError, ValueError):
    pass


class TimeRegression(DaepError, ValueError):
    pass


class InvalidMeasurement(DaepError, ValueError):
    pass


class InvalidArgument(DaepError, ValueError):
    pass


class InvalidStart(DaepError):
    pass


class ExpansionStarved(DaepError):
    """Raised when the local tree admits no node within its budget.

    The executive treats this as a signal to hand over to the global planner.
    """

    def __init__(self, message: str, tree=None):
        super().__init__(message)
        self.tree = tree


class Unreachable(DaepError):
    pass


class ConfigError(DaepError, ValueError):
    pass


class IoError(DaepError, OSError):
    pass
