"""Exception types raised across the toolkit."""


class FsmError(Exception):
    """Base class for toolkit errors."""


class ShapeError(FsmError, ValueError):
    """Incompatible tensor or layer shapes."""


class StateError(FsmError, RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class DivergenceError(FsmError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DataError(FsmError, ValueError):
    """Malformed, unreadable or insufficient input data."""


class FormatError(FsmError, ValueError):
    """A binary container failed to parse."""
