"""
Exception types raised by the MEW-UNet library.

Every class derives from a builtin exception as well, so callers that only
know about ValueError or RuntimeError keep working.
"""


class MewError(Exception):
    """Base class for all library errors."""


class ShapeError(MewError, ValueError):
    """Tensor shapes or dimension sizes violate an operation's contract."""


class ConfigError(MewError, ValueError):
    """A model, training or run configuration is invalid."""


class DataError(MewError, ValueError):
    """A dataset, sample or file on disk is invalid."""


class ContainerError(DataError):
    """A tensor container file is corrupt, truncated or malformed."""


class CheckpointError(DataError):
    """A checkpoint does not match the model it is loaded into."""


class NumericalError(MewError, ArithmeticError):
    """A computation produced NaN or Inf values."""


class TapeError(MewError, RuntimeError):
    """Backward was requested on a tape that holds no recorded forward."""
