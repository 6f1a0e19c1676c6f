"""Exception hierarchy shared by every module."""


class VSRError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(VSRError, ValueError):
    """Tensor extents are incompatible with the requested operation."""


class ConfigError(VSRError, ValueError):
    """A configuration value violates its documented invariant."""


class NumericError(VSRError, ArithmeticError):
    """A NaN/Inf appeared, or a value lies outside its valid domain."""


class DegenerateBatchError(VSRError, ValueError):
    """Batch statistics cannot be estimated from fewer than two values."""


class CheckpointError(VSRError, ValueError):
    """A checkpoint or weight file is corrupt or does not match the network."""


class TrainingAborted(NumericError):
    """Training stopped on a non-finite loss.

    ``last_checkpoint`` names the most recent checkpoint written before the
    failure, or is ``None`` if none was written.
    """

    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint
