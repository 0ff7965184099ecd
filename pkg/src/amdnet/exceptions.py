"""Exception hierarchy shared across the package."""


class AMDNetError(Exception):
    """Base class for all package errors."""


class ShapeError(AMDNetError, ValueError):
    """Tensor or image extents are incompatible with an operation."""


class ConfigError(AMDNetError, ValueError):
    """A configuration value is missing, unknown or out of range."""


class ValidationError(AMDNetError, ValueError):
    """Input data violates an operation's contract (labels, tags, caches)."""


class PreconditionError(AMDNetError, ValueError):
    """An operation was called on degenerate input (empty batch, tiny image)."""


class CorruptCheckpointError(AMDNetError):
    """Checkpoint file is truncated, has a bad checksum or unknown version."""


class SpecMismatchError(AMDNetError):
    """Checkpoint was written for a different model spec than requested."""


class TrainingDivergedError(AMDNetError, FloatingPointError):
    """A non-finite gradient or loss showed up during training."""


class DatasetError(AMDNetError):
    """Dataset layout problems (unknown class folders, empty splits)."""


class NotFittedError(AMDNetError, RuntimeError):
    """A model was used for inference before weights were built or loaded."""
