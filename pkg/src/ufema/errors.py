"""Exception types shared across the package."""


class UfemaError(Exception):
    """Base class for all errors raised by ufema."""


class InvalidArgumentError(UfemaError, ValueError):
    pass


class DegenerateInputError(UfemaError, ValueError):
    """Raised when an input has zero power or is otherwise unusable."""


class PoolViolationError(UfemaError):
    """A noise recording was requested from, or registered in, the wrong pool."""


class TrainingFailureError(UfemaError, RuntimeError):
    pass


class CheckpointError(UfemaError):
    """Version mismatch, checksum failure or a malformed checkpoint file."""


class ConfigError(UfemaError, ValueError):
    pass


class AudioFormatError(UfemaError, ValueError):
    """Unsupported WAV layout (channel count, sample width, codec)."""
