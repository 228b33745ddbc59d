"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Bad configuration: missing fields, inconsistent dimensions, invalid ranges."""


class DataFormatError(ValueError):
    """Malformed dataset or checkpoint container."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during pretraining."""


class TrialStateError(RuntimeError):
    """Environment stepped while no trial is active."""
