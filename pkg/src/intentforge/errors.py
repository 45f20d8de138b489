"""Exception hierarchy shared by every intentforge module."""


class IntentForgeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDimensionError(IntentForgeError, ValueError):
    pass


class DegenerateBatchError(IntentForgeError, ValueError):
    pass


class InvalidRateError(IntentForgeError, ValueError):
    pass


class StaleCacheError(IntentForgeError):
    pass


class DegenerateLabelsError(IntentForgeError, ValueError):
    pass


class EmptyInputError(IntentForgeError, ValueError):
    pass


class SchemaError(IntentForgeError):
    """Input file does not follow the expected event-log layout."""


class SessionIntegrityError(IntentForgeError):
    pass


class FitError(IntentForgeError):
    pass


class FeaturizeError(IntentForgeError):
    pass


class SplitError(IntentForgeError):
    pass


class CalibrationError(IntentForgeError):
    pass


class InsufficientMemoryError(IntentForgeError):
    pass


class DivergenceError(IntentForgeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class IncompatibleArtifactsError(IntentForgeError):
    pass


class ConfigError(IntentForgeError):
    pass


class FormatError(IntentForgeError):
    """A binary container could not be decoded."""
