class HandSynthError(Exception):
    """Base class for all errors raised by handsynth."""


class InvalidArgument(HandSynthError, ValueError):
    pass


class NotFound(HandSynthError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class OutOfGamut(HandSynthError, ValueError):
    pass


class BehindCamera(HandSynthError, ValueError):
    pass


class SamplingFailure(HandSynthError, RuntimeError):
    pass


class SchemaError(HandSynthError, ValueError):
    pass


class LoadError(HandSynthError, OSError):
    pass


class DatasetIOError(HandSynthError, OSError):
    """IO failure during generation; ``checkpoint`` is the number of records safely on disk."""

    def __init__(self, message, checkpoint=0):
        super().__init__(message)
        self.checkpoint = checkpoint
