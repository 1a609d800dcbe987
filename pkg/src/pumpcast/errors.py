"""Exception hierarchy shared by every pipeline stage.

The CLI maps the three top-level families to exit codes:
``ConfigError`` -> 2, ``DataError`` -> 3, anything else -> 1.
"""


class PumpcastError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(PumpcastError, ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key  # dotted config path, when the error is about one key


class DataError(PumpcastError, ValueError):
    pass


class RuntimeFailure(PumpcastError, RuntimeError):
    pass


# telemetry
class MissingColumn(DataError):
    pass


class EmptyAfterCleaning(DataError):
    pass


class NonMonotonicAfterSort(DataError):
    pass


class InvalidProfile(DataError):
    pass


# labeling / features
class SeriesTooShort(DataError):
    pass


class IncompleteThresholds(DataError):
    pass


class DegenerateWindow(DataError):
    pass


# balance
class MinorityTooSmall(DataError):
    pass


class AppliedToTestSplit(DataError):
    pass


# models
class EmptyInput(DataError):
    pass


class SingleClassInput(DataError):
    pass


class FeatureOrderMismatch(DataError):
    pass


class MissingInput(DataError):
    pass


class DivergenceDetected(RuntimeFailure):
    pass


# eval
class LengthMismatch(DataError):
    pass


class TooFewSamples(DataError):
    pass


class ProvenanceViolation(RuntimeFailure):
    """A test-split sample reached a trainer or the balancer."""
