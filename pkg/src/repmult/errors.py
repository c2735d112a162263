"""Exception hierarchy shared across the toolkit.

The CLI maps :class:`DataError` subclasses to exit code 2 and
:class:`ExperimentError` subclasses to exit code 3.
"""


class ReprMultError(Exception):
    """Base class for all toolkit errors."""


class DataError(ReprMultError, ValueError):
    """Malformed or unusable input data."""


class NonFiniteError(DataError):
    pass


class ShapeError(DataError):
    pass


class LengthMismatchError(DataError):
    pass


class DegenerateInputError(DataError):
    """Input is well-formed but the requested quantity is undefined (e.g. constant series)."""


class AsymmetricMatrixError(DataError):
    pass


class AlignmentError(DataError):
    """Activation or prediction dumps were computed on different sample sets."""


class FormatError(DataError):
    """Binary file could not be parsed."""


class BadMagicError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class PayloadLengthError(FormatError):
    pass


class UnsupportedDtypeError(FormatError):
    pass


class CountMismatchError(FormatError):
    pass


class ConfigError(ReprMultError, ValueError):
    pass


class ExperimentError(ReprMultError, RuntimeError):
    pass


class TargetUnreachableError(ExperimentError):
    def __init__(self, message, best_accuracy=None):
        super().__init__(message)
        self.best_accuracy = best_accuracy


class TrainingDivergedError(ExperimentError):
    pass
