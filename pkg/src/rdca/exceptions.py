"""Error hierarchy.

Data problems (bad arguments, malformed files, empty datasets) derive from
``DataError``; numerical failures (blowup, divergence) from
``NumericalError``. The CLI maps these onto exit codes 2 and 3.
"""


class DataError(Exception):
    """Base class for invalid inputs and malformed data."""


class DomainError(DataError, ValueError):
    """An argument lies outside the domain of an operation."""


class EmptyDatasetError(DomainError):
    """An operation produced or received a dataset with no samples."""


class FormatError(DataError):
    """A binary file could not be decoded."""


class VersionMismatchError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class ChecksumError(FormatError):
    pass


class NumericalError(ArithmeticError):
    """Base class for non-finite values produced during computation."""


class NumericalBlowupError(NumericalError):
    """The finite-difference solver produced a non-finite value.

    ``cell`` holds the (row, col) of the first offending cell.
    """

    def __init__(self, message, cell=None, time=None):
        super().__init__(message)
        self.cell = cell
        self.time = time


class TrainingDivergedError(NumericalError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class RolloutError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class RankDeficiencyWarning(UserWarning):
    """Least squares on the surviving support was rank deficient."""


class DegenerateHistogramWarning(UserWarning):
    """Histogram correlation was undefined (zero variance) and was substituted."""
