"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: argument errors exit with 2,
data errors with 3, and run failures with 4.
"""


class MarginBoundError(Exception):
    """Base class for all package errors."""


class ArgumentError(MarginBoundError):
    """A caller-supplied argument violates a precondition."""


class DataError(MarginBoundError):
    """Base class for problems with input data files or datasets."""


class DataFormatError(DataError):
    """A data file or record does not match its declared format."""


class DataConsistencyError(DataError):
    """Two data sources that must agree do not (e.g. image/label counts)."""


class DataIOError(DataError):
    """A data file is truncated or unreadable; message includes the byte offset."""


class RunError(MarginBoundError):
    """A computation failed at run time."""


class TrainingError(RunError):
    """Training aborted, e.g. a non-finite gradient; message includes the step."""


class MarginInversionError(RunError):
    """A margin function never reaches the requested inversion target."""
