"""Exception taxonomy used across the package.

Every error raised by fdce derives from :class:`FdceError`, so callers can
catch package failures with one handler while still distinguishing the
common cases (dimension mismatches, degenerate inputs, solver failures).
"""


class FdceError(Exception):
    """Base class for all fdce-specific errors."""


class InvalidDimensionError(FdceError, ValueError):
    """An array argument has an incompatible shape, size, or length."""


class DegenerateDataError(FdceError, ValueError):
    """Input data carries no usable information (empty, all-zero, ...)."""


class DegenerateGridError(FdceError, ValueError):
    """A prior grid produced non-finite filter offsets."""


class NumericalConditioningError(FdceError, ArithmeticError):
    """A linear solve failed or returned non-finite values."""


class UnsupportedConfigurationError(FdceError, ValueError):
    """The operation requires a configuration this build does not support."""


class TrainingDivergedError(FdceError, RuntimeError):
    """Training produced a non-finite loss."""


class ParseError(FdceError, ValueError):
    """A serialized artifact (dataset or parameter file) is malformed."""


class ValidationError(FdceError, ValueError):
    """A configuration value failed validation."""


class MissingArtifactError(FdceError, FileNotFoundError):
    """A referenced dataset or model file does not exist."""
