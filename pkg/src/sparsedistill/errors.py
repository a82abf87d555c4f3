"""Exception types shared across the package.

The CLI maps each family onto a process exit code, so library code raises
these rather than bare builtins whenever the failure is user-facing.
"""


class SparseDistillError(Exception):
    """Base class for all package errors."""


class DimensionError(SparseDistillError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(SparseDistillError, ValueError):
    """Invalid configuration value or unknown name."""


class ValidationError(SparseDistillError, ValueError):
    """Input data violates an operation's precondition (e.g. label range)."""


class ContractError(SparseDistillError, RuntimeError):
    """An API was called in a state that violates its contract."""


class FormatError(SparseDistillError, ValueError):
    """A serialized file is malformed.

    ``offset`` is the byte offset (or row number for text formats) at which
    the problem was detected, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(SparseDistillError, FloatingPointError):
    """NaN or Inf produced where finite values are required."""


class MissingArtifactError(SparseDistillError, FileNotFoundError):
    """A pipeline stage needs a file an earlier stage should have written."""
