"""Exception hierarchy shared by all fdcov modules.

Input problems map to CLI exit code 2, numerical failures to exit code 3.
"""


class FdcovError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputError(FdcovError, ValueError):
    """Invalid data or arguments supplied by the caller."""

    exit_code = 2


class SchemaError(InputError):
    """A required CSV column is missing."""


class ParseError(InputError):
    """A CSV cell could not be parsed; carries the 1-based data row number."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class UsageError(InputError):
    """Operands are incompatible (e.g. surfaces on different grids)."""


class NumericalError(FdcovError, ArithmeticError):
    """A numerical routine failed to produce a trustworthy result."""

    exit_code = 3


class ConvergenceError(NumericalError):
    """Iterative solver hit its iteration cap; ``residual`` is what it reached."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class EstimationError(NumericalError):
    """Covariance smoothing left too many grid cells without kernel mass."""

    def __init__(self, message, empty_fraction=None):
        super().__init__(message)
        self.empty_fraction = empty_fraction


class TruncationError(NumericalError):
    """Requested truncation exceeds the numerical rank of the surface."""

    def __init__(self, message, max_valid_k=None):
        super().__init__(message)
        self.max_valid_k = max_valid_k


class StageError(FdcovError):
    """Wraps an error raised inside one stage of the split-test pipeline."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
