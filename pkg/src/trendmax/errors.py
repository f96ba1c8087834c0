"""Exception types shared across the package."""


class TrendMaxError(Exception):
    """Base class for all package errors."""


class ValidationError(TrendMaxError, ValueError):
    """Input data or configuration violates a documented constraint."""


class NumericalError(TrendMaxError, ArithmeticError):
    """A numerical procedure failed (non-convergence, boundary, singularity)."""

    def __init__(self, message, *, last_iterate=None, error_estimate=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.error_estimate = error_estimate
