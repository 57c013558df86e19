"""Exception hierarchy for trendlab.

Validation-style errors double as ValueError so callers can catch them
idiomatically; numerical failures derive from RuntimeError.
"""


class TrendLabError(Exception):
    """Base class for all trendlab errors."""


class TableParseError(TrendLabError, ValueError):
    """Malformed CSV input; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TableValidationError(TrendLabError, ValueError):
    """Counts or doses violate the dose-response table invariants."""


class ScalingError(TrendLabError, ValueError):
    """Requested dose scaling is not defined for the given doses."""


class DesignError(TrendLabError, ValueError):
    """Design matrix is rank deficient or has too few rows."""


class StartValueError(TrendLabError, RuntimeError):
    """No feasible starting point for the requested link."""


class ConvergenceError(TrendLabError, RuntimeError):
    """IRLS failed to converge; ``last_fit`` carries the final iterate."""

    def __init__(self, message: str, last_fit=None):
        self.last_fit = last_fit
        super().__init__(message)


class NotConvergedError(TrendLabError, RuntimeError):
    """Operation requires a converged fit."""


class DegreesOfFreedomError(TrendLabError, ValueError):
    """Residual degrees of freedom are zero or negative."""


class AlignmentError(TrendLabError, ValueError):
    """Stacked fits do not share the same observation rows."""


class DegenerateComponentError(TrendLabError, ValueError):
    """A stacked component has (numerically) zero variance."""


class CorrelationMatrixError(TrendLabError, ValueError):
    """Matrix is not a valid correlation matrix within tolerance."""


class QuantileSearchError(TrendLabError, RuntimeError):
    """Root search for a critical value could not bracket the target."""


class DegenerateTableError(TrendLabError, ValueError):
    """Pooled proportion is 0 or 1; trend statistic undefined."""
