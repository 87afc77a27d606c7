"""Exception types shared across the package."""


class CountcureError(Exception):
    """Base class for all package errors."""


class DomainError(CountcureError, ValueError):
    """Argument outside a function's mathematical domain."""


class AlignmentError(CountcureError, ValueError):
    """Series that must share length/dates do not."""


class InsufficientDataError(CountcureError, ValueError):
    """Not enough observations to run a procedure."""


class RankDeficiencyError(CountcureError, ValueError):
    """Design matrix is rank deficient.

    ``column`` is the index (in the original design) of the first column
    that the pivoted factorization could not include.
    """

    def __init__(self, column: int, message: str | None = None):
        self.column = column
        super().__init__(message or f"design matrix is rank deficient at column {column}")


class ConvergenceError(CountcureError, RuntimeError):
    """Iterative fit failed; carries the last iterate when available."""

    def __init__(self, message: str, last_fit=None):
        self.last_fit = last_fit
        super().__init__(message)


class SchemaError(CountcureError, ValueError):
    """Input file does not match any supported schema."""


class FetchError(CountcureError, RuntimeError):
    """Snapshot retrieval failed."""

    def __init__(self, message: str, retryable: bool = False, status: int | None = None):
        self.retryable = retryable
        self.status = status
        super().__init__(message)


class ConfigError(CountcureError, ValueError):
    """Invalid pipeline or service configuration."""
