"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`HRSAEError`
so callers (the CLI in particular) can map failures to exit codes.
"""


class HRSAEError(Exception):
    """Base class for package errors."""


class DataError(HRSAEError):
    """Input data is missing, malformed or inconsistent."""


class ParseError(DataError):
    """A population/domain/sample file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(DataError):
    """Scenario configuration is invalid."""


class UnavailableOracleError(DataError):
    """An oracle quantity needs the full study variable, which is absent."""


class DegenerateError(HRSAEError):
    """Numerically degenerate input (zero variance, singular fit, ...)."""


class ModelViolationError(DegenerateError):
    """Fitted model violates a requirement of the method (e.g. slope <= 0)."""


class SizeLimitError(HRSAEError):
    """Problem too large for an exact computation."""


class CalibrationError(DegenerateError):
    """Rejection sampling did not hit a target correlation."""


class NoConvergenceError(DegenerateError):
    """Iterative search hit its cap.

    ``last_value`` and ``last_count`` carry the state at the cap.
    """

    def __init__(self, message: str, last_value: float, last_count: int):
        self.last_value = last_value
        self.last_count = last_count
        super().__init__(f"{message} (last a0={last_value:g}, sign changes={last_count})")
