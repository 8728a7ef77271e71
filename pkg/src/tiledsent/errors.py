"""Exception types shared across the package."""


class TiledSentError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(TiledSentError, ValueError):
    """An argument violates an operation's precondition."""


class NumericError(TiledSentError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class ParseError(TiledSentError, ValueError):
    """A file could not be parsed; message names the offending line."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateDataError(TiledSentError, ValueError):
    """Data admits no meaningful fit (e.g. all rows identical)."""


class UndefinedStatisticError(TiledSentError, ValueError):
    """A statistic is undefined for the given sample (e.g. zero variance)."""


class ConfigError(TiledSentError, ValueError):
    """Invalid or inconsistent run configuration."""
