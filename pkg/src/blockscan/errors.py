"""Exception hierarchy shared by the loaders, the numerics and the CLI."""


class BlockscanError(Exception):
    """Base class for all errors raised by blockscan."""


class ValidationError(BlockscanError, ValueError):
    """Input data or configuration violates a documented contract."""


class ParseError(ValidationError):
    """A text input could not be parsed.

    ``line`` is the 1-based line number in the offending file, when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NumericalError(BlockscanError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class RankDeficiencyError(NumericalError):
    """A covariance matrix fell below the eigenvalue floor."""

    def __init__(self, side, message=None):
        self.side = side
        super().__init__(message or f"{side} covariance matrix is numerically singular")


class DegenerateCorrelationWarning(RuntimeWarning):
    """A canonical correlation of one made a p-value degenerate."""
