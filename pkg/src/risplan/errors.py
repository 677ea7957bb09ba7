"""Exception types shared across the package."""


class RisPlanError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(RisPlanError):
    """A configuration or type invariant was violated."""


class ParseError(RisPlanError):
    """A config document could not be parsed; carries a 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateGeometry(RisPlanError):
    """A distance or triangle needed for link angles collapsed to zero."""


class SingularChannel(RisPlanError):
    """The effective channel Gram matrix is numerically singular."""


class DimensionMismatch(RisPlanError):
    """An array argument has an incompatible shape."""


class IndexOutOfRange(RisPlanError, IndexError):
    """A 1-based subcarrier index fell outside 1..M."""


class GridTooLarge(RisPlanError):
    """An exhaustive search grid exceeds the configured point budget."""


class NoCoveredUsers(RisPlanError):
    """No sampled user is covered by the panel for the current orientation."""


class IoError(RisPlanError):
    """A result file could not be written."""
