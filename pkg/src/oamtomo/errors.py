from __future__ import annotations


class OamtomoError(Exception):
    """Base exception."""


# *** caller errors ***


class InvalidArgumentError(OamtomoError, ValueError):
    """Raised when an argument is outside the domain of an operation.

    E.g. an odd-sized matrix given to the block decomposition, or a path index
    that does not exist on the rail.
    """


class PreconditionError(OamtomoError):
    """Raised when an input violates a physical precondition.

    Typically a matrix that is not Hermitian, not positive semidefinite or not
    of unit trace within the tolerance the operation requires.
    """


class ConfigError(OamtomoError):
    """Raised for malformed or invalid experiment configuration.

    Args:
        msg     Descriptive message of the error
        line    1-based line number in the config file, or None if unknown
    """

    def __init__(self, msg: str, line: int | None = None):
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


class FormatError(OamtomoError):
    """Raised when a density-matrix, netlist or kernel file can not be read.

    Args:
        msg     Descriptive message of the error
        line    1-based line number in the file, or None if unknown
    """

    def __init__(self, msg: str, line: int | None = None):
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


# *** numerical limits ***


class CapacityError(OamtomoError):
    """Raised when a basis or cascade is too small for the requested modes."""


class ResolutionError(OamtomoError):
    """Raised when a sampling grid does not resolve the requested fields.

    Args:
        msg              Descriptive message of the error
        required_size    Minimum number of samples per axis
        required_extent  Minimum half-width of the grid, in units of w0
    """

    def __init__(self, msg: str, required_size: int, required_extent: float):
        super().__init__(msg)
        self.required_size = required_size
        self.required_extent = required_extent


class TruncationError(OamtomoError):
    """Raised when the AHST weight can not be integrated on the given grid.

    Args:
        msg          Descriptive message of the error
        safe_radius  Largest frequency radius (1/length units) that can be used
    """

    def __init__(self, msg: str, safe_radius: float):
        super().__init__(msg)
        self.safe_radius = safe_radius


class InvariantViolation(OamtomoError):
    """Raised when a checked device or reconstruction invariant does not hold."""
