"""Error hierarchy shared by the library modules and the CLI."""

from __future__ import annotations


class LabError(Exception):
    """Base class for every error raised by birkhoff-lab."""

    exit_code: int = 1


class ConfigError(LabError, ValueError):
    """The configuration or the command-line flags are invalid."""

    exit_code = 2


class DomainError(LabError, ValueError):
    """An argument lies outside the domain of the operation."""

    exit_code = 2


class PreconditionError(LabError):
    """A caller-asserted precondition was detected to be false."""

    exit_code = 2


class ArityError(LabError):
    """Not enough digits or terms are available for the request."""

    exit_code = 2


class RangeError(LabError):
    """A target value lies outside the window the solver can reach."""

    exit_code = 2

    def __init__(self, message: str, window: tuple[float, float]) -> None:
        """Initialize the error.

        Args:
            message: Human-readable description.
            window: The reachable window.

        """
        super().__init__(message)
        self.window = window


class SolverError(LabError):
    """A numerical solver did not converge or produced an invalid answer."""

    exit_code = 3


class ConvexityError(SolverError):
    """A second derivative that must be positive was not."""


class ConsistencyError(SolverError):
    """Two independent computation routes disagree beyond tolerance."""


class CertificationError(LabError):
    """A remainder or tail could not be certified."""

    exit_code = 3


class IntegrityError(LabError):
    """Sampled data failed an integrity check."""

    exit_code = 3


class PrecisionError(LabError):
    """Working precision ran out before the requested digit count."""

    exit_code = 3

    def __init__(self, message: str, certified: int, digits: tuple[int, ...] = ()) -> None:
        """Initialize the error.

        Args:
            message: Human-readable description.
            certified: Number of digits that were certified.
            digits: The certified digits.

        """
        super().__init__(message)
        self.certified = certified
        self.digits = digits


class OrbitTerminatedError(LabError):
    """The orbit reached a branch endpoint or left every branch domain."""

    exit_code = 3

    def __init__(self, message: str, length: int = 0) -> None:
        """Initialize the error.

        Args:
            message: Human-readable description.
            length: Number of orbit points that were valid before termination.

        """
        super().__init__(message)
        self.length = length


class PartialOrbitError(OrbitTerminatedError):
    """A Birkhoff sum was requested beyond the surviving orbit length."""


class CacheCorruptionError(LabError):
    """A cache entry exists but cannot be read back."""

    exit_code = 4
