"""Exception types shared across the package."""

from __future__ import annotations


class FowlerError(Exception):
    """Base class for all package errors."""


class DomainError(FowlerError, ValueError):
    """Parameters outside the admissible domain (Hardy bound, n < 3, l <= 2, r <= 0)."""


class RegimeError(FowlerError):
    """The requested object does not exist in the current parameter regime."""


class StepFailure(FowlerError):
    """Adaptive step size underflowed; carries the last accepted state."""

    def __init__(self, message: str, t: float, state: tuple[float, float]):
        super().__init__(message)
        self.t = t
        self.state = state


class SeedOverflow(FowlerError):
    """Seed beyond the empirical D^inf / L^inf: the side-1 solve blows up before the switch."""


class BracketNotFound(FowlerError):
    """No classification flip was found inside the scanned seed range."""

    def __init__(self, message: str, scanned: tuple[float, float], found: int = 0):
        super().__init__(message)
        self.scanned = scanned
        self.found = found


class BudgetExhausted(FowlerError):
    """Arc-length budget ran out before all requested intersections were found."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class Unresolved(FowlerError):
    """Horizon reached without any terminal criterion being met."""


class DegenerateCrossing(FowlerError):
    """An x = 0 crossing had |y| below the nondegeneracy floor."""

    def __init__(self, message: str, times: list[float]):
        super().__init__(message)
        self.times = times
