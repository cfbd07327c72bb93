"""Exception types shared across the package."""

from __future__ import annotations


class AndersonLabError(Exception):
    """Base class for all package errors."""


class GridMismatch(AndersonLabError, ValueError):
    """Fields defined on different grids were combined."""


class NoContraction(AndersonLabError, RuntimeError):
    """A fixed-point iteration failed to contract."""


class CutoffTooLarge(AndersonLabError, ValueError):
    """The Fourier truncation is not resolved by the noise grid."""


class EigensolveFailure(AndersonLabError, RuntimeError):
    """The dense eigensolver did not converge."""


class DomainError(AndersonLabError, ValueError):
    """A spectral function is undefined at some eigenvalue."""


class ShiftTooSmall(AndersonLabError, ValueError):
    """A resolvent shift does not make the operators positive."""


class DegenerateWeights(AndersonLabError, RuntimeError):
    """Importance weights collapsed onto too few samples."""


class BlowupDetected(AndersonLabError, RuntimeError):
    """A trajectory left the admissible amplitude range.

    Parameters
    ----------
    time : float
        Time at which the amplitude bound was first exceeded.
    """

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


class ConfigError(AndersonLabError, ValueError):
    """A run configuration is invalid. ``key`` names the offending entry."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class RenormTailWarning(UserWarning):
    """The unresolved tail of a lattice sum is not negligible."""
