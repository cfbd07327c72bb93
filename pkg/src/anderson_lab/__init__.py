"""Numerical laboratory for the Anderson Hamiltonian on the two-torus.

The package builds the renormalized Anderson operator from enhanced white
noise, samples Gaussian free fields and the Φ⁴ Gibbs measure built on it,
and evolves the Wick-ordered cubic wave equation by Galerkin truncation.
"""

from .errors import (
    AndersonLabError,
    BlowupDetected,
    ConfigError,
    CutoffTooLarge,
    DegenerateWeights,
    DomainError,
    EigensolveFailure,
    GridMismatch,
    NoContraction,
    RenormTailWarning,
    ShiftTooSmall,
)
from .spectral_core import Mollifier, SpectralField, TorusGrid

__version__ = "0.1.0"

__all__ = [
    "AndersonLabError",
    "BlowupDetected",
    "ConfigError",
    "CutoffTooLarge",
    "DegenerateWeights",
    "DomainError",
    "EigensolveFailure",
    "GridMismatch",
    "Mollifier",
    "NoContraction",
    "RenormTailWarning",
    "ShiftTooSmall",
    "SpectralField",
    "TorusGrid",
    "__version__",
]
