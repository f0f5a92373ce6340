"""Spectral workbench for coupled KdV systems of Gear-Grimshaw type."""

__version__ = "0.1.0"

from .errors import (ConfigError, FieldFormatError, GridMismatchError, IntegrationFault,
                     InvalidCoefficientsError, SeamError)
from .spectral import Field, SpectralGrid, to_physical, to_spectral
from .model import OriginalCoefficients, ReducedCoefficients, Diagonalization, reduce, validate
from .dynamics import State, Trajectory, integrate, integrate_original, picard_iterate

__all__ = [
    "ConfigError", "FieldFormatError", "GridMismatchError", "IntegrationFault",
    "InvalidCoefficientsError", "SeamError", "Field", "SpectralGrid", "to_physical",
    "to_spectral", "OriginalCoefficients", "ReducedCoefficients", "Diagonalization", "reduce",
    "validate", "State", "Trajectory", "integrate", "integrate_original", "picard_iterate",
]
