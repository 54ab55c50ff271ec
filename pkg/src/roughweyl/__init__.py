"""Numerical checks of semiclassical Weyl asymptotics for rough potentials."""

__version__ = "0.1.0"

from .errors import (ConfigError, CoverageError, DomainError, FitError, FramingError, NumericalError,
                     PreconditionError, ResourceError)
from .grid import GridSpec, SampledField
from .potentials import Bump, HolderClass, PotentialSpec, SemiclassicalParams, choose_scaling, harmonic

__all__ = [
    "Bump", "ConfigError", "CoverageError", "DomainError", "FitError", "FramingError", "GridSpec",
    "HolderClass", "NumericalError", "PotentialSpec", "PreconditionError", "ResourceError",
    "SampledField", "SemiclassicalParams", "choose_scaling", "harmonic",
]
