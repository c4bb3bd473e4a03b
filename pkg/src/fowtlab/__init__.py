"""Reduced-order floating wind turbine simulation laboratory."""

__version__ = "0.1.0"

from .params import (CoefficientSurface, ParameterSet, default_parameters,
                     default_surfaces, load_parameters, load_surface)
from .dynamics import SimulationFailure, StateVector

__all__ = [
    "__version__",
    "CoefficientSurface",
    "ParameterSet",
    "SimulationFailure",
    "StateVector",
    "default_parameters",
    "default_surfaces",
    "load_parameters",
    "load_surface",
]
