"""Steklov spectra, boundary capacities, and isocapacitary constants on
triangulated 2D Riemannian manifolds with boundary."""

from . import capacity, fem, hyperbolic, mesh, spectral, verify
from .errors import (
    AssemblyError,
    ConfigError,
    MeshFormatError,
    ParameterError,
    SizeError,
    SolveError,
    SpectralError,
    SteklovError,
)

__all__ = [
    "capacity",
    "fem",
    "hyperbolic",
    "mesh",
    "spectral",
    "verify",
    "AssemblyError",
    "ConfigError",
    "MeshFormatError",
    "ParameterError",
    "SizeError",
    "SolveError",
    "SpectralError",
    "SteklovError",
]

__version__ = "0.1.0"
