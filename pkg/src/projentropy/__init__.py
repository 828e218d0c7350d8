"""Projective entropy densities for scalar quasilinear equations in one space dimension."""
from .errors import ProjEntropyError

__version__ = "0.1.0"
__all__ = ["ProjEntropyError", "__version__"]
