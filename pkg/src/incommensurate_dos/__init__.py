"""Regularized density of states of a 1D incommensurate Schrodinger operator.

Two evaluation routes are provided: a momentum-space lattice method with
Chebyshev moments, and a second-order semiclassical expansion built from the
band data of the operator-valued symbol.  A harmonic effective model
describes the oscillations near critical points of the band surfaces.
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .core_model import DosCurve, EnergyGrid, GaussianTestFunction, PotentialSpec

__all__ = ["DosCurve", "EnergyGrid", "GaussianTestFunction", "PotentialSpec", "__version__"]
