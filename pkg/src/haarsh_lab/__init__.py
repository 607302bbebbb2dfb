"""Numerical laboratory for quasi-periodic Schrodinger operators with a
randomized Haar-series (randelette) potential on a torus rotation."""
from . import hamiltonian, msa, randelette, spectral, torus

__version__ = "0.1.0"

__all__ = ["torus", "randelette", "hamiltonian", "spectral", "msa", "__version__"]
