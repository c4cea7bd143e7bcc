"""Nehari-manifold solver for a singular multi-phase Dirichlet problem with Hardy potential."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
