"""Cylinder-plane feature lifting and tile-based Gaussian splatting for
surround-view camera rigs."""

from ._backend import DEFAULT_BACKEND, HAVE_NUMBA, get_threads, set_threads

__version__ = "0.1.0"

__all__ = ["DEFAULT_BACKEND", "HAVE_NUMBA", "get_threads", "set_threads", "__version__"]
