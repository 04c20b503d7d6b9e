"""Hot numeric kernels with numba and pure-numpy implementations."""

from .raster import ALPHA_MAX, ALPHA_MIN, T_MIN, composite_tiles
from .sampling import deposit_two_planes, trilinear_gather

__all__ = ["ALPHA_MAX", "ALPHA_MIN", "T_MIN", "composite_tiles", "deposit_two_planes",
           "trilinear_gather"]
