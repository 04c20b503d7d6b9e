from .project import (LOW_PASS, NEAR, ProjectedSplats, Splat2D, eval_sh, project_cloud,
                      project_gaussian, sh_to_color, splat_extent)
from .raster import TILE, RenderOutput, bin_tiles, rasterize, sort_key

__all__ = ["LOW_PASS", "NEAR", "ProjectedSplats", "Splat2D", "eval_sh", "project_cloud",
           "project_gaussian", "sh_to_color", "splat_extent", "TILE", "RenderOutput",
           "bin_tiles", "rasterize", "sort_key"]
