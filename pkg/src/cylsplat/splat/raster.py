"""Tile-binned front-to-back rasterizer producing RGB, alpha and depth."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..kernels import composite_tiles
from .project import project_cloud, splat_extent

TILE = 16


@dataclass
class RenderOutput:
    image: np.ndarray  # (3, H, W)
    alpha: np.ndarray  # (H, W)
    depth: np.ndarray  # (H, W)
    info: dict = field(default_factory=dict, compare=False)

    @property
    def shape(self):
        return self.alpha.shape

    def validate(self):
        if self.image.shape != (3,) + self.alpha.shape or self.depth.shape != self.alpha.shape:
            raise ValueError("image, alpha and depth shapes disagree")
        if np.any(self.alpha < 0) or np.any(self.alpha > 1):
            raise ValueError("alpha outside [0, 1]")
        if np.any(self.depth < 0):
            raise ValueError("negative depth")
        return self


def sort_key(splat_depths):
    """Front-to-back order: ascending depth, ties kept in input order."""
    return np.argsort(np.asarray(splat_depths, dtype=np.float64), kind="stable")


def bin_tiles(means2d, rx, ry, width, height, tile=TILE):
    """Tile lists for splats given in compositing order.

    Returns ``(tile_offsets, tile_splats)``: the splats touching tile ``t`` are
    ``tile_splats[tile_offsets[t]:tile_offsets[t+1]]``, in input order.
    """
    tiles_x = (width + tile - 1) // tile
    tiles_y = (height + tile - 1) // tile
    n_tiles = tiles_x * tiles_y
    u, v = means2d[:, 0], means2d[:, 1]
    # pixel i is sampled at i + 0.5
    px0 = np.clip(np.ceil(u - rx - 0.5), 0, width - 1)
    px1 = np.clip(np.floor(u + rx - 0.5), 0, width - 1)
    py0 = np.clip(np.ceil(v - ry - 0.5), 0, height - 1)
    py1 = np.clip(np.floor(v + ry - 0.5), 0, height - 1)
    hit = (u + rx - 0.5 >= 0) & (u - rx - 0.5 <= width - 1) & \
          (v + ry - 0.5 >= 0) & (v - ry - 0.5 <= height - 1) & (px0 <= px1) & (py0 <= py1)
    hit &= np.isfinite(u) & np.isfinite(v)
    ids = np.flatnonzero(hit)
    tx0 = (px0[ids] // tile).astype(np.int64)
    tx1 = (px1[ids] // tile).astype(np.int64)
    ty0 = (py0[ids] // tile).astype(np.int64)
    ty1 = (py1[ids] // tile).astype(np.int64)
    nx = tx1 - tx0 + 1
    ny = ty1 - ty0 + 1
    counts = nx * ny
    total = int(counts.sum())
    owner = np.repeat(np.arange(len(ids)), counts)
    local = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    tx = tx0[owner] + local % nx[owner]
    ty = ty0[owner] + local // nx[owner]
    tile_id = ty * tiles_x + tx
    order = np.argsort(tile_id, kind="stable")
    tile_splats = ids[owner[order]]
    offsets = np.searchsorted(tile_id[order], np.arange(n_tiles + 1), side="left")
    return offsets.astype(np.int64), tile_splats.astype(np.int64)


def rasterize(cloud, cam, width=None, height=None, backend=None, tile=TILE):
    """Render ``cloud`` from ``cam`` at ``width x height`` (defaults to the
    camera's image size)."""
    width = cam.width if width is None else int(width)
    height = cam.height if height is None else int(height)
    if width < 1 or height < 1:
        raise ValueError("render size must be positive")
    if (width, height) != (cam.width, cam.height):
        cam = cam.with_image_size(width, height)
    t0 = time.perf_counter()
    sp = project_cloud(cloud, cam)
    order = sort_key(sp.depths)
    means = sp.means2d[order]
    cov2d = sp.cov2d[order]
    opac = sp.opacities[order]
    rx, ry = splat_extent(cov2d, opac)
    offsets, tile_splats = bin_tiles(means, rx, ry, width, height, tile)
    t1 = time.perf_counter()
    image, alpha, depth = composite_tiles(means, sp.conics[order], opac, sp.colors[order],
                                          sp.depths[order], offsets, tile_splats, width,
                                          height, tile, backend=backend)
    t2 = time.perf_counter()
    info = {"n_input": len(cloud), "n_projected": len(sp), "n_pairs": int(len(tile_splats)),
            "prep_s": t1 - t0, "composite_s": t2 - t1}
    return RenderOutput(image, alpha, depth, info)
