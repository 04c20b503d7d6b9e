"""Feature grids on the cylinder plane.

A feature grid is a ``(C, H, W)`` float array; an all-zero channel vector at a
cell means "nothing projected here".  Normalized sampling coordinates use the
align-corners=False convention: ``-1`` and ``+1`` are the outer edges of the
first and last cells, so cell ``i`` has its center at ``(2 i + 1) / n - 1``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .geometry import CylinderSpec, cyl_to_cartesian, project_points


class Order(str, enum.Enum):
    CLOCKWISE = "clockwise"
    COUNTERCLOCKWISE = "counterclockwise"

    def flipped(self):
        return Order.COUNTERCLOCKWISE if self is Order.CLOCKWISE else Order.CLOCKWISE


@dataclass(frozen=True)
class CylinderPlaneFeature:
    grid: np.ndarray
    spec: CylinderSpec
    order: Order

    def __post_init__(self):
        g = np.asarray(self.grid)
        if g.ndim != 3:
            raise ValueError("plane grid must be C x H x W")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "order", Order(self.order))


def check_grid(grid, name="grid"):
    g = np.asarray(grid)
    if g.ndim != 3:
        raise ValueError(f"{name} must be C x H x W, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError(f"{name} contains non-finite values")
    return g


def to_pixel_coords(coord, n):
    """Normalized coordinate -> continuous cell index (cell centers at integers)."""
    return ((np.asarray(coord, dtype=np.float64) + 1.0) * n - 1.0) * 0.5


def bilinear_sample_points(grid, coords, wrap_x=False):
    """Sample ``grid`` at normalized ``(x, y)`` pairs of shape ``(..., 2)``.

    Returns ``(..., C)``.  Neighbours outside the grid contribute zero and
    coordinates outside ``[-1, 1]`` produce the zero vector.  With ``wrap_x``
    the column axis is periodic (the angular axis of a full cylinder).
    """
    grid = np.asarray(grid, dtype=np.float64)
    C, H, W = grid.shape
    coords = np.asarray(coords, dtype=np.float64)
    lead = coords.shape[:-1]
    cx = coords[..., 0].ravel()
    cy = coords[..., 1].ravel()
    inside = (cx >= -1.0) & (cx <= 1.0) & (cy >= -1.0) & (cy <= 1.0)
    x = to_pixel_coords(np.where(inside, cx, 0.0), W)
    y = to_pixel_coords(np.where(inside, cy, 0.0), H)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    wx = x - x0
    wy = y - y0
    flat = grid.reshape(C, H * W)
    out = np.zeros((cx.size, C))
    for dy, wyk in ((0, 1.0 - wy), (1, wy)):
        yi = y0 + dy
        for dx, wxk in ((0, 1.0 - wx), (1, wx)):
            xi = np.mod(x0 + dx, W) if wrap_x else x0 + dx
            ok = inside & (xi >= 0) & (xi < W) & (yi >= 0) & (yi < H)
            idx = np.where(ok, yi * W + xi, 0)
            w = np.where(ok, wxk * wyk, 0.0)
            out += flat[:, idx].T * w[:, None]
    return out.reshape(lead + (C,))


def bilinear_sample(grid, coords, wrap_x=False):
    """Feature vector at one normalized coordinate pair."""
    return bilinear_sample_points(grid, np.asarray(coords, dtype=np.float64)[None], wrap_x)[0]


def resample(grid, h, w):
    """Bilinear resample to ``h x w`` by sampling at target cell centers."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.shape[1:] == (h, w):
        return grid.copy()
    ys = (2.0 * np.arange(h) + 1.0) / h - 1.0
    xs = (2.0 * np.arange(w) + 1.0) / w - 1.0
    xx, yy = np.meshgrid(xs, ys)
    out = bilinear_sample_points(grid, np.stack([xx, yy], axis=-1))
    return np.moveaxis(out, -1, 0)


def plane_points(spec, h_res=None, w_res=None):
    """Cartesian positions of the cylinder-surface cell centers, ``(H, W, 3)``."""
    th = spec.column_theta(w_res)
    z = spec.row_z(h_res)
    tt, zz = np.meshgrid(th, z)
    cyl = np.stack([np.full_like(tt, spec.radius), tt, zz], axis=-1)
    return cyl_to_cartesian(cyl, spec)


def project_view_to_plane(view_feat, cam, spec):
    """Resample one view's feature map onto the ``H_u x W_u`` cylinder plane."""
    view_feat = check_grid(view_feat, "view feature")
    pts = plane_points(spec)
    uv, _, valid = project_points(pts, cam)
    coords = np.stack([2.0 * uv[..., 0] / cam.width - 1.0, 2.0 * uv[..., 1] / cam.height - 1.0],
                      axis=-1)
    coords = np.where(valid[..., None], coords, 2.0)  # outside -> zero
    out = bilinear_sample_points(view_feat, coords)
    return np.moveaxis(out, -1, 0)


def gamma_compose(f_a, f_b):
    f_a = np.asarray(f_a)
    f_b = np.asarray(f_b)
    if f_a.shape != f_b.shape:
        raise ValueError("gamma_compose needs equal-length features")
    return f_b if np.any(f_b != 0) else f_a


def _compose_grids(acc, incoming):
    written = np.any(incoming != 0, axis=0)
    return np.where(written[None], incoming, acc)


def overlay(per_view_planes, order, spec=None):
    """Fold per-view planes with the overwrite-if-nonzero operator.

    Clockwise folds views ``0 .. N-1`` (later views overwrite earlier ones);
    counterclockwise folds ``N-1 .. 0``.
    """
    planes = [np.asarray(p, dtype=np.float64) for p in per_view_planes]
    if not planes:
        raise ValueError("overlay needs at least one view")
    if any(p.shape != planes[0].shape for p in planes):
        raise ValueError("all per-view planes must share one shape")
    order = Order(order)
    seq = planes if order is Order.CLOCKWISE else planes[::-1]
    acc = seq[0].copy()
    for p in seq[1:]:
        acc = _compose_grids(acc, p)
    return CylinderPlaneFeature(acc, spec, order)


def augment_with_depth(img_feat, depth, confidence):
    """Append depth and confidence channels; maps are resampled to the feature
    resolution when their size differs."""
    img_feat = check_grid(img_feat, "image feature")
    _, h, w = img_feat.shape
    depth = np.asarray(depth, dtype=np.float64)
    confidence = np.asarray(confidence, dtype=np.float64)
    if depth.ndim != 2 or confidence.ndim != 2:
        raise ValueError("depth and confidence must be H x W maps")
    d = resample(depth[None], h, w)
    c = resample(confidence[None], h, w)
    if d.shape[1:] != (h, w) or c.shape[1:] != (h, w):
        raise ValueError("depth/confidence shape mismatch after resampling")
    return np.concatenate([img_feat, d, c], axis=0)


def hflip(plane):
    """Reverse the angular axis; for plane features the order tag toggles."""
    if isinstance(plane, CylinderPlaneFeature):
        return CylinderPlaneFeature(plane.grid[..., ::-1].copy(), plane.spec, plane.order.flipped())
    return np.asarray(plane)[..., ::-1].copy()
