"""Cylinder plane feature groups: K concentric planes sampled as a frustum volume.

A plane feature with ``K * D`` channels is split into ``K`` planes of ``D``
channels each; plane 0 is the innermost radius.  Points are addressed by three
ratios: ``t`` (radial, between ``r_min`` and ``r_max``), ``s`` (angular) and
``p`` (vertical, relative to the local frustum height at that radius).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .featureplane import CylinderPlaneFeature, to_pixel_coords
from .geometry import CylinderSpec, cartesian_to_cyl, wrap_angle
from .kernels import deposit_two_planes, trilinear_gather

R_MIN_DEFAULT = 0.5


class CpfgRangeError(ValueError):
    """A point lies outside the radial span (or on the axis) of a CPFG."""


@dataclass(frozen=True)
class Cpfg:
    data: np.ndarray  # (D, K, H, W)
    r_min: float
    r_max: float
    spec: CylinderSpec

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 4:
            raise ValueError("CPFG data must be D x K x H x W")
        if not np.all(np.isfinite(d)):
            raise ValueError("CPFG data contains non-finite values")
        if not 0 <= self.r_min < self.r_max:
            raise ValueError("need 0 <= r_min < r_max")
        object.__setattr__(self, "data", d)

    @property
    def dim(self):
        return self.data.shape[0]

    @property
    def planes(self):
        return self.data.shape[1]

    @property
    def h_res(self):
        return self.data.shape[2]

    @property
    def w_res(self):
        return self.data.shape[3]

    def header(self):
        return {"K": self.planes, "D": self.dim, "r_min": float(self.r_min),
                "r_max": float(self.r_max), "spec": self.spec.to_dict()}


@dataclass(frozen=True)
class NormalizedCpfgCoord:
    t: np.ndarray
    s: np.ndarray
    p: np.ndarray

    @property
    def canonical(self):
        return np.stack([2.0 * np.asarray(self.t) - 1.0, 2.0 * np.asarray(self.s) - 1.0,
                         2.0 * np.asarray(self.p) - 1.0], axis=-1)


def default_r_max(occ_range, center=(0.0, 0.0)):
    """Largest horizontal distance from ``center`` to a corner of the range."""
    x0, y0, _, x1, y1, _ = occ_range
    cx, cy = center[0], center[1]
    return max(math.hypot(x - cx, y - cy) for x in (x0, x1) for y in (y0, y1))


def reshape_to_cpfg(f, k, r_min, r_max, spec):
    """Split ``(K*D, H, W)`` channels into a ``(D, K, H, W)`` group.

    Channel block ``[j*D, (j+1)*D)`` becomes plane ``j``.
    """
    g = f.grid if isinstance(f, CylinderPlaneFeature) else np.asarray(f, dtype=np.float64)
    if g.ndim != 3:
        raise ValueError("plane feature must be C x H x W")
    c, h, w = g.shape
    if k < 1 or c % k:
        raise ValueError(f"{c} channels are not divisible into {k} planes")
    data = g.reshape(k, c // k, h, w).transpose(1, 0, 2, 3)
    return Cpfg(np.ascontiguousarray(data), r_min, r_max, spec)


def _ratios(cyl, r_min, r_max, spec):
    r, th, z = cyl[..., 0], cyl[..., 1], cyl[..., 2]
    t = (r - r_min) / (r_max - r_min)
    s = (math.pi - th) / (2.0 * math.pi)
    p = 0.5 - z * spec.radius / (spec.height * r)
    return t, s, p


def normalize_point(p, cpfg, clamp=False):
    """``(r, theta, z)`` point(s) to the ``(t, s, p)`` ratios of ``cpfg``.

    Radii outside ``[r_min, r_max]`` raise :class:`CpfgRangeError` unless
    ``clamp`` is set, in which case they are clamped first.
    """
    cyl = np.array(p, dtype=np.float64)
    r = cyl[..., 0]
    if clamp:
        cyl[..., 0] = np.clip(r, cpfg.r_min, cpfg.r_max)
        r = cyl[..., 0]
    if np.any(r <= 0):
        raise CpfgRangeError("vertical ratio is undefined on the cylinder axis (r = 0)")
    if np.any((r < cpfg.r_min) | (r > cpfg.r_max)):
        raise CpfgRangeError(f"radius outside [{cpfg.r_min}, {cpfg.r_max}]")
    return NormalizedCpfgCoord(*_ratios(cyl, cpfg.r_min, cpfg.r_max, cpfg.spec))


def denormalize(coord, cpfg):
    """Inverse of :func:`normalize_point`: ratios back to ``(r, theta, z)``."""
    t, s, p = (np.asarray(v, dtype=np.float64) for v in (coord.t, coord.s, coord.p))
    r = cpfg.r_min + t * (cpfg.r_max - cpfg.r_min)
    th = wrap_angle(math.pi - 2.0 * math.pi * s)
    z = (0.5 - p) * cpfg.spec.height * r / cpfg.spec.radius
    return np.stack([r, np.asarray(th), z], axis=-1)


def node_coords(canonical, shape):
    """Canonical coordinates ``(N, 3)`` to continuous ``(plane, row, col)``
    node indices for a ``(K, H, W)`` grid, plus the in-range mask."""
    c = np.asarray(canonical, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(c)):
        raise ValueError("canonical coordinates must be finite")
    inside = np.all((c >= -1.0) & (c <= 1.0), axis=1)
    K, H, W = shape
    return to_pixel_coords(c[:, 0], K), to_pixel_coords(c[:, 2], H), to_pixel_coords(c[:, 1], W), inside


def trilinear_sample_points(cpfg, canonical, backend=None):
    """Sample at canonical ``(x_t, x_s, x_p)`` coordinates ``(N, 3)``; returns ``(D, N)``.

    ``x_t`` indexes planes, ``x_s`` columns and ``x_p`` rows.  Coordinates
    outside ``[-1, 1]`` give the zero vector.
    """
    xk, xh, xw, inside = node_coords(canonical, cpfg.data.shape[1:])
    return trilinear_gather(cpfg.data, xk, xh, xw, inside, backend=backend)


def trilinear_sample(cpfg, coord, backend=None):
    """Feature vector (length ``D``) at one normalized coordinate."""
    canon = coord.canonical if isinstance(coord, NormalizedCpfgCoord) else coord
    return trilinear_sample_points(cpfg, np.asarray(canon)[None], backend=backend)[:, 0]


def grid_canonical(points, r_min, r_max, spec):
    """Canonical coordinates of Cartesian points with radii clamped to the span."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cyl = cartesian_to_cyl(pts, spec)
    cyl[:, 0] = np.clip(cyl[:, 0], max(r_min, 1e-12), r_max)
    t, s, p = _ratios(cyl, r_min, r_max, spec)
    return np.stack([2 * t - 1, 2 * s - 1, 2 * p - 1], axis=-1)


def sample_grid(cpfg, points, backend=None):
    """Features at Cartesian ``points`` ``(N, 3)``; radii are clamped to the
    CPFG span so every point gets a value.  Returns ``(D, N)``."""
    canon = grid_canonical(points, cpfg.r_min, cpfg.r_max, cpfg.spec)
    return trilinear_sample_points(cpfg, canon, backend=backend)


def deposit_indices(centers, cpfg_shape, r_min, r_max, spec):
    """Plane index, interpolation weight and cell for each point.

    Returns ``(plane, q, row, col, keep)``.  A point is kept when both of its
    planes exist and its row lies inside the grid; the angular axis wraps.
    """
    K, H, W = cpfg_shape
    cyl = cartesian_to_cyl(np.asarray(centers, dtype=np.float64).reshape(-1, 3), spec)
    r = cyl[:, 0]
    safe = np.where(r > 0, r, 1.0)
    t, s, p = _ratios(np.stack([safe, cyl[:, 1], cyl[:, 2]], axis=-1), r_min, r_max, spec)
    tk = t * K
    plane = np.floor(tk)
    q = tk - plane
    row = np.floor(p * H)
    col = np.mod(np.floor(s * W), W)
    keep = (r > 0) & (tk >= 0) & (tk <= K - 1) & (row >= 0) & (row < H)
    # plane K-1 exactly: all weight stays on the last plane
    q = np.where(keep, q, 0.0)
    return plane.astype(np.int64), q, row.astype(np.int64), col.astype(np.int64), keep


def project_pixel_features(centers, feats, cpfg_shape, r_min, r_max, spec, backend=None):
    """Scatter per-point features into a ``(D, K, H, W)`` array.

    Each point splits its feature between planes ``floor(t K)`` and the next one
    with weights ``1 - q`` and ``q``; deposits landing in the same cell add up.
    """
    feats = np.asarray(feats, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    if feats.ndim != 2 or len(feats) != len(centers):
        raise ValueError("need one feature vector per center")
    K, H, W = cpfg_shape
    plane, q, row, col, keep = deposit_indices(centers, cpfg_shape, r_min, r_max, spec)
    shape = (feats.shape[1], K, H, W)
    return deposit_two_planes(shape, plane[keep], q[keep], row[keep], col[keep], feats[keep],
                              backend=backend)


def _as_mixer(mixer):
    if callable(mixer) and not hasattr(mixer, "apply"):
        return mixer
    m = mixer.weight if hasattr(mixer, "weight") else np.asarray(mixer, dtype=np.float64)
    return lambda x: np.einsum("oc,chw->ohw", m, x)


def inject_projection(f_plus, f_minus, f_proj, mixer):
    """Add the mixed projection to the forward plane and its angular flip to the
    reversed plane.  ``mixer`` maps ``K * D_pix`` channels to the plane channels
    (a matrix, a :class:`~cylsplat.gaussians.DecoderParams` or a callable)."""
    f_proj = np.asarray(f_proj, dtype=np.float64)
    if f_proj.ndim != 4:
        raise ValueError("projection must be D_pix x K x H x W")
    d, k, h, w = f_proj.shape
    if f_plus.grid.shape[1:] != (h, w) or f_minus.grid.shape != f_plus.grid.shape:
        raise ValueError("projection resolution does not match the planes")
    flat = f_proj.transpose(1, 0, 2, 3).reshape(k * d, h, w)
    mix = _as_mixer(mixer)
    add = mix(flat)
    add_flip = mix(flat[..., ::-1])
    if add.shape != f_plus.grid.shape:
        raise ValueError(f"mixer output {add.shape} does not match plane {f_plus.grid.shape}")
    return (CylinderPlaneFeature(f_plus.grid + add, f_plus.spec, f_plus.order),
            CylinderPlaneFeature(f_minus.grid + add_flip, f_minus.spec, f_minus.order))
