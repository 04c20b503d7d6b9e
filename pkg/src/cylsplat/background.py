"""Background sampling by casting target rays onto the cylinder, reference
background synthesis at 4x resolution, and alpha fusion with the foreground."""

from __future__ import annotations

import math

import numpy as np

from .featureplane import CylinderPlaneFeature, bilinear_sample_points, resample
from .geometry import pixel_rays

AXIS_EPS = 1e-12
RESIDUAL_TOL = 1e-6
BG_SCALE = 4


def _plus_root(x0, y0, dx, dy, radius):
    """``+sqrt`` root of the ray / infinite-cylinder quadratic (vectorized).

    Uses the cancellation-free form of the quadratic formula.  Returns NaN
    where there is no admissible root.
    """
    a = dx * dx + dy * dy
    b = 2.0 * (x0 * dx + y0 * dy)
    c = x0 * x0 + y0 * y0 - radius * radius
    ok = a >= AXIS_EPS
    a_s = np.where(ok, a, 1.0)
    disc = b * b - 4.0 * a_s * c
    ok &= disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    # b >= 0: the + root equals c / q with q = -(b + sq) / 2
    q = -0.5 * (b + sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(b >= 0, c / np.where(q != 0, q, 1.0), (sq - b) / (2.0 * a_s))
    t = np.where((b >= 0) & (q == 0), 0.0, t)
    ok &= t >= 0
    return np.where(ok, t, np.nan)


def ray_cylinder_intersect(ray, spec):
    """First forward hit ``(t_hat, point)`` of ``ray`` with the cylinder wall, or
    ``None`` for axis-parallel rays, misses and hits behind the origin."""
    o = ray.origin - spec.center
    t = float(_plus_root(o[0], o[1], ray.dir[0], ray.dir[1], spec.radius))
    if math.isnan(t):
        return None
    p = ray.origin + t * ray.dir
    rel = p - spec.center
    r2 = spec.radius ** 2
    if abs(rel[0] ** 2 + rel[1] ** 2 - r2) > RESIDUAL_TOL * r2:
        return None
    return t, p


def intersect_many(origins, dirs, spec):
    """Vectorized intersection; returns ``(t, points)`` with NaN for misses."""
    o = np.asarray(origins, dtype=np.float64) - spec.center
    d = np.asarray(dirs, dtype=np.float64)
    t = _plus_root(o[..., 0], o[..., 1], d[..., 0], d[..., 1], spec.radius)
    pts = np.asarray(origins, dtype=np.float64) + t[..., None] * d
    return t, pts


def _uv(rel, spec, full_range):
    th = np.arctan2(rel[..., 1], rel[..., 0])
    th = np.where(th >= math.pi, th - 2.0 * math.pi, th)
    u = -th / math.pi
    v = (-2.0 if full_range else -1.0) * rel[..., 2] / spec.height
    return u, v


def cylinder_uv(point, spec, full_range=False):
    """Normalized ``(u, v)`` of a point on the cylinder wall.

    ``u = -theta / pi``.  By default ``v = -z / Z_u``, which spans
    ``[-1/2, 1/2]``; ``full_range=True`` uses ``v = -2 z / Z_u`` so the wall
    height maps onto the full plane rows.
    """
    rel = np.asarray(point, dtype=np.float64) - spec.center
    r2 = spec.radius ** 2
    if abs(rel[0] ** 2 + rel[1] ** 2 - r2) > RESIDUAL_TOL * r2:
        raise ValueError("point is not on the cylinder wall")
    u, v = _uv(rel, spec, full_range)
    return float(u), float(v)


def sample_background(plane_feat, target_cam, out_w, out_h, full_range=False):
    """``(C, out_h, out_w)`` features seen from ``target_cam`` on the cylinder.

    The angular axis wraps; wall hits beyond the plane's vertical span are
    clamped to the first / last row.  Rays that miss the wall get zeros.
    """
    if not isinstance(plane_feat, CylinderPlaneFeature) or plane_feat.spec is None:
        raise TypeError("plane_feat must be a CylinderPlaneFeature with a spec")
    spec = plane_feat.spec
    cam = target_cam if (target_cam.width, target_cam.height) == (out_w, out_h) \
        else target_cam.with_image_size(out_w, out_h)
    dirs = pixel_rays(cam)
    origins = np.broadcast_to(cam.position, dirs.shape)
    t, pts = intersect_many(origins, dirs, spec)
    hit = np.isfinite(t)
    u, v = _uv(np.where(hit[..., None], pts, spec.center + [spec.radius, 0, 0]) - spec.center,
               spec, full_range)
    # hits above or below the plane's vertical span take the edge row
    edge = 1.0 - 1.0 / plane_feat.grid.shape[1]
    v = np.clip(v, -edge, edge)
    coords = np.stack([np.where(hit, u, 2.0), np.where(hit, v, 2.0)], axis=-1)
    # the angular axis is closed: interpolate across the u = +-1 seam
    out = bilinear_sample_points(plane_feat.grid, coords, wrap_x=True)
    return np.moveaxis(out, -1, 0)


def _decode(decoder, feat):
    if callable(decoder) and not hasattr(decoder, "weight"):
        return decoder(feat)
    w = decoder.weight if hasattr(decoder, "weight") else np.asarray(decoder, dtype=np.float64)
    b = getattr(decoder, "bias", None)
    if w.shape[1] != feat.shape[0]:
        raise ValueError(f"decoder expects {w.shape[1]} channels, got {feat.shape[0]}")
    out = np.einsum("oc,chw->ohw", w, feat)
    if b is not None:
        out = out + np.asarray(b)[:, None, None]
    return out


def synthesize_background(feat, decoder, target_hw=None):
    """RGB background from per-pixel features with a fixed linear decoder.

    ``feat`` is expected at ``4 H_t x 4 W_t``; when ``target_hw`` is given and
    the feature size differs it is bilinearly resampled first.
    """
    feat = np.asarray(feat, dtype=np.float64)
    if feat.ndim != 3:
        raise ValueError("background feature must be C x H x W")
    if target_hw is not None:
        h, w = BG_SCALE * target_hw[0], BG_SCALE * target_hw[1]
        if feat.shape[1:] != (h, w):
            feat = resample(feat, h, w)
    rgb = _decode(decoder, feat)
    if rgb.shape[0] != 3:
        raise ValueError("background decoder must produce 3 channels")
    return np.clip(rgb, 0.0, 1.0)


def box_downsample(img, k=BG_SCALE):
    c, h, w = img.shape
    if h % k or w % k:
        raise ValueError(f"image size {h}x{w} is not a multiple of {k}")
    return img.reshape(c, h // k, k, w // k, k).mean(axis=(2, 4))


def fuse(fg, bg):
    """``I = I_fg + (1 - A_fg) * downsample(bg)``, clamped to ``[0, 1]``."""
    bg = np.asarray(bg, dtype=np.float64)
    H, W = fg.alpha.shape
    if bg.shape != (3, BG_SCALE * H, BG_SCALE * W):
        raise ValueError(f"background must be 3 x {BG_SCALE * H} x {BG_SCALE * W}, got {bg.shape}")
    small = box_downsample(bg)
    return np.clip(fg.image + (1.0 - fg.alpha)[None] * small, 0.0, 1.0)


def channel_select(channels, n_in):
    """Decoder matrix copying the given input channels to RGB."""
    w = np.zeros((3, n_in))
    for o, c in enumerate(channels):
        w[o, c] = 1.0
    return w


__all__ = ["ray_cylinder_intersect", "intersect_many", "cylinder_uv", "sample_background",
           "synthesize_background", "box_downsample", "fuse", "channel_select"]
