"""Seeded synthetic street scenes with analytic ground truth.

A scene is a flat-Gaussian ground disc plus a few boxes whose faces are tiled
with thin Gaussians, each box in its own color.  Positions are jittered so no
two Gaussians share a depth exactly, which keeps the global depth sort stable
under reordering.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass

import numpy as np

from ..gaussians import GaussianCloud, rgb_to_sh0
from ..geometry import pixel_rays
from ..splat import RenderOutput, rasterize

SCENE_EXTENT = (-18.0, -18.0, -0.5, 18.0, 18.0, 6.0)
SKY_RGB = (0.55, 0.70, 0.90)
GROUND_RGB = (0.35, 0.33, 0.30)


def constant_sky(rgb=SKY_RGB):
    c = np.asarray(rgb, dtype=np.float64)

    def fn(dirs):
        d = np.asarray(dirs, dtype=np.float64)
        return np.broadcast_to(c, d.shape).copy()
    return fn


def gradient_sky(horizon=(0.85, 0.85, 0.80), zenith=(0.25, 0.45, 0.85)):
    h = np.asarray(horizon, dtype=np.float64)
    z = np.asarray(zenith, dtype=np.float64)

    def fn(dirs):
        d = np.asarray(dirs, dtype=np.float64)
        k = np.clip(d[..., 2:3], 0.0, 1.0)
        return (1.0 - k) * h + k * z
    return fn


@dataclass
class SyntheticScene:
    gt_cloud: GaussianCloud
    sky_color_fn: object
    extent: tuple
    seed: int
    sky_rgb: tuple | None = SKY_RGB  # set when the sky is a constant color

    def inside_extent(self):
        lo = np.array(self.extent[:3])
        hi = np.array(self.extent[3:])
        m = self.gt_cloud.means
        return bool(np.all((m >= lo) & (m <= hi)))


def _yaw_quats(yaw):
    return np.stack([np.cos(yaw / 2), np.zeros_like(yaw), np.zeros_like(yaw), np.sin(yaw / 2)], -1)


def _box_shell(rng, center, size, yaw, color, spacing):
    """Gaussians tiling the five visible faces of a box (no bottom)."""
    sx, sy, sz = size
    pts, normals = [], []
    for axis, extent in ((0, sx), (1, sy), (2, sz)):
        others = [a for a in range(3) if a != axis]
        na = max(2, int(round(size[others[0]] / spacing)))
        nb = max(2, int(round(size[others[1]] / spacing)))
        ua = (np.arange(na) + 0.5) / na - 0.5
        ub = (np.arange(nb) + 0.5) / nb - 0.5
        ga, gb = np.meshgrid(ua * size[others[0]], ub * size[others[1]], indexing="ij")
        for sign in ((1.0,) if axis == 2 else (-1.0, 1.0)):
            p = np.zeros((ga.size, 3))
            p[:, others[0]] = ga.ravel()
            p[:, others[1]] = gb.ravel()
            p[:, axis] = sign * extent / 2.0
            pts.append(p)
            normals.append(np.full(len(p), axis))
    p = np.concatenate(pts)
    n = np.concatenate(normals)
    p += rng.uniform(-0.02, 0.02, size=p.shape)
    c, s = math.cos(yaw), math.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    means = p @ rot.T + center + [0.0, 0.0, sz / 2.0]
    scales = np.full((len(p), 3), 0.55 * spacing)
    scales[np.arange(len(p)), n] = 0.03
    quats = _yaw_quats(np.full(len(p), yaw))
    shade = rng.uniform(0.85, 1.0, size=(len(p), 1))
    rgb = np.clip(np.asarray(color) * shade, 0.0, 1.0)
    return means, quats, scales, rgb


def generate_scene(seed, complexity=1, sky="constant"):
    """Deterministic scene for ``seed``.

    ``complexity`` 0 gives a single Gaussian; higher values add ground
    Gaussians and boxes.  ``sky`` is ``"constant"`` or ``"gradient"``.
    """
    rng = np.random.default_rng(seed)
    lo = np.array(SCENE_EXTENT[:3])
    hi = np.array(SCENE_EXTENT[3:])
    if complexity <= 0:
        az = rng.uniform(-math.pi, math.pi)
        r = rng.uniform(4.0, 8.0)
        means = np.array([[r * math.cos(az), r * math.sin(az), rng.uniform(1.0, 2.0)]])
        quats = np.array([[1.0, 0.0, 0.0, 0.0]])
        scales = np.full((1, 3), 0.4)
        opac = np.array([0.9])
        rgb = np.array([[0.9, 0.2, 0.1]])
    else:
        parts = []
        n_ground = 250 * complexity
        r = np.sqrt(rng.uniform(3.0 ** 2, 16.0 ** 2, n_ground))
        az = rng.uniform(-math.pi, math.pi, n_ground)
        g_means = np.stack([r * np.cos(az), r * np.sin(az), rng.uniform(-0.02, 0.02, n_ground)], 1)
        g_scales = np.column_stack([np.full(n_ground, 0.9), np.full(n_ground, 0.9),
                                    np.full(n_ground, 0.02)])
        g_rgb = np.clip(np.asarray(GROUND_RGB) + rng.normal(0, 0.04, (n_ground, 3)), 0, 1)
        parts.append((g_means, _yaw_quats(rng.uniform(0, math.pi, n_ground)), g_scales, g_rgb))
        n_boxes = 2 + 2 * complexity
        hues = (rng.uniform() + np.arange(n_boxes) / n_boxes) % 1.0
        box_az = rng.uniform(-math.pi, math.pi) + 2 * math.pi * np.arange(n_boxes) / n_boxes
        for i in range(n_boxes):
            dist = rng.uniform(6.0, 13.0)
            a = box_az[i] + rng.uniform(-0.2, 0.2)
            center = np.array([dist * math.cos(a), dist * math.sin(a), 0.0])
            size = rng.uniform([1.2, 1.2, 1.0], [3.0, 3.0, 3.5])
            color = colorsys.hsv_to_rgb(hues[i], 0.75, 0.9)
            parts.append(_box_shell(rng, center, size, rng.uniform(0, math.pi), color, 0.5))
        means = np.concatenate([p[0] for p in parts])
        quats = np.concatenate([p[1] for p in parts])
        scales = np.concatenate([p[2] for p in parts])
        rgb = np.concatenate([p[3] for p in parts])
        opac = rng.uniform(0.6, 0.95, len(means))
    means = np.clip(means, lo, hi)
    cloud = GaussianCloud(means, quats, scales, opac, rgb_to_sh0(rgb)[:, None, :], "scene")
    if sky == "constant":
        return SyntheticScene(cloud, constant_sky(), SCENE_EXTENT, int(seed), SKY_RGB)
    if sky == "gradient":
        return SyntheticScene(cloud, gradient_sky(), SCENE_EXTENT, int(seed), None)
    raise ValueError(f"unknown sky {sky!r}")


@dataclass
class GroundTruthView:
    render: RenderOutput
    sky: np.ndarray     # (3, H, W) sky color per pixel
    fused: np.ndarray   # (3, H, W) render composited over the sky


def render_ground_truth(scene, cams, backend=None):
    """Rasterize the scene in every camera and composite the sky behind it."""
    out = []
    for cam in cams:
        r = rasterize(scene.gt_cloud, cam, backend=backend)
        sky = np.moveaxis(scene.sky_color_fn(pixel_rays(cam)), -1, 0)
        fused = np.clip(r.image + (1.0 - r.alpha)[None] * sky, 0.0, 1.0)
        out.append(GroundTruthView(r, sky, fused))
    return out
