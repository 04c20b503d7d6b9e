"""3D Gaussian primitives and the reference feature -> Gaussian decoders.

Every decoded Gaussian is described by 14 raw values laid out as
``[offset(3) | quaternion(4) | scale(3) | opacity(1) | color(3)]``.  The volume
branch splits the layout: the geometry decoder produces the 3 offset values
per Gaussian and the appearance decoder the remaining 11.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Camera, CylinderSpec, camera_ray_dirs

RAW_PER_GAUSSIAN = 14
GEO_PER_GAUSSIAN = 3
APP_PER_GAUSSIAN = 11
SH_C0 = 0.28209479177387814

SCALE_CLAMP = (1e-4, 3.0)
OPACITY_EPS = 1e-6
PROVENANCES = ("volume", "pixel", "merged", "scene")


def sh_coeff_count(degree):
    return (degree + 1) ** 2


def rgb_to_sh0(rgb):
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


def quat_to_rotmat(q):
    """Rotation matrices from ``(w, x, y, z)`` quaternions, shape ``(..., 3, 3)``."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


def normalize_quats(q):
    """Unit quaternions; all-zero rows become the identity rotation."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    ident = np.zeros_like(q)
    ident[..., 0] = 1.0
    return np.where(n > 1e-12, q / np.where(n > 1e-12, n, 1.0), ident)


def covariance(rotation, scale):
    """``R diag(s^2) R^T`` for quaternion(s) ``rotation`` and scale(s) ``scale``."""
    s = np.asarray(scale, dtype=np.float64)
    if not np.all(np.isfinite(s)) or np.any(s <= 0):
        raise ValueError("scales must be positive and finite")
    R = quat_to_rotmat(rotation)
    M = R * s[..., None, :]
    return M @ np.swapaxes(M, -1, -2)


@dataclass(frozen=True)
class Gaussian3D:
    position: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    opacity: float
    sh: np.ndarray  # ((d+1)^2, 3)


@dataclass
class GaussianCloud:
    """Structure-of-arrays Gaussian set."""

    means: np.ndarray       # (N, 3)
    quats: np.ndarray       # (N, 4), (w, x, y, z)
    scales: np.ndarray      # (N, 3)
    opacities: np.ndarray   # (N,)
    sh: np.ndarray          # (N, (d+1)^2, 3)
    provenance: str = "merged"

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64).reshape(-1, 3)
        n = len(self.means)
        self.quats = np.asarray(self.quats, dtype=np.float64).reshape(n, 4)
        self.scales = np.asarray(self.scales, dtype=np.float64).reshape(n, 3)
        self.opacities = np.asarray(self.opacities, dtype=np.float64).reshape(n)
        sh = np.asarray(self.sh, dtype=np.float64)
        if sh.ndim == 3 and sh.shape[0] == n:
            self.sh = sh
        else:
            self.sh = sh.reshape(n, -1, 3) if n else sh.reshape(0, 1, 3)
        if self.sh.shape[1] not in (1, 4, 9, 16):
            raise ValueError("SH coefficient count must be (d+1)^2 for d in 0..3")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def __len__(self):
        return len(self.means)

    @property
    def sh_degree(self):
        return int(round(np.sqrt(self.sh.shape[1]))) - 1

    @classmethod
    def empty(cls, degree=0, provenance="merged"):
        return cls(np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros(0),
                   np.zeros((0, sh_coeff_count(degree), 3)), provenance)

    def gaussian(self, i):
        return Gaussian3D(self.means[i].copy(), self.quats[i].copy(), self.scales[i].copy(),
                          float(self.opacities[i]), self.sh[i].copy())

    def subset(self, idx):
        return GaussianCloud(self.means[idx], self.quats[idx], self.scales[idx],
                             self.opacities[idx], self.sh[idx], self.provenance)

    def with_degree(self, degree):
        k = sh_coeff_count(degree)
        if k < self.sh.shape[1]:
            raise ValueError("cannot lower the SH degree without dropping bands")
        sh = np.zeros((len(self), k, 3))
        sh[:, : self.sh.shape[1]] = self.sh
        return GaussianCloud(self.means, self.quats, self.scales, self.opacities, sh,
                             self.provenance)

    def validate(self):
        if not np.allclose(np.linalg.norm(self.quats, axis=1), 1.0, atol=1e-9, rtol=0):
            raise ValueError("quaternions must be unit length")
        if np.any(self.scales <= 0):
            raise ValueError("scales must be positive")
        if np.any((self.opacities <= 0) | (self.opacities >= 1)):
            raise ValueError("opacities must lie in (0, 1)")
        for name in ("means", "quats", "scales", "opacities", "sh"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")
        return self

    def pack(self):
        """``N x (3 + 4 + 3 + 1 + 3 (d+1)^2)`` row layout used on disk."""
        return np.concatenate([self.means, self.quats, self.scales, self.opacities[:, None],
                               self.sh.reshape(len(self), 3 * self.sh.shape[1])], axis=1)

    @classmethod
    def unpack(cls, rows, degree, provenance="merged"):
        rows = np.asarray(rows, dtype=np.float64)
        k = sh_coeff_count(degree)
        if rows.ndim != 2 or rows.shape[1] != 11 + 3 * k:
            raise ValueError("packed cloud has the wrong row width for its SH degree")
        return cls(rows[:, 0:3], rows[:, 3:7], rows[:, 7:10], rows[:, 10],
                   rows[:, 11:].reshape(-1, k, 3), provenance)


def merge(clouds):
    """Concatenate clouds in the given order (volume before pixel by convention)."""
    clouds = [c for c in clouds if c is not None]
    if not clouds:
        return GaussianCloud.empty()
    deg = max(c.sh_degree for c in clouds)
    clouds = [c.with_degree(deg) for c in clouds]
    return GaussianCloud(np.concatenate([c.means for c in clouds]),
                         np.concatenate([c.quats for c in clouds]),
                         np.concatenate([c.scales for c in clouds]),
                         np.concatenate([c.opacities for c in clouds]),
                         np.concatenate([c.sh for c in clouds]), "merged")


@dataclass(frozen=True)
class DecoderParams:
    """Fixed affine map ``raw = features @ weight.T + bias``.

    ``echo=True`` skips the activations so the raw values are the Gaussian
    parameters themselves (used by the pass-through oracle).
    """

    weight: np.ndarray
    bias: np.ndarray
    echo: bool = False

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError("decoder weight must be (out, in) with matching bias")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    def apply(self, feats):
        feats = np.asarray(feats, dtype=np.float64)
        if feats.shape[-1] != self.in_dim:
            raise ValueError(f"decoder expects {self.in_dim} input features, got {feats.shape[-1]}")
        return feats @ self.weight.T + self.bias

    @classmethod
    def random(cls, in_dim, out_dim, seed, gain=0.5):
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, gain / np.sqrt(in_dim), size=(out_dim, in_dim))
        return cls(w, np.zeros(out_dim))

    @classmethod
    def zeros(cls, in_dim, out_dim):
        return cls(np.zeros((out_dim, in_dim)), np.zeros(out_dim))

    @classmethod
    def echo_map(cls, in_dim, out_dim):
        """Copies the first ``out_dim`` features through unchanged."""
        if in_dim < out_dim:
            raise ValueError("echo decoder needs at least as many inputs as outputs")
        return cls(np.eye(out_dim, in_dim), np.zeros(out_dim), echo=True)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _activate_rest(raw11, unit, echo):
    """Quaternion, scale, opacity and SH-DC from the 11 non-offset values."""
    quats = normalize_quats(raw11[:, 0:4])
    if echo:
        scales = np.maximum(raw11[:, 4:7], 1e-12)
        opac = np.clip(raw11[:, 7], 1e-12, 1.0 - 1e-12)
    else:
        scales = unit * np.clip(np.exp(np.clip(raw11[:, 4:7], -50, 50)), *SCALE_CLAMP)
        opac = np.clip(_sigmoid(raw11[:, 7]), OPACITY_EPS, 1.0 - OPACITY_EPS)
    sh = raw11[:, 8:11].reshape(-1, 1, 3)
    return quats, scales, opac, sh


def _offsets(raw3, bound, echo):
    return raw3 if echo else np.tanh(raw3) * bound


def decode_volume_gaussians(f_geo, f_app, centers, indices, g_v, geo_dec, app_dec, voxel_size):
    """``g_v`` Gaussians for each occupied voxel.

    ``f_geo`` / ``f_app`` are ``(D, M)`` per-voxel features and ``centers`` the
    ``(M, 3)`` voxel centers; ``indices`` selects the occupied voxels.  Offsets
    are bounded to half a voxel so every Gaussian stays inside its voxel.
    """
    if g_v < 1:
        raise ValueError("g_v must be >= 1")
    f_geo = np.asarray(f_geo, dtype=np.float64)
    f_app = np.asarray(f_app, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    idx = np.arange(len(centers)) if indices is None else np.asarray(indices, dtype=np.int64)
    if f_geo.shape[1] != len(centers) or f_app.shape[1] != len(centers):
        raise ValueError("missing features: feature columns must match voxel centers")
    if geo_dec.out_dim != GEO_PER_GAUSSIAN * g_v or app_dec.out_dim != APP_PER_GAUSSIAN * g_v:
        raise ValueError("decoder output sizes do not match g_v")
    n = len(idx)
    raw_geo = geo_dec.apply(f_geo[:, idx].T).reshape(n * g_v, GEO_PER_GAUSSIAN)
    raw_app = app_dec.apply(f_app[:, idx].T).reshape(n * g_v, APP_PER_GAUSSIAN)
    vs = np.broadcast_to(np.asarray(voxel_size, dtype=np.float64), (3,))
    base = np.repeat(centers[idx], g_v, axis=0)
    means = base + _offsets(raw_geo, 0.5 * vs, geo_dec.echo)
    quats, scales, opac, sh = _activate_rest(raw_app, vs.min(), app_dec.echo)
    return GaussianCloud(means, quats, scales, opac, sh, "volume")


def depth_rays(source, h, w):
    """Per-pixel ``(origin, axis)`` with ``anchor = origin + depth * axis``.

    For a pinhole camera ``depth`` is the camera z-depth.  For a cylinder plane
    ``depth`` is the horizontal distance from the cylinder axis, measured along
    the ray from the center through the cell.
    """
    if isinstance(source, Camera):
        cam = source if (source.width, source.height) == (w, h) else source.with_image_size(w, h)
        axis = camera_ray_dirs(cam)
        origin = np.broadcast_to(cam.position, axis.shape)
        return origin, axis
    if isinstance(source, CylinderSpec):
        th = source.column_theta(w)
        z = source.row_z(h)
        tt, zz = np.meshgrid(th, z)
        axis = np.stack([np.cos(tt), np.sin(tt), zz / source.radius], axis=-1)
        origin = np.broadcast_to(source.center, axis.shape)
        return origin, axis
    raise TypeError("source must be a Camera or a CylinderSpec")


def decode_pixel_gaussians(f_pix, depths, cams, g_p, dec, offset_radius=0.5, scale_unit=0.1,
                           return_index=False):
    """``g_p`` Gaussians per pixel anchored at the unprojected pixel.

    ``f_pix`` is ``(D, H, W)`` (or a list of them, one per source) and
    ``cams`` the matching :class:`Camera` / :class:`CylinderSpec` source(s).
    Pixels with non-positive depth are skipped.  With ``return_index`` the flat
    pixel index of every Gaussian is returned too (source-major).
    """
    if g_p < 1:
        raise ValueError("g_p must be >= 1")
    if dec.out_dim != RAW_PER_GAUSSIAN * g_p:
        raise ValueError("pixel decoder output size does not match g_p")
    if not isinstance(cams, (list, tuple)):
        f_pix, depths, cams = [f_pix], [depths], [cams]
    clouds, index = [], []
    base = 0
    for feat, depth, src in zip(f_pix, depths, cams):
        feat = np.asarray(feat, dtype=np.float64)
        depth = np.asarray(depth, dtype=np.float64)
        D, H, W = feat.shape
        if depth.shape != (H, W):
            raise ValueError("depth map must match the pixel feature resolution")
        origin, axis = depth_rays(src, H, W)
        keep = np.flatnonzero(depth.ravel() > 0)
        anchors = origin.reshape(-1, 3)[keep] + depth.ravel()[keep, None] * axis.reshape(-1, 3)[keep]
        raw = dec.apply(feat.reshape(D, -1)[:, keep].T).reshape(len(keep) * g_p, RAW_PER_GAUSSIAN)
        means = np.repeat(anchors, g_p, axis=0) + _offsets(raw[:, 0:3], offset_radius, dec.echo)
        quats, scales, opac, sh = _activate_rest(raw[:, 3:], scale_unit, dec.echo)
        clouds.append(GaussianCloud(means, quats, scales, opac, sh, "pixel"))
        index.append(np.repeat(base + keep, g_p))
        base += H * W
    cloud = merge(clouds)
    cloud.provenance = "pixel"
    if return_index:
        return cloud, np.concatenate(index) if index else np.zeros(0, np.int64)
    return cloud
