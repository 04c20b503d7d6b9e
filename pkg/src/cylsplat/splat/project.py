"""EWA projection of 3D Gaussians and spherical-harmonics color."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..gaussians import GaussianCloud, covariance
from ..kernels import ALPHA_MIN

NEAR = 0.01
LOW_PASS = 0.3
GUARD = 1.3

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
         -1.0925484305920792, 0.5462742152960396)
SH_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
         -0.4570457994644658, 1.445305721320277, -0.5900435899266435)


def eval_sh(sh, dirs):
    """RGB from SH coefficients ``(N, (d+1)^2, 3)`` along unit ``dirs`` ``(N, 3)``."""
    sh = np.asarray(sh, dtype=np.float64)
    n_coef = sh.shape[1]
    out = SH_C0 * sh[:, 0]
    if n_coef == 1:
        return out
    x, y, z = (dirs[:, i:i + 1] for i in range(3))
    out = out - SH_C1 * y * sh[:, 1] + SH_C1 * z * sh[:, 2] - SH_C1 * x * sh[:, 3]
    if n_coef == 4:
        return out
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z
    out = (out + SH_C2[0] * xy * sh[:, 4] + SH_C2[1] * yz * sh[:, 5]
           + SH_C2[2] * (2.0 * zz - xx - yy) * sh[:, 6] + SH_C2[3] * xz * sh[:, 7]
           + SH_C2[4] * (xx - yy) * sh[:, 8])
    if n_coef == 9:
        return out
    return (out + SH_C3[0] * y * (3.0 * xx - yy) * sh[:, 9] + SH_C3[1] * xy * z * sh[:, 10]
            + SH_C3[2] * y * (4.0 * zz - xx - yy) * sh[:, 11]
            + SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * sh[:, 12]
            + SH_C3[4] * x * (4.0 * zz - xx - yy) * sh[:, 13]
            + SH_C3[5] * z * (xx - yy) * sh[:, 14] + SH_C3[6] * x * (xx - 3.0 * yy) * sh[:, 15])


def sh_to_color(sh, dirs):
    return np.clip(eval_sh(sh, dirs) + 0.5, 0.0, 1.0)


@dataclass(frozen=True)
class Splat2D:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    opacity: float

    @property
    def conic(self):
        a, b, c = self.cov2d[0, 0], self.cov2d[0, 1], self.cov2d[1, 1]
        det = a * c - b * b
        return np.array([c / det, -b / det, a / det])


@dataclass
class ProjectedSplats:
    """Vectorized projection result; rows correspond to ``index`` into the cloud."""

    index: np.ndarray
    means2d: np.ndarray
    cov2d: np.ndarray   # (M, 2, 2)
    conics: np.ndarray  # (M, 3): inverse covariance (a, b, c)
    depths: np.ndarray
    colors: np.ndarray
    opacities: np.ndarray

    def __len__(self):
        return len(self.index)


def _project_arrays(means, cov3d, cam):
    R = cam.rotation
    pc = (means - cam.position) @ R
    z = pc[:, 2]
    front = z > NEAR
    zs = np.where(front, z, 1.0)
    fx, fy = cam.fx, cam.fy
    # the affine approximation blows up far outside the image; evaluate the
    # Jacobian at a point clamped to a guard band around the frustum
    limx = GUARD * cam.width / (2.0 * fx)
    limy = GUARD * cam.height / (2.0 * fy)
    tx = np.clip(pc[:, 0] / zs, -limx, limx) * zs
    ty = np.clip(pc[:, 1] / zs, -limy, limy) * zs
    J = np.zeros((len(means), 2, 3))
    J[:, 0, 0] = fx / zs
    J[:, 0, 2] = -fx * tx / (zs * zs)
    J[:, 1, 1] = fy / zs
    J[:, 1, 2] = -fy * ty / (zs * zs)
    T = J @ R.T
    cov2d = T @ cov3d @ np.swapaxes(T, 1, 2)
    cov2d[:, 0, 0] += LOW_PASS
    cov2d[:, 1, 1] += LOW_PASS
    uv = np.stack([fx * pc[:, 0] / zs + cam.cx, fy * pc[:, 1] / zs + cam.cy], axis=1)
    return uv, cov2d, z, front


def _conics(cov2d):
    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    return np.stack([c / det, -b / det, a / det], axis=1)


def project_gaussian(g, cam):
    """Project one :class:`~cylsplat.gaussians.Gaussian3D`; ``None`` when culled."""
    means = np.asarray(g.position, dtype=np.float64)[None]
    cov = covariance(g.rotation, g.scale)[None]
    uv, cov2d, z, front = _project_arrays(means, cov, cam)
    if not front[0]:
        return None
    d = means[0] - cam.position
    d = d / np.linalg.norm(d)
    color = sh_to_color(np.asarray(g.sh, dtype=np.float64).reshape(1, -1, 3), d[None])[0]
    return Splat2D(uv[0], cov2d[0], float(z[0]), color, float(g.opacity))


def project_cloud(cloud: GaussianCloud, cam):
    """Project every Gaussian in front of the near plane."""
    if len(cloud) == 0:
        z = np.zeros(0)
        return ProjectedSplats(np.zeros(0, np.int64), np.zeros((0, 2)), np.zeros((0, 2, 2)),
                               np.zeros((0, 3)), z, np.zeros((0, 3)), z)
    cov3d = covariance(cloud.quats, cloud.scales)
    uv, cov2d, z, front = _project_arrays(cloud.means, cov3d, cam)
    keep = np.flatnonzero(front & (cloud.opacities >= ALPHA_MIN))
    d = cloud.means[keep] - cam.position
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    colors = sh_to_color(cloud.sh[keep], d)
    cov2d = cov2d[keep]
    return ProjectedSplats(keep, uv[keep], cov2d, _conics(cov2d), z[keep], colors,
                           cloud.opacities[keep])


def splat_extent(cov2d, opacities):
    """Half-widths of the region where a splat's alpha can reach the cutoff.

    ``op * exp(-q/2) >= 1/255`` needs ``q <= 2 ln(255 op)``; the x/y extent of
    that ellipse is ``sqrt(2 ln(255 op) * var)``.  One pixel of margin absorbs
    rounding, so skipping pixels outside the box never changes the image.
    """
    level = 2.0 * np.log(np.maximum(opacities / ALPHA_MIN, 1.0))
    rx = np.sqrt(level * cov2d[:, 0, 0]) + 1.0
    ry = np.sqrt(level * cov2d[:, 1, 1]) + 1.0
    return rx, ry

