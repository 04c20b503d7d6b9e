"""Occupancy grid geometry, occupied-voxel selection, point voxelization and
the occupancy training loss.

Grid axes are ``(L, H, W) = (z, y, x)``; flattened indices are l-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import OCC_LOSS_WEIGHTS as LOSS_WEIGHTS

_EPS = 1e-12


@dataclass(frozen=True)
class OccupancyGrid:
    dims: tuple           # (L, H, W)
    voxel_size: object    # scalar or (dx, dy, dz)
    range: tuple          # (xmin, ymin, zmin, xmax, ymax, zmax)
    labels: np.ndarray | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError("dims must be three positive ints")
        object.__setattr__(self, "dims", dims)
        rng = tuple(float(v) for v in self.range)
        if len(rng) != 6:
            raise ValueError("range must have six entries")
        object.__setattr__(self, "range", rng)
        vs = np.broadcast_to(np.asarray(self.voxel_size, dtype=np.float64), (3,))
        if np.any(vs <= 0):
            raise ValueError("voxel size must be positive")
        span = np.array(rng[3:]) - np.array(rng[:3])
        cells = np.array([dims[2], dims[1], dims[0]])
        if not np.allclose(cells * vs, span, rtol=0, atol=1e-9):
            raise ValueError("dims * voxel_size must span the range exactly")
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != dims or not np.all((lab == 0) | (lab == 1)):
                raise ValueError("labels must be a binary L x H x W array")
            object.__setattr__(self, "labels", lab.astype(np.uint8))

    @property
    def voxel_xyz(self):
        """Voxel edge lengths along (x, y, z)."""
        return np.broadcast_to(np.asarray(self.voxel_size, dtype=np.float64), (3,)).copy()

    @property
    def size(self):
        L, H, W = self.dims
        return L * H * W

    def with_labels(self, labels):
        return OccupancyGrid(self.dims, self.voxel_size, self.range, labels)

    @classmethod
    def from_range(cls, rng, voxel_size):
        vs = np.broadcast_to(np.asarray(voxel_size, dtype=np.float64), (3,))
        span = np.array(rng[3:], float) - np.array(rng[:3], float)
        n = np.rint(span / vs).astype(int)
        return cls((n[2], n[1], n[0]), voxel_size, tuple(rng))


@dataclass(frozen=True)
class OccProbMap:
    p3d: np.ndarray  # (2, L, H, W): empty / occupied scores
    p2d: np.ndarray  # (H, W)

    def __post_init__(self):
        p3 = np.asarray(self.p3d, dtype=np.float64)
        p2 = np.asarray(self.p2d, dtype=np.float64)
        if p3.ndim != 4 or p3.shape[0] != 2:
            raise ValueError("p3d must be 2 x L x H x W")
        if p2.shape != p3.shape[2:]:
            raise ValueError("p2d must be H x W matching p3d")
        if not (np.all(np.isfinite(p3)) and np.all(np.isfinite(p2))):
            raise ValueError("occupancy scores must be finite")
        object.__setattr__(self, "p3d", p3)
        object.__setattr__(self, "p2d", p2)


def grid_points(grid):
    """Voxel centers ``(L*H*W, 3)``, l-major then h then w."""
    L, H, W = grid.dims
    vx, vy, vz = grid.voxel_xyz
    x0, y0, z0 = grid.range[:3]
    z = z0 + (np.arange(L) + 0.5) * vz
    y = y0 + (np.arange(H) + 0.5) * vy
    x = x0 + (np.arange(W) + 0.5) * vx
    zz, yy, xx = np.meshgrid(z, y, x, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)


def range_corners(rng):
    """The eight corners of an axis-aligned range."""
    x0, y0, z0, x1, y1, z1 = rng
    return np.array([[x, y, z] for z in (z0, z1) for y in (y0, y1) for x in (x0, x1)], float)


def select_occupied(probs):
    """Flat indices whose occupied score strictly exceeds the empty score."""
    p3 = probs.p3d if isinstance(probs, OccProbMap) else np.asarray(probs)
    return np.flatnonzero(p3[0].ravel() < p3[1].ravel())


def voxel_indices(points, grid):
    """``(l, h, w)`` voxel of each point and an in-range mask.

    Voxel cubes are half-open on the lower side, ``(a, b]``, so a point on a
    shared face belongs to the lower-index voxel.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    lo = np.array(grid.range[:3])
    vs = grid.voxel_xyz
    idx = np.ceil((pts - lo) / vs).astype(np.int64) - 1
    L, H, W = grid.dims
    n = np.array([W, H, L])
    ok = np.all((idx >= 0) & (idx < n), axis=1)
    return idx[:, 2], idx[:, 1], idx[:, 0], ok


def voxelize_points(points, grid):
    """Binary ``L x H x W`` labels: 1 where at least one point falls in the voxel."""
    l, h, w, ok = voxel_indices(points, grid)
    labels = np.zeros(grid.dims, dtype=np.uint8)
    labels[l[ok], h[ok], w[ok]] = 1
    return labels


def bev_labels(labels):
    """Column occupancy: max over the vertical axis."""
    return np.asarray(labels).max(axis=0)


def _softmax2(p3d):
    m = p3d.max(axis=0, keepdims=True)
    e = np.exp(p3d - m)
    return e / e.sum(axis=0, keepdims=True)


def _scal_terms(prob, target):
    """Precision, recall and specificity terms (each ``-log``) for one class."""
    loss = 0.0
    count = 0
    tp = float(np.sum(prob * target))
    if prob.sum() > 0:
        loss -= np.log(max(tp / prob.sum(), _EPS))
        count += 1
    if target.sum() > 0:
        loss -= np.log(max(tp / target.sum(), _EPS))
        count += 1
    neg = 1.0 - target
    if neg.sum() > 0:
        loss -= np.log(max(float(np.sum((1.0 - prob) * neg)) / neg.sum(), _EPS))
        count += 1
    return loss, count


def sem_scal_loss(probs, labels):
    """Class-averaged scene-class affinity loss over the two classes."""
    total, n_cls = 0.0, 0
    for c in (0, 1):
        target = (labels == c).astype(np.float64)
        if target.sum() == 0:
            continue
        loss, _ = _scal_terms(probs[c], target)
        total += loss
        n_cls += 1
    return total / max(n_cls, 1)


def geo_scal_loss(probs, labels):
    """Geometry affinity loss on the non-empty probability."""
    loss, _ = _scal_terms(1.0 - probs[0], (labels != 0).astype(np.float64))
    return loss


def occ_loss(pred, gt_labels, gt_bev, weights=LOSS_WEIGHTS):
    """Weighted sum of affinity, cross-entropy and BEV losses (non-negative)."""
    lam_sem, lam_geo, lam_ce, lam_bev = weights
    labels = np.asarray(gt_labels)
    bev = np.asarray(gt_bev, dtype=np.float64)
    if labels.shape != pred.p3d.shape[1:] or bev.shape != pred.p2d.shape:
        raise ValueError("prediction and ground-truth shapes differ")
    if not np.all(np.isfinite(labels)) or not np.all(np.isfinite(bev)):
        raise ValueError("ground truth contains non-finite values")
    labels = labels.astype(np.int64)
    probs = _softmax2(pred.p3d)
    # log-softmax computed directly for a stable cross-entropy
    m = pred.p3d.max(axis=0)
    lse = m + np.log(np.exp(pred.p3d[0] - m) + np.exp(pred.p3d[1] - m))
    chosen = np.where(labels == 1, pred.p3d[1], pred.p3d[0])
    ce = float(np.mean(lse - chosen))
    x = pred.p2d
    bce = float(np.mean(np.maximum(x, 0) - x * bev + np.log1p(np.exp(-np.abs(x)))))
    total = 0.0
    if lam_sem:
        total += lam_sem * sem_scal_loss(probs, labels)
    if lam_geo:
        total += lam_geo * geo_scal_loss(probs, labels)
    total += lam_ce * ce + lam_bev * bce
    return float(max(total, 0.0))
