"""Image-quality metrics and the reconstruction loss."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from .constants import RECON_LOSS_WEIGHTS

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


class UndefinedCorrelation(ValueError):
    """Pearson correlation requested for a constant (zero-variance) signal."""


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(ref, test):
    a, b = _pair(ref, test)
    return float(np.mean((a - b) ** 2))


def psnr(ref, test, max_val=1.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    if not max_val > 0:
        raise ValueError("max_val must be positive")
    m = mse(ref, test)
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val * max_val / m)


def _gauss_window(size=SSIM_WIN, sigma=SSIM_SIGMA):
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    out = correlate1d(img, g, axis=0, mode="constant")
    out = correlate1d(out, g, axis=1, mode="constant")
    r = len(g) // 2
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim_map(ref, test, max_val=1.0):
    a, b = _pair(ref, test)
    if a.ndim != 2:
        raise ValueError("ssim_map works on one channel")
    if min(a.shape) < SSIM_WIN:
        raise ValueError(f"image smaller than the {SSIM_WIN}x{SSIM_WIN} window")
    g = _gauss_window()
    c1 = (SSIM_K1 * max_val) ** 2
    c2 = (SSIM_K2 * max_val) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a * mu_a
    sbb = _filter_valid(b * b, g) - mu_b * mu_b
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return num / den


def ssim(ref, test, max_val=1.0):
    """Mean SSIM over valid windows; ``(C, H, W)`` inputs average the channels."""
    a, b = _pair(ref, test)
    if a.ndim == 2:
        return float(np.mean(ssim_map(a, b, max_val)))
    if a.ndim == 3:
        return float(np.mean([np.mean(ssim_map(x, y, max_val)) for x, y in zip(a, b)]))
    raise ValueError("ssim expects H x W or C x H x W images")


def pcc(ref, test, mask=None):
    """Pearson correlation over the pixels selected by ``mask``."""
    a, b = _pair(ref, test)
    a, b = a.ravel(), b.ravel()
    if mask is not None:
        m = np.asarray(mask, dtype=bool).ravel()
        if m.shape != a.shape:
            raise ValueError("mask shape mismatch")
        a, b = a[m], b[m]
    if a.size < 2:
        raise UndefinedCorrelation("need at least two valid pixels")
    da = a - a.mean()
    db = b - b.mean()
    va = float(np.dot(da, da))
    vb = float(np.dot(db, db))
    if va == 0.0 or vb == 0.0:
        raise UndefinedCorrelation("zero variance: correlation is undefined")
    r = float(np.dot(da, db)) / math.sqrt(va * vb)
    return max(-1.0, min(1.0, r))


def pearson_loss(pred, gt, mask=None):
    """``1 - pcc``; equal constant maps count as perfectly correlated."""
    try:
        return 1.0 - pcc(gt, pred, mask)
    except UndefinedCorrelation:
        a, b = _pair(pred, gt)
        if mask is not None:
            m = np.asarray(mask, dtype=bool)
            a, b = a[m], b[m]
        return 0.0 if np.array_equal(a, b) else 1.0


def null_perceptual(pred, gt):
    return 0.0


def recon_loss(pred, gt, weights=RECON_LOSS_WEIGHTS, perceptual=null_perceptual, mask=None):
    """Weighted image L1, perceptual, alpha L1, depth L1 and Pearson depth terms.

    ``pred`` and ``gt`` are ``(image, alpha, depth)`` triples.
    """
    lam_i, lam_lp, lam_sky, lam_d, lam_p = weights
    (pi, pa, pd), (gi, ga, gd) = pred, gt
    pi, gi = _pair(pi, gi)
    pa, ga = _pair(pa, ga)
    pd, gd = _pair(pd, gd)
    total = lam_i * float(np.mean(np.abs(pi - gi)))
    if lam_lp:
        total += lam_lp * float(perceptual(pi, gi))
    total += lam_sky * float(np.mean(np.abs(pa - ga)))
    total += lam_d * float(np.mean(np.abs(pd - gd)))
    if lam_p:
        total += lam_p * pearson_loss(pd, gd, mask)
    return total


def report(ref, test, max_val=1.0):
    """Metric dict for two images (and PCC when both vary)."""
    out = {"psnr": psnr(ref, test, max_val), "ssim": ssim(ref, test, max_val),
           "mse": mse(ref, test)}
    try:
        out["pcc"] = pcc(ref, test)
    except UndefinedCorrelation:
        out["pcc"] = math.nan
    return out
