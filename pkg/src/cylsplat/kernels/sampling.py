"""Trilinear gather and plane-deposit kernels (numba and numpy paths)."""

import numpy as np

from .._backend import njit, prange, resolve


@njit(parallel=True)
def _trilinear_nb(data, xk, xh, xw, inside, out):
    D, K, H, W = data.shape
    n_pts = xk.shape[0]
    for n in prange(n_pts):
        if not inside[n]:
            continue
        k0 = int(np.floor(xk[n]))
        h0 = int(np.floor(xh[n]))
        w0 = int(np.floor(xw[n]))
        fk = xk[n] - k0
        fh = xh[n] - h0
        fw = xw[n] - w0
        for a in range(2):
            ki = k0 + a
            if ki < 0 or ki >= K:
                continue
            wk = fk if a else 1.0 - fk
            for b in range(2):
                hi = h0 + b
                if hi < 0 or hi >= H:
                    continue
                wh = fh if b else 1.0 - fh
                for c in range(2):
                    wi = w0 + c
                    if wi < 0 or wi >= W:
                        continue
                    wgt = wk * wh * (fw if c else 1.0 - fw)
                    for d in range(D):
                        out[d, n] += wgt * data[d, ki, hi, wi]


def _trilinear_np(data, xk, xh, xw, inside, out):
    D, K, H, W = data.shape
    flat = data.reshape(D, K * H * W)
    k0 = np.floor(xk).astype(np.int64)
    h0 = np.floor(xh).astype(np.int64)
    w0 = np.floor(xw).astype(np.int64)
    fk, fh, fw = xk - k0, xh - h0, xw - w0
    for a in (0, 1):
        ki = k0 + a
        wk = fk if a else 1.0 - fk
        for b in (0, 1):
            hi = h0 + b
            wh = fh if b else 1.0 - fh
            for c in (0, 1):
                wi = w0 + c
                ok = inside & (ki >= 0) & (ki < K) & (hi >= 0) & (hi < H) & (wi >= 0) & (wi < W)
                idx = np.where(ok, (ki * H + hi) * W + wi, 0)
                wgt = np.where(ok, wk * wh * (fw if c else 1.0 - fw), 0.0)
                out += flat[:, idx] * wgt


def trilinear_gather(data, xk, xh, xw, inside, backend=None):
    """Interpolate a ``(D, K, H, W)`` volume at continuous node indices.

    Out-of-grid neighbours count as zero; points with ``inside == False``
    return zeros.  Result is ``(D, N)``.
    """
    data = np.ascontiguousarray(data, dtype=np.float64)
    xk = np.ascontiguousarray(xk, dtype=np.float64)
    xh = np.ascontiguousarray(xh, dtype=np.float64)
    xw = np.ascontiguousarray(xw, dtype=np.float64)
    inside = np.ascontiguousarray(inside, dtype=np.bool_)
    out = np.zeros((data.shape[0], xk.shape[0]))
    if resolve(backend) == "numba":
        _trilinear_nb(data, xk, xh, xw, inside, out)
    else:
        _trilinear_np(data, xk, xh, xw, inside, out)
    return out


@njit
def _deposit_nb(out, plane, q, row, col, feats):
    n_pts, D = feats.shape
    for n in range(n_pts):
        k = plane[n]
        h = row[n]
        w = col[n]
        for d in range(D):
            out[d, k, h, w] += (1.0 - q[n]) * feats[n, d]
        if q[n] != 0.0:
            for d in range(D):
                out[d, k + 1, h, w] += q[n] * feats[n, d]


def _deposit_np(out, plane, q, row, col, feats):
    D = feats.shape[1]
    for d in range(D):
        view = out[d]
        np.add.at(view, (plane, row, col), (1.0 - q) * feats[:, d])
        nz = q != 0.0
        np.add.at(view, (plane[nz] + 1, row[nz], col[nz]), q[nz] * feats[nz, d])


def deposit_two_planes(shape, plane, q, row, col, feats, backend=None):
    """Accumulate ``(1-q) f`` into plane ``k`` and ``q f`` into ``k+1``.

    Deposits are summed in input order, so results are deterministic.
    """
    out = np.zeros(shape)
    plane = np.ascontiguousarray(plane, dtype=np.int64)
    row = np.ascontiguousarray(row, dtype=np.int64)
    col = np.ascontiguousarray(col, dtype=np.int64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    if len(plane) == 0:
        return out
    feats = np.ascontiguousarray(feats, dtype=np.float64).reshape(len(plane), shape[0])
    if resolve(backend) == "numba":
        _deposit_nb(out, plane, q, row, col, feats)
    else:
        _deposit_np(out, plane, q, row, col, feats)
    return out
