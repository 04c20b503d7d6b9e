"""Per-tile front-to-back compositing.

Both paths consume the same binned splat lists: ``tile_offsets[t]`` ..
``tile_offsets[t+1]`` index into ``tile_splats``, which lists splat ids in
ascending depth for tile ``t``.  Each tile owns its framebuffer region, so the
parallel loop writes without atomics.
"""

import numpy as np

from .._backend import njit, prange, resolve

ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
T_MIN = 1e-4


@njit(parallel=True)
def _composite_nb(means, conics, opac, colors, depths, tile_offsets, tile_splats,
                  width, height, tile, tiles_x, image, alpha, depth):
    n_tiles = tile_offsets.shape[0] - 1
    for t in prange(n_tiles):
        start = tile_offsets[t]
        end = tile_offsets[t + 1]
        if start == end:
            continue
        ty = t // tiles_x
        tx = t - ty * tiles_x
        y_end = min((ty + 1) * tile, height)
        x_end = min((tx + 1) * tile, width)
        for py in range(ty * tile, y_end):
            fy = py + 0.5
            for px in range(tx * tile, x_end):
                fx = px + 0.5
                T = 1.0
                r = 0.0
                g = 0.0
                b = 0.0
                a_acc = 0.0
                d_acc = 0.0
                for k in range(start, end):
                    s = tile_splats[k]
                    dx = fx - means[s, 0]
                    dy = fy - means[s, 1]
                    power = -0.5 * (conics[s, 0] * dx * dx + 2.0 * conics[s, 1] * dx * dy
                                    + conics[s, 2] * dy * dy)
                    a = opac[s] * np.exp(power)
                    if a > ALPHA_MAX:
                        a = ALPHA_MAX
                    if a < ALPHA_MIN:
                        continue
                    test_T = T * (1.0 - a)
                    if test_T < T_MIN:
                        break
                    w = a * T
                    r += colors[s, 0] * w
                    g += colors[s, 1] * w
                    b += colors[s, 2] * w
                    a_acc += w
                    d_acc += depths[s] * w
                    T = test_T
                image[0, py, px] = r
                image[1, py, px] = g
                image[2, py, px] = b
                alpha[py, px] = a_acc
                depth[py, px] = d_acc


def _composite_np(means, conics, opac, colors, depths, tile_offsets, tile_splats,
                  width, height, tile, tiles_x, image, alpha, depth, chunk=2048):
    n_tiles = tile_offsets.shape[0] - 1
    for t in range(n_tiles):
        start, end = int(tile_offsets[t]), int(tile_offsets[t + 1])
        if start == end:
            continue
        ty, tx = divmod(t, tiles_x)
        ys = np.arange(ty * tile, min((ty + 1) * tile, height))
        xs = np.arange(tx * tile, min((tx + 1) * tile, width))
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        fx = (xx.ravel() + 0.5)[:, None]
        fy = (yy.ravel() + 0.5)[:, None]
        n_pix = fx.shape[0]
        T = np.ones(n_pix)
        alive = np.ones(n_pix, dtype=bool)
        acc = np.zeros((n_pix, 5))
        ids = tile_splats[start:end]
        for c0 in range(0, len(ids), chunk):
            sel = ids[c0:c0 + chunk]
            dx = fx - means[sel, 0][None]
            dy = fy - means[sel, 1][None]
            power = -0.5 * (conics[sel, 0][None] * dx * dx + 2.0 * conics[sel, 1][None] * dx * dy
                            + conics[sel, 2][None] * dy * dy)
            a = np.minimum(opac[sel][None] * np.exp(power), ALPHA_MAX)
            a = np.where(a < ALPHA_MIN, 0.0, a)
            # transmittance after each splat, same multiplication order as the loop
            after = np.cumprod(np.concatenate([T[:, None], 1.0 - a], axis=1), axis=1)
            before = after[:, :-1]
            after = after[:, 1:]
            # termination is a prefix property because transmittance never grows
            ok = (after >= T_MIN) | (a == 0.0)
            ok = np.logical_and.accumulate(ok, axis=1) & alive[:, None]
            w = np.where(ok, a * before, 0.0)
            vals = np.concatenate([colors[sel], np.ones((len(sel), 1)), depths[sel][:, None]],
                                  axis=1)
            acc += w @ vals
            T = np.where(ok[:, -1], after[:, -1], T)
            alive &= ok[:, -1]
            if not alive.any():
                break
        image[:, yy, xx] = acc[:, :3].T.reshape(3, *yy.shape)
        alpha[yy, xx] = acc[:, 3].reshape(yy.shape)
        depth[yy, xx] = acc[:, 4].reshape(yy.shape)


def composite_tiles(means, conics, opac, colors, depths, tile_offsets, tile_splats,
                    width, height, tile, backend=None):
    tiles_x = (width + tile - 1) // tile
    image = np.zeros((3, height, width))
    alpha = np.zeros((height, width))
    depth = np.zeros((height, width))
    args = (np.ascontiguousarray(means, dtype=np.float64),
            np.ascontiguousarray(conics, dtype=np.float64),
            np.ascontiguousarray(opac, dtype=np.float64),
            np.ascontiguousarray(colors, dtype=np.float64),
            np.ascontiguousarray(depths, dtype=np.float64),
            np.ascontiguousarray(tile_offsets, dtype=np.int64),
            np.ascontiguousarray(tile_splats, dtype=np.int64),
            int(width), int(height), int(tile), int(tiles_x), image, alpha, depth)
    if resolve(backend) == "numba":
        _composite_nb(*args)
    else:
        _composite_np(*args)
    return image, alpha, depth
