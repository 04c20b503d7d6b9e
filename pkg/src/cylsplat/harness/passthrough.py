"""Pass-through oracle: processors whose outputs carry the ground-truth
Gaussians so that the geometric stages alone decide the rendered image.

Planting rules
--------------
* Each GT Gaussian is assigned to the occupancy voxel containing it; a voxel
  takes at most ``G_v`` of them.  Everything that cannot be planted in the
  volume branch goes to the pixel branch.
* A planted voxel needs its trilinear stencil (the 8 nodes around its sample
  point) fully inside both the occupancy and the volume CPFG, a cell in the
  occupancy CPFG that no other voxel center shares, and a volume stencil
  disjoint from every other planted voxel.  Constant values on all 8 nodes make
  the sample independent of the interpolation weights.
* Occupancy channel 0 (empty score) is ``1 - 1e-6`` everywhere and channel 1
  is 1 on planted stencils, so a planted voxel scores (1, 1 - 1e-6).  Any
  other voxel that still wins is resolved by un-planting its neighbours.
* Pixel Gaussians sit at unit depth on the upsampled pixel plane with the
  echo offset ``position - anchor``.
* The background plane is the constant sky color.
"""

from __future__ import annotations

import numpy as np

from ..background import channel_select
from ..cpfg import grid_canonical, node_coords, reshape_to_cpfg, sample_grid
from ..gaussians import APP_PER_GAUSSIAN, GEO_PER_GAUSSIAN, RAW_PER_GAUSSIAN, DecoderParams, depth_rays
from ..occupancy import select_occupied, voxel_indices
from .processors import BG_UPSAMPLE, Planted, Processors, ReferenceExtractor

EMPTY_SCORE = 1.0 - 1e-6
GHOST_OPACITY = 1e-6
GHOST_SCALE = 1e-3
BG_CHANNELS = 4


def _stencils(xk, xh, xw):
    """Floor corner of each trilinear stencil and whether it lies fully inside."""
    return np.floor(xk).astype(np.int64), np.floor(xh).astype(np.int64), np.floor(xw).astype(np.int64)


def _fully_inside(k0, h0, w0, shape):
    K, H, W = shape
    return (k0 >= 0) & (k0 <= K - 2) & (h0 >= 0) & (h0 <= H - 2) & (w0 >= 0) & (w0 <= W - 2)


def _nodes(k, h, w):
    return [(k + a, h + b, w + c) for a in (0, 1) for b in (0, 1) for c in (0, 1)]


def _flat_cpfg(data):
    """``(D, K, H, W)`` -> the ``(K*D, H, W)`` layout read by reshape_to_cpfg."""
    D, K, H, W = data.shape
    return data.transpose(1, 0, 2, 3).reshape(K * D, H, W)


def _app_row(cloud, i):
    return np.concatenate([cloud.quats[i], cloud.scales[i], [cloud.opacities[i]], cloud.sh[i, 0]])


def _ghost_app():
    return np.concatenate([[1.0, 0.0, 0.0, 0.0], np.full(3, GHOST_SCALE), [GHOST_OPACITY], np.zeros(3)])


class PassthroughProcessors(Processors):
    passthrough = True

    def __init__(self, config):
        c = config
        self.config = c
        self.extract = ReferenceExtractor()
        fc = ReferenceExtractor.channels
        self.occ_head = DecoderParams.echo_map(c.D_occ, 2)
        self.geo_dec = DecoderParams.echo_map(c.D_geo, GEO_PER_GAUSSIAN * c.G_v)
        self.app_dec = DecoderParams.echo_map(c.D_app, APP_PER_GAUSSIAN * c.G_v)
        self.pix_dec = DecoderParams.echo_map(c.D_pix, RAW_PER_GAUSSIAN * c.G_p)
        self.mixer = DecoderParams.zeros(c.K * c.D_pix, fc)
        self.bg_dec = channel_select([0, 1, 2], BG_CHANNELS)
        self.plan = None

    # -- planting -----------------------------------------------------------

    def prepare(self, ctx):
        c = self.config
        cloud = ctx.scene.gt_cloud
        if cloud.sh_degree != 0:
            raise ValueError("pass-through planting supports degree-0 colors only")
        if ctx.scene.sky_rgb is None:
            raise ValueError("pass-through background needs a constant sky")
        shape = (c.K, c.h_res, c.w_res)
        grid, centers = ctx.grid, ctx.centers
        L, H, W = grid.dims

        l, h, w, ok = voxel_indices(cloud.means, grid)
        vox = np.where(ok, (l * H + h) * W + w, -1)
        members = {}
        leftover = [int(i) for i in np.flatnonzero(~ok)]
        for i in np.flatnonzero(ok):
            lst = members.setdefault(int(vox[i]), [])
            (lst if len(lst) < c.G_v else leftover).append(int(i))

        # occupancy stencils for every voxel center
        ok_xk, ok_xh, ok_xw, ok_in = node_coords(
            grid_canonical(centers, c.r_min, ctx.r_max["occ"], ctx.specs["occ"]), shape)
        ok0 = _stencils(ok_xk, ok_xh, ok_xw)
        cell = (ok0[0] * c.h_res + ok0[1]) * c.w_res + ok0[2]
        cell = np.where(ok_in, cell, -1)
        _, inv, counts = np.unique(cell, return_inverse=True, return_counts=True)
        unique_cell = counts[inv] == 1
        occ_good = ok_in & _fully_inside(*ok0, shape) & unique_cell

        # volume stencils for the candidate voxels, greedily kept disjoint
        cand = np.array(sorted(members), dtype=np.int64)
        v_xk, v_xh, v_xw, v_in = node_coords(
            grid_canonical(centers[cand], c.r_min, ctx.r_max["vol"], ctx.specs["vol"]), shape)
        v0 = _stencils(v_xk, v_xh, v_xw)
        vol_good = v_in & _fully_inside(*v0, shape)
        claimed = np.zeros(shape, dtype=bool)
        planted = {}
        for j, v in enumerate(cand):
            if not (occ_good[v] and vol_good[j]):
                continue
            nodes = _nodes(v0[0][j], v0[1][j], v0[2][j])
            if any(claimed[n] for n in nodes):
                continue
            for n in nodes:
                claimed[n] = True
            planted[int(v)] = (v0[0][j], v0[1][j], v0[2][j])

        # occupancy planting, repeated until exactly the planted voxels win
        while True:
            occ = np.zeros((c.D_occ,) + shape)
            occ[0] = EMPTY_SCORE
            for v in planted:
                for n in _nodes(ok0[0][v], ok0[1][v], ok0[2][v]):
                    occ[(1,) + n] = 1.0
            cp = reshape_to_cpfg(_flat_cpfg(occ), c.K, c.r_min, ctx.r_max["occ"], ctx.specs["occ"])
            p3d = self.occ_head.apply(sample_grid(cp, centers).T).T.reshape(2, L, H, W)
            sel = set(int(i) for i in select_occupied(p3d))
            extra = sel - set(planted)
            missing = set(planted) - sel
            if not extra and not missing:
                break
            drop = set(missing)
            for e in extra:
                en = set(_nodes(ok0[0][e], ok0[1][e], ok0[2][e]))
                for v in planted:
                    if en & set(_nodes(ok0[0][v], ok0[1][v], ok0[2][v])):
                        drop.add(v)
            if not drop:
                raise RuntimeError("occupancy planting failed to converge")
            for v in drop:
                del planted[v]
        for v, lst in members.items():
            if v not in planted:
                leftover.extend(lst)

        # geometry / appearance CPFGs
        geo = np.zeros((c.D_geo,) + shape)
        app = np.zeros((c.D_app,) + shape)
        ghost = _ghost_app()
        for v, (k0, h0, w0) in planted.items():
            gvals = np.zeros(GEO_PER_GAUSSIAN * c.G_v)
            avals = np.tile(ghost, c.G_v)
            for s, i in enumerate(members[v]):
                gvals[3 * s:3 * s + 3] = cloud.means[i] - centers[v]
                avals[11 * s:11 * s + 11] = _app_row(cloud, i)
            sl = (slice(k0, k0 + 2), slice(h0, h0 + 2), slice(w0, w0 + 2))
            geo[(slice(0, len(gvals)),) + sl] = gvals[:, None, None, None]
            app[(slice(0, len(avals)),) + sl] = avals[:, None, None, None]
        vol = np.concatenate([_flat_cpfg(geo), _flat_cpfg(app)])

        # pixel plane
        up = c.k_i * c.k_o
        ph, pw = up * c.h_res, up * c.w_res
        leftover = sorted(leftover)
        n_cells = -(-len(leftover) // c.G_p)
        if n_cells > ph * pw:
            raise ValueError(f"{len(leftover)} pixel Gaussians do not fit a {ph}x{pw} plane")
        origin, axis = depth_rays(ctx.specs["pix"].resized(ph, pw), ph, pw)
        anchors = (origin + axis).reshape(-1, 3)
        pix = np.zeros((c.D_pix, ph * pw))
        for cidx in range(n_cells):
            raw = np.tile(np.concatenate([np.zeros(3), ghost]), c.G_p)
            for s, i in enumerate(leftover[cidx * c.G_p:(cidx + 1) * c.G_p]):
                raw[14 * s:14 * s + 14] = np.concatenate([cloud.means[i] - anchors[cidx],
                                                          _app_row(cloud, i)])
            pix[:len(raw), cidx] = raw
        depth = np.zeros(ph * pw)
        depth[:n_cells] = 1.0

        # background plane
        bg = np.zeros((BG_CHANNELS, BG_UPSAMPLE * c.h_res, BG_UPSAMPLE * c.w_res))
        bg[:3] = np.asarray(ctx.scene.sky_rgb, dtype=np.float64)[:, None, None]

        fc = ctx.feat_shape[0]
        plane = (fc, c.h_res, c.w_res)
        self.occ = Planted("occ", _flat_cpfg(occ), plane)
        self.vol = Planted("vol", vol, plane)
        self.pix = Planted("pix", pix.reshape(c.D_pix, ph, pw), (fc + 2, c.h_res, c.w_res))
        self.pix_depth = Planted("pix_depth", depth.reshape(ph, pw), (fc + 2, c.h_res, c.w_res))
        self.bg = Planted("bg", bg, plane)
        self.plan = {"volume_voxels": len(planted),
                     "volume_gaussians": int(sum(len(members[v]) for v in planted)),
                     "pixel_gaussians": len(leftover)}
        return self.plan
