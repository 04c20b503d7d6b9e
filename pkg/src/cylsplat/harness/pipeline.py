"""End-to-end driver: ground truth, lifting, occupancy, the three Gaussian
stages, rendering, background and metrics.

Every stage runs inside :func:`_stage`, which turns any contract violation
into a :class:`StageError` tagged with the stage name.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .. import io as cio
from .._backend import get_threads, set_threads
from ..background import BG_SCALE, fuse, sample_background, synthesize_background
from ..cpfg import (default_r_max, inject_projection, project_pixel_features, reshape_to_cpfg,
                    sample_grid)
from ..featureplane import (CylinderPlaneFeature, Order, augment_with_depth, hflip, overlay,
                            project_view_to_plane)
from ..gaussians import GaussianCloud, decode_pixel_gaussians, decode_volume_gaussians, merge
from ..geometry import build_cylinder_spec
from ..metrics import UndefinedCorrelation, pcc, psnr, ssim
from ..occupancy import OccProbMap, OccupancyGrid, grid_points, range_corners, select_occupied
from ..rigs import rig_preset
from ..splat import rasterize
from .processors import ContractError, ReferenceProcessors, check_shape
from .scene import render_ground_truth


class StageError(RuntimeError):
    def __init__(self, stage, msg):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage
        self.msg = msg


@contextlib.contextmanager
def _stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except (ValueError, TypeError, KeyError, IndexError, ContractError) as e:
        raise StageError(name, str(e)) from e
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


@dataclass
class StageContext:
    """What the processors may look at once the geometry is fixed."""

    scene: object
    config: object
    cams: list
    specs: dict
    r_max: dict
    grid: OccupancyGrid
    centers: np.ndarray
    feat_shape: tuple


@dataclass
class PipelineResult:
    renders: list
    fused: list
    report: dict
    tensors: dict = field(default_factory=dict)
    clouds: dict = field(default_factory=dict)
    gt: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


def _plane_pair(feats, fcams, spec):
    per_view = [project_view_to_plane(f, c, spec) for f, c in zip(feats, fcams)]
    plus = overlay(per_view, Order.CLOCKWISE, spec)
    minus = overlay(per_view, Order.COUNTERCLOCKWISE, spec)
    return per_view, plus, minus


def _cloud_tensors(prefix, cloud, out):
    out[prefix] = cloud.pack()


def run_pipeline(scene, config, processors=None, dump=None, threads=None, backend=None):
    """Run every stage on ``scene``; see :class:`PipelineResult`.

    ``dump`` (a directory) writes every intermediate tensor plus a manifest.
    ``threads`` sets the numba worker count for the run.
    """
    cfg = config
    procs = processors if processors is not None else ReferenceProcessors(cfg)
    timings = {}
    T = {}
    prev_threads = get_threads()
    if threads is not None:
        set_threads(threads)
    try:
        # -- ground truth -------------------------------------------------
        with _stage("gt", timings):
            rig = rig_preset(cfg.rig, size=(cfg.cam_w, cfg.cam_h))
            cams = list(rig.cameras)
            targets = [c.with_image_size(cfg.target_w, cfg.target_h) for c in cams]
            gt_in = render_ground_truth(scene, cams, backend=backend)
            same = (cfg.target_w, cfg.target_h) == (cfg.cam_w, cfg.cam_h)
            gt_t = gt_in if same else render_ground_truth(scene, targets, backend=backend)
            for i, g in enumerate(gt_in):
                T[f"gt/view{i}/image"] = g.fused
                T[f"gt/view{i}/alpha"] = g.render.alpha
                T[f"gt/view{i}/depth"] = g.render.depth

        # -- feature extraction -------------------------------------------
        with _stage("extract", timings):
            feats = [procs.extract(g.fused) for g in gt_in]
            fh, fw = feats[0].shape[1:]
            fcams = [c.with_image_size(fw, fh) for c in cams]
            for i, f in enumerate(feats):
                T[f"extract/view{i}"] = f

        # -- cylinder specs -----------------------------------------------
        with _stage("uccm", timings):
            uc = cfg.uccm_params()
            corners = range_corners(cfg.occ_range)
            specs = {s: build_cylinder_spec(cams, corners, uc.stage(s), cfg.h_res, cfg.w_res)
                     for s in ("occ", "vol", "pix")}
            r_max = {s: default_r_max(cfg.occ_range, specs[s].center[:2]) for s in specs}
            for s, sp in specs.items():
                if not cfg.r_min < r_max[s]:
                    raise ValueError(f"{s}: r_min {cfg.r_min} must be below r_max {r_max[s]:.3f}")
            grid = OccupancyGrid(tuple(cfg.occ_dims), cfg.voxel, tuple(cfg.occ_range))
            centers = grid_points(grid)
        ctx = StageContext(scene, cfg, cams, specs, r_max, grid, centers, feats[0].shape)
        with _stage("prepare", timings):
            procs.prepare(ctx)

        # -- projection and overlays --------------------------------------
        with _stage("project", timings):
            _, occ_p, occ_m = _plane_pair(feats, fcams, specs["occ"])
            _, vol_p, vol_m = _plane_pair(feats, fcams, specs["vol"])
            aug = [augment_with_depth(f, g.render.depth, g.render.alpha) for f, g in zip(feats, gt_in)]
            _, pix_p, pix_m = _plane_pair(aug, fcams, specs["pix"])
            for name, pl in (("occ", (occ_p, occ_m)), ("vol", (vol_p, vol_m)), ("pix", (pix_p, pix_m))):
                for tag, p in zip(("plus", "minus"), pl):
                    check_shape(f"{name} plane", p.grid, (aug[0].shape[0] if name == "pix"
                                                          else feats[0].shape[0], cfg.h_res, cfg.w_res))
                    T[f"plane/{name}_{tag}"] = p.grid

        # -- occupancy ----------------------------------------------------
        with _stage("occupancy", timings):
            f_occ = procs.occ(occ_p.grid, hflip(occ_m.grid))
            cp_occ = reshape_to_cpfg(f_occ, cfg.K, cfg.r_min, r_max["occ"], specs["occ"])
            check_shape("occupancy CPFG", cp_occ.data, (cfg.D_occ, cfg.K, cfg.h_res, cfg.w_res))
            samp = sample_grid(cp_occ, centers, backend=backend)
            L, H, W = grid.dims
            p3d = procs.occ_head.apply(samp.T).T.reshape(2, L, H, W)
            p2d = np.max(p3d[1] - p3d[0], axis=0)
            probs = OccProbMap(p3d, p2d)
            occupied = select_occupied(probs)
            T["occ/cpfg"] = cp_occ.data
            T["occ/p3d"] = p3d
            T["occ/p2d"] = p2d
            T["occ/selected"] = occupied.astype(np.int64)

        # -- pixel branch -------------------------------------------------
        pix_cloud = GaussianCloud.empty(0, "pixel")
        up = cfg.k_i * cfg.k_o
        spec_up = specs["pix"].resized(up * cfg.h_res, up * cfg.w_res)
        if cfg.pixel_branch:
            with _stage("pixel", timings):
                f_pix = procs.pix(pix_p.grid, hflip(pix_m.grid))
                check_shape("pixel plane", f_pix, (cfg.D_pix, up * cfg.h_res, up * cfg.w_res))
                depth = procs.pix_depth(pix_p.grid, hflip(pix_m.grid))
                check_shape("pixel depth", depth, f_pix.shape[1:])
                pix_cloud, pix_idx = decode_pixel_gaussians(f_pix, depth, spec_up, cfg.G_p,
                                                            procs.pix_dec, return_index=True)
                T["pixel/features"] = f_pix
                T["pixel/depth"] = depth
                _cloud_tensors("pixel/gaussians", pix_cloud, T)

            with _stage("inject", timings):
                pf = f_pix.reshape(cfg.D_pix, -1)[:, pix_idx].T
                proj = project_pixel_features(pix_cloud.means, pf, (cfg.K, cfg.h_res, cfg.w_res),
                                              cfg.r_min, r_max["vol"], specs["vol"], backend=backend)
                vol_p, vol_m = inject_projection(vol_p, vol_m, proj, procs.mixer)
                T["inject/projection"] = proj
                T["inject/vol_plus"] = vol_p.grid
                T["inject/vol_minus"] = vol_m.grid

        # -- volume branch ------------------------------------------------
        with _stage("volume", timings):
            f_vol = procs.vol(vol_p.grid, hflip(vol_m.grid))
            n_geo = cfg.K * cfg.D_geo
            check_shape("volume features", f_vol, (n_geo + cfg.K * cfg.D_app, cfg.h_res, cfg.w_res))
            cp_geo = reshape_to_cpfg(f_vol[:n_geo], cfg.K, cfg.r_min, r_max["vol"], specs["vol"])
            cp_app = reshape_to_cpfg(f_vol[n_geo:], cfg.K, cfg.r_min, r_max["vol"], specs["vol"])
            sel = centers[occupied]
            g_feat = sample_grid(cp_geo, sel, backend=backend)
            a_feat = sample_grid(cp_app, sel, backend=backend)
            vol_cloud = decode_volume_gaussians(g_feat, a_feat, sel, None, cfg.G_v, procs.geo_dec,
                                                procs.app_dec, cfg.voxel)
            T["volume/geo_cpfg"] = cp_geo.data
            T["volume/app_cpfg"] = cp_app.data
            _cloud_tensors("volume/gaussians", vol_cloud, T)

        with _stage("merge", timings):
            fg = merge([vol_cloud, pix_cloud])
            fg.validate()
            _cloud_tensors("merged/gaussians", fg, T)

        # -- rendering ----------------------------------------------------
        renders = []
        with _stage("render", timings):
            for i, cam in enumerate(targets):
                r = rasterize(fg, cam, backend=backend)
                r.validate()
                renders.append(r)
                T[f"render/view{i}/image"] = r.image
                T[f"render/view{i}/alpha"] = r.alpha
                T[f"render/view{i}/depth"] = r.depth

        # -- background ---------------------------------------------------
        fused = []
        with _stage("background", timings):
            f_bg = procs.bg(vol_p.grid, hflip(vol_m.grid))
            bg_spec = specs["vol"].resized(f_bg.shape[1], f_bg.shape[2])
            bg_plane = CylinderPlaneFeature(f_bg, bg_spec, Order.CLOCKWISE)
            T["background/plane"] = f_bg
            for i, (cam, r) in enumerate(zip(targets, renders)):
                samp = sample_background(bg_plane, cam, BG_SCALE * cfg.target_w, BG_SCALE * cfg.target_h)
                bg = synthesize_background(samp, procs.bg_dec)
                img = fuse(r, bg)
                check_shape("fused image", img, (3, cfg.target_h, cfg.target_w))
                fused.append(img)
                T[f"background/view{i}"] = bg
                T[f"fused/view{i}"] = img

        # -- metrics ------------------------------------------------------
        with _stage("metrics", timings):
            report = _report(gt_t, renders, fused, len(vol_cloud), len(pix_cloud), len(occupied))
    finally:
        if threads is not None:
            set_threads(prev_threads)

    result = PipelineResult(renders, fused, report, T,
                            {"volume": vol_cloud, "pixel": pix_cloud, "merged": fg}, gt_t, timings)
    if dump is not None:
        with _stage("dump", timings):
            write_dump(dump, result)
    return result


def _report(gt, renders, fused, n_vol, n_pix, n_occ):
    views = []
    for g, r, f in zip(gt, renders, fused):
        v = {"psnr": psnr(g.fused, f), "ssim": ssim(g.fused, f),
             "max_abs_image": float(np.max(np.abs(g.fused - f))),
             "max_abs_fg": float(np.max(np.abs(g.render.image - r.image))),
             "max_abs_alpha": float(np.max(np.abs(g.render.alpha - r.alpha))),
             "max_abs_depth": float(np.max(np.abs(g.render.depth - r.depth)))}
        mask = (g.render.alpha > 0.5) & (r.alpha > 0.5)
        try:
            v["pcc_depth"] = pcc(g.render.depth, r.depth, mask)
        except UndefinedCorrelation:
            v["pcc_depth"] = math.nan
        views.append(v)
    agg = {k: (min if k in ("psnr", "ssim", "pcc_depth") else max)(v[k] for v in views)
           for k in views[0]} if views else {}
    return {"views": views, "worst": agg, "gaussians": {"volume": n_vol, "pixel": n_pix},
            "occupied_voxels": n_occ}


def _fname(name):
    return name.replace("/", "__") + ".cyt"


def write_dump(path, result):
    """Every intermediate tensor as a container file, renders as images and a
    manifest with SHA-256 digests (timings are left out so dumps of identical
    runs are byte-identical)."""
    os.makedirs(path, exist_ok=True)
    manifest = {}
    for name in sorted(result.tensors):
        arr = np.ascontiguousarray(result.tensors[name])
        fn = _fname(name)
        blob = cio.encode_tensor(arr, {"name": name})
        with open(os.path.join(path, fn), "wb") as f:
            f.write(blob)
        manifest[name] = {"file": fn, "shape": list(arr.shape), "dtype": str(arr.dtype),
                          "sha256": hashlib.sha256(blob).hexdigest()}
    for i, r in enumerate(result.renders):
        cio.write_render(os.path.join(path, f"render_view{i}"), r)
        cio.write_ppm(os.path.join(path, f"fused_view{i}.ppm"), result.fused[i])
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    with open(os.path.join(path, "report.json"), "w") as f:
        json.dump(result.report, f, indent=1, sort_keys=True, default=float)
    return manifest
