"""Command-line entry point: ``cylsplat <command> [options]``.

Every command accepts ``--config``, ``--seed``, ``--rig``, ``--dump`` and
``--threads``.  Failures exit with status 1 and a ``[stage] message`` line on
stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io as cio
from ._backend import set_threads


class CliError(Exception):
    def __init__(self, stage, msg):
        super().__init__(f"[{stage}] {msg}")


def _config(args, **extra):
    from .harness import PipelineConfig
    over = dict(extra)
    if args.seed is not None:
        over["scene_seed"] = args.seed
    if args.rig is not None:
        over["rig"] = args.rig
    if getattr(args, "complexity", None) is not None:
        over["complexity"] = args.complexity
    if args.config:
        return PipelineConfig.load(args.config, **over)
    return PipelineConfig(**over)


def _scene(cfg):
    from .harness import generate_scene
    return generate_scene(cfg.scene_seed, cfg.complexity)


def _cams(cfg):
    from .rigs import rig_preset
    return list(rig_preset(cfg.rig, size=(cfg.cam_w, cfg.cam_h)).cameras)


def _json(obj):
    def conv(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        return str(o)
    print(json.dumps(obj, indent=2, sort_keys=True, default=conv))


def _dump_dir(args):
    if args.dump:
        os.makedirs(args.dump, exist_ok=True)
    return args.dump


def _stage_specs(cfg, cams):
    from .geometry import build_cylinder_spec
    from .occupancy import range_corners
    uc = cfg.uccm_params()
    corners = range_corners(cfg.occ_range)
    return {s: build_cylinder_spec(cams, corners, uc.stage(s), cfg.h_res, cfg.w_res)
            for s in ("occ", "vol", "pix")}


# -- commands ---------------------------------------------------------------

def cmd_project(args):
    from .featureplane import Order, overlay, project_view_to_plane
    from .harness import ReferenceProcessors, render_ground_truth
    cfg = _config(args)
    cams = _cams(cfg)
    gt = render_ground_truth(_scene(cfg), cams)
    ext = ReferenceProcessors(cfg).extract
    feats = [ext(g.fused) for g in gt]
    fcams = [c.with_image_size(f.shape[2], f.shape[1]) for c, f in zip(cams, feats)]
    spec = _stage_specs(cfg, cams)[args.stage]
    views = range(len(cams)) if args.view is None else [args.view]
    if args.view is not None and not 0 <= args.view < len(cams):
        raise CliError("project", f"view {args.view} out of range for {len(cams)} cameras")
    planes = [project_view_to_plane(feats[i], fcams[i], spec) for i in views]
    out = {"spec": spec.to_dict(), "views": []}
    for i, p in zip(views, planes):
        out["views"].append({"view": i, "camera": cams[i].name,
                             "coverage": float(np.mean(np.any(p != 0, axis=0)))})
    plus = overlay(planes, Order.CLOCKWISE, spec)
    minus = overlay(planes, Order.COUNTERCLOCKWISE, spec)
    out["overlay_coverage"] = float(np.mean(np.any(plus.grid != 0, axis=0)))
    out["overlay_disagreement"] = float(np.mean(np.any(plus.grid != minus.grid, axis=0)))
    d = _dump_dir(args)
    if d:
        for i, p in zip(views, planes):
            cio.write_tensor(os.path.join(d, f"plane_view{i}.cyt"), p)
        cio.write_tensor(os.path.join(d, "plane_plus.cyt"), plus.grid)
        cio.write_tensor(os.path.join(d, "plane_minus.cyt"), minus.grid)
    _json(out)


def _occupancy_inputs(cfg):
    from .cpfg import default_r_max, reshape_to_cpfg
    from .featureplane import Order, hflip, overlay, project_view_to_plane
    from .harness import ReferenceProcessors, render_ground_truth
    cams = _cams(cfg)
    procs = ReferenceProcessors(cfg)
    gt = render_ground_truth(_scene(cfg), cams)
    feats = [procs.extract(g.fused) for g in gt]
    fcams = [c.with_image_size(f.shape[2], f.shape[1]) for c, f in zip(cams, feats)]
    spec = _stage_specs(cfg, cams)["occ"]
    per = [project_view_to_plane(f, c, spec) for f, c in zip(feats, fcams)]
    plus = overlay(per, Order.CLOCKWISE, spec)
    minus = overlay(per, Order.COUNTERCLOCKWISE, spec)
    f_occ = procs.occ(plus.grid, hflip(minus.grid))
    r_max = default_r_max(cfg.occ_range, spec.center[:2])
    return procs, reshape_to_cpfg(f_occ, cfg.K, cfg.r_min, r_max, spec)


def cmd_lift(args):
    cfg = _config(args)
    _, cp = _occupancy_inputs(cfg)
    d = _dump_dir(args)
    if d:
        cio.write_cpfg(os.path.join(d, "occ_cpfg.cyt"), cp)
    _json({"cpfg": cp.header(), "shape": list(cp.data.shape)})


def cmd_occupancy(args):
    from .cpfg import sample_grid
    from .occupancy import (OccProbMap, OccupancyGrid, bev_labels, grid_points, occ_loss,
                            select_occupied, voxelize_points)
    cfg = _config(args)
    procs, cp = _occupancy_inputs(cfg)
    grid = OccupancyGrid(cfg.occ_dims, cfg.voxel, cfg.occ_range)
    L, H, W = grid.dims
    samp = sample_grid(cp, grid_points(grid))
    p3d = procs.occ_head.apply(samp.T).T.reshape(2, L, H, W)
    probs = OccProbMap(p3d, np.max(p3d[1] - p3d[0], axis=0))
    sel = select_occupied(probs)
    labels = voxelize_points(_scene(cfg).gt_cloud.means, grid)
    loss = occ_loss(probs, labels, bev_labels(labels))
    d = _dump_dir(args)
    if d:
        cio.write_tensor(os.path.join(d, "occ_p3d.cyt"), p3d)
        cio.write_tensor(os.path.join(d, "occ_labels.cyt"), labels)
    _json({"voxels": grid.size, "selected": int(len(sel)), "gt_occupied": int(labels.sum()),
           "loss": loss})


def cmd_render(args):
    from .harness import render_ground_truth
    from .splat import rasterize
    cfg = _config(args)
    cams = [c.with_image_size(cfg.target_w, cfg.target_h) for c in _cams(cfg)]
    if args.cloud:
        cloud = cio.read_cloud(args.cloud)
        outs = [rasterize(cloud, c) for c in cams]
    else:
        outs = [g.render for g in render_ground_truth(_scene(cfg), cams)]
    d = _dump_dir(args)
    rows = []
    for i, (c, r) in enumerate(zip(cams, outs)):
        r.validate()
        if d:
            cio.write_render(os.path.join(d, f"view{i}"), r)
        rows.append({"view": i, "camera": c.name, "alpha_mean": float(r.alpha.mean()),
                     "n_projected": r.info["n_projected"],
                     "ms": 1e3 * (r.info["prep_s"] + r.info["composite_s"])})
    _json({"views": rows})


def cmd_background(args):
    from .background import BG_SCALE, channel_select, sample_background, synthesize_background
    from .featureplane import CylinderPlaneFeature, Order
    from .harness.scene import SKY_RGB
    cfg = _config(args)
    cams = _cams(cfg)
    spec = _stage_specs(cfg, cams)["vol"].resized(2 * cfg.h_res, 2 * cfg.w_res)
    # a panorama with a color ramp around the azimuth and a vertical fade
    th = spec.column_theta()
    z = spec.row_z()
    ramp = 0.5 + 0.5 * np.cos(th)[None, :] * np.ones((len(z), 1))
    fade = np.clip(0.5 + z / spec.height, 0, 1)[:, None] * np.ones((1, len(th)))
    plane = np.stack([SKY_RGB[0] * ramp, SKY_RGB[1] * fade, np.full_like(ramp, SKY_RGB[2])])
    feat = CylinderPlaneFeature(plane, spec, Order.CLOCKWISE)
    d = _dump_dir(args)
    rows = []
    for i, c in enumerate(cams):
        tc = c.with_image_size(cfg.target_w, cfg.target_h)
        samp = sample_background(feat, tc, BG_SCALE * cfg.target_w, BG_SCALE * cfg.target_h)
        bg = synthesize_background(samp, channel_select([0, 1, 2], 3))
        if d:
            cio.write_ppm(os.path.join(d, f"background_view{i}.ppm"), bg)
        rows.append({"view": i, "camera": c.name, "mean_rgb": [float(v) for v in bg.mean(axis=(1, 2))]})
    _json({"spec": spec.to_dict(), "views": rows})


def cmd_pipeline(args):
    from .harness import PassthroughProcessors, run_pipeline
    extra = {}
    if args.passthrough:
        extra["passthrough"] = True
    if args.no_pixel:
        extra["pixel_branch"] = False
    cfg = _config(args, **extra)
    procs = PassthroughProcessors(cfg) if cfg.passthrough else None
    res = run_pipeline(_scene(cfg), cfg, procs, dump=args.dump, threads=args.threads)
    out = {"report": res.report, "timings_s": res.timings}
    if procs is not None:
        out["plan"] = procs.plan
    _json(out)
    if args.tolerance is not None:
        worst = res.report["worst"]["max_abs_image"]
        if not worst <= args.tolerance:
            raise CliError("metrics", f"max pixel difference {worst:.3g} exceeds {args.tolerance:g}")


def _load_image(path):
    if path.endswith(".ppm"):
        return cio.read_ppm(path).astype(np.float64) / 255.0
    if path.endswith(".pgm"):
        return cio.read_pgm16(path).astype(np.float64)
    return np.asarray(cio.read_tensor(path), dtype=np.float64)


def cmd_metrics(args):
    from .metrics import report
    a = _load_image(args.reference)
    b = _load_image(args.test)
    if a.shape != b.shape:
        raise CliError("metrics", f"shape mismatch {a.shape} vs {b.shape}")
    _json(report(a, b, args.max_val))


def cmd_bench(args):
    from .bench import format_report, run_bench
    threads = tuple(int(t) for t in args.thread_list.split(","))
    rep = run_bench(args.gaussians, args.width, args.height, threads, args.repeat, args.seed or 0)
    print(format_report(rep))
    if args.dump:
        os.makedirs(args.dump, exist_ok=True)
        with open(os.path.join(args.dump, "bench.json"), "w") as f:
            json.dump(rep, f, indent=2, sort_keys=True)


def cmd_rig(args):
    from .geometry import cameras_to_config
    from .rigs import PRESET_NAMES, complete_waymo, golden_table, rig_preset, uccm_preset
    if args.action == "list":
        for n in PRESET_NAMES:
            r = rig_preset(n)
            print(f"{n:10s} {len(r):d} cameras  coverage {r.coverage:5s} "
                  f"hfov {'/'.join(str(v) for v in r.hfov_deg)}  "
                  f"uccm {'/'.join(f'{v:.2f}' for v in uccm_preset(n).as_tuple())}")
        return
    if args.action == "golden":
        sys.stdout.write(golden_table())
        return
    name = args.name or args.rig or "nuscenes"
    rig = rig_preset(name)
    if args.complete:
        if name != "waymo":
            raise CliError("rig", "--complete applies to the waymo rig only")
        rig, _ = complete_waymo(rig)
    text = cameras_to_config(rig.cameras)
    if args.dump:
        os.makedirs(args.dump, exist_ok=True)
        with open(os.path.join(args.dump, f"{rig.name}.ini"), "w") as f:
            f.write(text)
    sys.stdout.write(text)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config (INI)")
    common.add_argument("--seed", type=int, help="scene seed")
    common.add_argument("--rig", help="rig preset name")
    common.add_argument("--dump", help="directory for intermediate tensors and images")
    common.add_argument("--threads", type=int, help="numba worker threads")

    p = argparse.ArgumentParser(prog="cylsplat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("project", parents=[common], help="project views onto the cylinder plane")
    s.add_argument("--view", type=int)
    s.add_argument("--stage", choices=("occ", "vol", "pix"), default="occ")
    s.add_argument("--complexity", type=int)
    s.set_defaults(fn=cmd_project)

    s = sub.add_parser("lift", parents=[common], help="planes -> occupancy CPFG")
    s.add_argument("--complexity", type=int)
    s.set_defaults(fn=cmd_lift)

    s = sub.add_parser("occupancy", parents=[common], help="occupancy scores, selection and loss")
    s.add_argument("--complexity", type=int)
    s.set_defaults(fn=cmd_occupancy)

    s = sub.add_parser("render", parents=[common], help="rasterize the scene or a cloud file")
    s.add_argument("--cloud", help="Gaussian cloud container to render instead of the scene")
    s.add_argument("--complexity", type=int)
    s.set_defaults(fn=cmd_render)

    s = sub.add_parser("background", parents=[common], help="ray-cast a panorama onto the targets")
    s.set_defaults(fn=cmd_background)

    s = sub.add_parser("pipeline", parents=[common], help="run the full pipeline")
    s.add_argument("--passthrough", action="store_true", help="planted-parameter oracle mode")
    s.add_argument("--no-pixel", action="store_true", help="disable the pixel branch")
    s.add_argument("--tolerance", type=float, help="fail if the max pixel difference exceeds this")
    s.add_argument("--complexity", type=int)
    s.set_defaults(fn=cmd_pipeline)

    s = sub.add_parser("metrics", parents=[common], help="PSNR / SSIM / PCC of two images")
    s.add_argument("reference")
    s.add_argument("test")
    s.add_argument("--max-val", type=float, default=1.0)
    s.set_defaults(fn=cmd_metrics)

    s = sub.add_parser("bench", parents=[common], help="rasterizer benchmark")
    s.add_argument("--gaussians", type=int, default=100_000)
    s.add_argument("--width", type=int, default=400)
    s.add_argument("--height", type=int, default=224)
    s.add_argument("--thread-list", default="1,2,4,8")
    s.add_argument("--repeat", type=int, default=3)
    s.set_defaults(fn=cmd_bench)

    s = sub.add_parser("rig", parents=[common], help="list or export rig presets")
    s.add_argument("action", choices=("list", "export", "golden"))
    s.add_argument("name", nargs="?")
    s.add_argument("--complete", action="store_true", help="waymo: add the virtual cameras")
    s.set_defaults(fn=cmd_rig)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    from .harness import ConfigError, StageError
    from .io import ContainerError
    try:
        if args.threads is not None and args.command != "pipeline":
            set_threads(args.threads)
        args.fn(args)
    except (CliError, StageError) as e:
        print(str(e), file=sys.stderr)
        return 1
    except ConfigError as e:
        print(f"[config] {e}", file=sys.stderr)
        return 1
    except ContainerError as e:
        print(f"[io] {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as e:
        print(f"[{args.command}] {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
