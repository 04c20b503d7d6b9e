"""Rasterizer benchmark: numba vs numpy backends and thread scaling.

Frames are rendered from a random cloud placed in front of one camera.  Times
are medians over ``repeat`` runs after one warm-up (which also triggers JIT
compilation).  Thread scaling times the compositing stage, the part that runs
in parallel; whole-frame times are reported alongside.
"""

from __future__ import annotations

import math
import os
import statistics
import time

import numpy as np

from ._backend import HAVE_NUMBA, get_threads, set_threads
from .gaussians import GaussianCloud, rgb_to_sh0
from .geometry import make_camera
from .splat import rasterize

BUDGET_S = 2.0
MIN_SPEEDUP_8 = 4.0


def bench_cloud(n, seed=0, cam=None):
    """``n`` Gaussians scattered through the view frustum of ``cam``."""
    cam = cam or bench_camera()
    rng = np.random.default_rng(seed)
    z = rng.uniform(2.0, 30.0, n)
    tx = math.tan(cam.horizontal_fov / 2.0)
    ty = math.tan(cam.vertical_fov / 2.0)
    pc = np.stack([rng.uniform(-tx, tx, n) * z, rng.uniform(-ty, ty, n) * z, z], axis=1)
    means = pc @ cam.rotation.T + cam.position
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    scales = rng.uniform(0.02, 0.12, (n, 3))
    opac = rng.uniform(0.3, 0.9, n)
    sh = rgb_to_sh0(rng.uniform(0, 1, (n, 3)))[:, None, :]
    return GaussianCloud(means, q, scales, opac, sh, "scene")


def bench_camera(width=400, height=224):
    return make_camera(0.0, np.array([0.0, 0.0, 1.6]), math.radians(70.0), width, height)


def _time(fn, repeat):
    fn()  # warm-up (JIT compile, caches)
    total, comp = [], []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        total.append(time.perf_counter() - t0)
        comp.append(out.info["composite_s"])
    return statistics.median(total), statistics.median(comp)


def run_bench(n=100_000, width=400, height=224, threads=(1, 2, 4, 8), repeat=3, seed=0,
              backends=None):
    """Benchmark report as a dict (see :func:`format_report`)."""
    cam = bench_camera(width, height)
    cloud = bench_cloud(n, seed, cam)
    backends = backends or (["numba", "numpy"] if HAVE_NUMBA else ["numpy"])
    prev = get_threads()
    rep = {"gaussians": n, "width": width, "height": height, "cpu_count": os.cpu_count(),
           "backends": {}, "scaling": []}
    try:
        set_threads(1)
        for b in backends:
            tot, comp = _time(lambda: rasterize(cloud, cam, backend=b), repeat)
            rep["backends"][b] = {"frame_ms": 1e3 * tot, "composite_ms": 1e3 * comp,
                                  "gaussians_per_s": n / tot}
        if HAVE_NUMBA:
            base = None
            for t in threads:
                set_threads(t)
                tot, comp = _time(lambda: rasterize(cloud, cam, backend="numba"), repeat)
                base = comp if base is None else base
                rep["scaling"].append({"threads": t, "effective_threads": get_threads(),
                                       "frame_ms": 1e3 * tot, "composite_ms": 1e3 * comp,
                                       "speedup": base / comp})
    finally:
        set_threads(prev)
    main = rep["backends"].get("numba") or rep["backends"]["numpy"]
    rep["single_thread_s"] = main["frame_ms"] / 1e3
    rep["budget_ok"] = rep["single_thread_s"] < BUDGET_S
    s8 = [s["speedup"] for s in rep["scaling"] if s["threads"] == 8]
    rep["speedup_8"] = s8[0] if s8 else None
    rep["scaling_ok"] = bool(s8) and s8[0] >= MIN_SPEEDUP_8
    return rep


def format_report(rep):
    lines = [f"{rep['gaussians']} Gaussians at {rep['width']}x{rep['height']} "
             f"({rep['cpu_count']} CPUs available)"]
    for b, r in rep["backends"].items():
        lines.append(f"  {b:6s} 1 thread : {r['frame_ms']:8.1f} ms/frame  "
                     f"(composite {r['composite_ms']:.1f} ms)  {r['gaussians_per_s']:.3g} Gaussians/s")
    for s in rep["scaling"]:
        lines.append(f"  numba {s['threads']} threads: composite {s['composite_ms']:8.1f} ms  "
                     f"frame {s['frame_ms']:8.1f} ms  speedup x{s['speedup']:.2f}")
    lines.append(f"  single-thread budget < {BUDGET_S:g} s: {'ok' if rep['budget_ok'] else 'FAIL'}")
    if rep["speedup_8"] is not None:
        lines.append(f"  speedup at 8 threads >= {MIN_SPEEDUP_8:g}: "
                     f"{'ok' if rep['scaling_ok'] else 'FAIL'} (x{rep['speedup_8']:.2f})")
    return "\n".join(lines)
