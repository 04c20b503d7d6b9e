"""Camera-rig presets for common driving datasets, UCCM parameter presets and
the virtual-camera completion for the five-camera Waymo rig.

Real calibrations are not shipped: every camera sits on a ring of radius
``RING_RADIUS`` at height ``RING_HEIGHT`` looking outward, with square pixels
and a ``DEFAULT_SIZE`` image.  Cameras are listed in clockwise order
(decreasing azimuth), which is the order the overlays fold in.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .featureplane import hflip
from .geometry import UCCMParams, make_camera, mirror_camera

RING_RADIUS = 1.0
RING_HEIGHT = 1.6
DEFAULT_SIZE = (200, 112)  # width, height (16:9-ish)

# name: (coverage, horizontal FoVs in degrees, azimuths in degrees, camera names)
_CAMERA_TABLE = {
    "nuscenes": ("=360", [70, 70, 70, 110, 70, 70],
                 [0, -60, -120, 180, 120, 60],
                 ["front", "front_right", "back_right", "back", "back_left", "front_left"]),
    "waymo": (">180", [50, 50, 50, 50, 50],
              [90, 45, 0, -45, -90],
              ["side_left", "front_left", "front", "front_right", "side_right"]),
    "pandaset": ("=360", [50, 107, 107, 107, 107, 107],
                 [0, -60, -120, 180, 120, 60],
                 ["front", "front_right", "back_right", "back", "back_left", "front_left"]),
    "once": ("=360", [90, 90, 90, 90, 90, 90],
             [0, -60, -120, 180, 120, 60],
             ["cam_01", "cam_05", "cam_06", "cam_07", "cam_08", "cam_09"]),
    "argoverse": ("=360", [69] * 7,
                  [round(-n * 360.0 / 7.0, 6) for n in range(7)],
                  ["ring_front_center", "ring_front_right", "ring_side_right", "ring_rear_right",
                   "ring_rear_left", "ring_side_left", "ring_front_left"]),
}

# (rho_o, dh_o, rho_v, dh_v, rho_p, dh_p)
_UCCM_TABLE = {
    "nuscenes": (0.90, 0.00, 0.98, 0.40, 0.98, 0.40),
    "waymo": (1.20, 0.00, 0.98, 0.40, 0.98, 0.40),
    "pandaset": (2.00, 0.00, 1.60, 0.00, 1.60, 0.00),
    "once": (1.80, 0.00, 1.00, 0.50, 1.00, 0.50),
    "argoverse": (0.09, 0.00, 0.98, 0.00, 0.98, 0.00),
    "carla": (0.90, 0.00, 1.60, 0.00, 1.60, 0.00),
}
ARGOVERSE_RHO_O_ALT = 0.90

PRESET_NAMES = tuple(_CAMERA_TABLE)


@dataclass(frozen=True)
class UccmPreset:
    rho_o: float
    dh_o: float
    rho_v: float
    dh_v: float
    rho_p: float
    dh_p: float

    def __post_init__(self):
        if min(self.rho_o, self.rho_v, self.rho_p) <= 0:
            raise ValueError("all rho values must be positive")

    def stage(self, name):
        """``UCCMParams`` for stage ``occ``, ``vol`` or ``pix``."""
        key = {"occ": "o", "vol": "v", "pix": "p"}[name]
        return UCCMParams(getattr(self, "rho_" + key), getattr(self, "dh_" + key))

    def as_tuple(self):
        return (self.rho_o, self.dh_o, self.rho_v, self.dh_v, self.rho_p, self.dh_p)


@dataclass(frozen=True)
class RigPreset:
    name: str
    cameras: tuple
    coverage: str
    hfov_deg: tuple
    aux: tuple = field(default=())

    def __len__(self):
        return len(self.cameras)


def _ring_camera(az_deg, hfov_deg, name, size):
    a = math.radians(az_deg)
    pos = np.array([RING_RADIUS * math.cos(a), RING_RADIUS * math.sin(a), RING_HEIGHT])
    w, h = size
    return make_camera(a, pos, math.radians(hfov_deg), w, h, name=name)


def rig_preset(name, size=DEFAULT_SIZE):
    key = name.lower()
    if key not in _CAMERA_TABLE:
        raise KeyError(f"unknown rig {name!r}; choose from {', '.join(PRESET_NAMES)}")
    coverage, fovs, azs, names = _CAMERA_TABLE[key]
    cams = tuple(_ring_camera(a, f, n, size) for a, f, n in zip(azs, fovs, names))
    return RigPreset(key, cams, coverage, tuple(fovs))


def uccm_preset(name, argoverse_alt=False):
    key = name.lower()
    if key not in _UCCM_TABLE:
        raise KeyError(f"unknown UCCM preset {name!r}")
    vals = list(_UCCM_TABLE[key])
    if key == "argoverse" and argoverse_alt:
        vals[0] = ARGOVERSE_RHO_O_ALT
    return UccmPreset(*vals)


def complete_waymo(rig, images=None):
    """Complete the five-camera rig to eight cameras.

    Front, front-left and front-right are mirrored about ``x = 0`` to the rear;
    their images are the horizontal flips of the sources.  The flipped side
    cameras (same pose, mirrored image) are kept in ``aux``.  Returns
    ``(rig8, images8)`` with both lists in clockwise order starting at front.
    """
    if rig.name != "waymo" or len(rig.cameras) != 5:
        raise ValueError("complete_waymo expects the five-camera waymo preset")
    by_name = {c.name: i for i, c in enumerate(rig.cameras)}
    order = ["front", "front_right", "side_right", "front_right_mirror", "front_mirror",
             "front_left_mirror", "side_left", "front_left"]
    cams, imgs = [], []
    for n in order:
        src = n[: -len("_mirror")] if n.endswith("_mirror") else n
        i = by_name[src]
        if n.endswith("_mirror"):
            cams.append(mirror_camera(rig.cameras[i], axis=0, offset=0.0))
            if images is not None:
                imgs.append(hflip(images[i]))
        else:
            cams.append(rig.cameras[i])
            if images is not None:
                imgs.append(images[i])
    aux = tuple(mirror_camera(rig.cameras[by_name[s]], axis=0, offset=0.0)
                for s in ("side_right", "side_left"))
    hf = tuple(math.degrees(c.horizontal_fov) for c in cams)
    rig8 = RigPreset("waymo_completed", tuple(cams), "=360", hf, aux)
    return rig8, (imgs if images is not None else None)


def virtual_side_views(rig, images):
    """Flipped side images for the auxiliary virtual side cameras."""
    by_name = {c.name: i for i, c in enumerate(rig.cameras)}
    return [hflip(images[by_name[s]]) for s in ("side_right", "side_left")]


def golden_table():
    """Canonical JSON text of every camera and UCCM table entry."""
    out = {}
    for name in PRESET_NAMES:
        cov, fovs, _, _ = _CAMERA_TABLE[name]
        out[name] = {"cameras": len(fovs), "coverage": cov, "hfov_deg": list(fovs),
                     "uccm": list(_UCCM_TABLE[name])}
    out["carla"] = {"uccm": list(_UCCM_TABLE["carla"])}
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


def coverage_gaps(cams):
    """Largest angular gap (degrees) not seen by any camera on the horizon."""
    spans = []
    for c in cams:
        half = c.horizontal_fov / 2.0
        spans.append((c.azimuth - half, c.azimuth + half))
    grid = np.radians(np.arange(-180.0, 180.0, 0.05))
    seen = np.zeros(grid.shape, bool)
    for lo, hi in spans:
        d = (grid - lo) % (2 * math.pi)
        seen |= d <= (hi - lo)
    if seen.all():
        return 0.0
    # longest run of unseen samples (circular)
    unseen = np.concatenate([~seen, ~seen])
    best = run = 0
    for u in unseen:
        run = run + 1 if u else 0
        best = max(best, run)
    return min(best, len(grid)) * 0.05
