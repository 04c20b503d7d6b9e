"""Camera models, cylinder construction and the coordinate conversions.

Frames: the ego frame is x forward, y left, z up.  Camera frames follow the
OpenCV convention (x right, y down, z forward).  ``Camera.extrinsics`` maps
camera coordinates to ego coordinates.

Points are plain ``(..., 3)`` arrays.  Cylindrical points are stored as
``(r, theta, z)`` columns with ``z`` relative to the cylinder center height and
``theta`` in ``[-pi, pi)``.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field

import numpy as np

# Pixel (i, j) covers [i, i+1) x [j, j+1); its center sits at (i+0.5, j+0.5).
PIXEL_CENTER = 0.5
ORTHO_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with camera-to-ego extrinsics.

    ``vertical_fov`` is an input of the cylinder construction; when omitted it
    is derived from ``fy`` and ``height``.  ``flipped`` marks a virtual camera
    whose image is the horizontal mirror of a real one (see
    :func:`mirror_camera`).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsics: np.ndarray
    vertical_fov: float | None = None
    name: str = ""
    flipped: bool = False

    def __post_init__(self):
        ext = _frozen(self.extrinsics)
        if ext.shape != (4, 4):
            raise ValueError("extrinsics must be 4x4")
        rot = ext[:3, :3]
        if not np.allclose(rot.T @ rot, np.eye(3), atol=ORTHO_TOL, rtol=0):
            raise ValueError("extrinsics rotation block is not orthonormal")
        if np.linalg.det(rot) < 0:
            raise ValueError("extrinsics rotation must be proper (det +1)")
        if not np.allclose(ext[3], [0, 0, 0, 1]):
            raise ValueError("extrinsics bottom row must be [0, 0, 0, 1]")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")
        object.__setattr__(self, "extrinsics", ext)
        vfov = self.vertical_fov
        if vfov is None:
            vfov = vertical_fov_from_intrinsics(self.fy, self.height)
        if not 0 < vfov < math.pi:
            raise ValueError("vertical_fov must lie in (0, pi)")
        object.__setattr__(self, "vertical_fov", float(vfov))

    @property
    def rotation(self):
        return self.extrinsics[:3, :3]

    @property
    def position(self):
        return self.extrinsics[:3, 3]

    @property
    def intrinsics(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def forward(self):
        return self.rotation[:, 2]

    @property
    def azimuth(self):
        """Yaw of the optical axis in the ego xy-plane, in ``[-pi, pi)``."""
        f = self.forward
        return wrap_angle(math.atan2(f[1], f[0]))

    @property
    def horizontal_fov(self):
        return 2.0 * math.atan(self.width / (2.0 * self.fx))

    def with_image_size(self, width, height):
        """Same pose and field of view at another resolution."""
        sx, sy = width / self.width, height / self.height
        return Camera(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, int(width),
                      int(height), self.extrinsics, self.vertical_fov, self.name, self.flipped)


@dataclass(frozen=True)
class UCCMParams:
    rho: float = 1.0
    delta_h: float = 0.0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")


@dataclass(frozen=True)
class CylinderSpec:
    center: np.ndarray
    radius: float
    height: float
    h_res: int
    w_res: int
    # rho * f_min used to derive the radius; kept for the row -> z map.
    fov: float = field(default=0.0)

    def __post_init__(self):
        c = _frozen(self.center)
        if c.shape != (3,):
            raise ValueError("center must be a 3-vector")
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not self.height > 0:
            raise ValueError("height must be positive")
        if self.h_res < 2 or self.w_res < 2:
            raise ValueError("cylinder resolution must be at least 2x2")
        if self.fov == 0.0:
            object.__setattr__(self, "fov", 2.0 * math.atan(self.height / 2.0 / self.radius))

    @property
    def angular_step(self):
        return 2.0 * math.pi / self.w_res

    @property
    def half_height(self):
        """Half extent of the plane rows, ``R_u * tan(fov / 2)``."""
        return self.radius * math.tan(self.fov / 2.0)

    def column_theta(self, w_res=None):
        """Azimuth of each column center; increasing column sweeps clockwise."""
        n = self.w_res if w_res is None else w_res
        return math.pi - (np.arange(n) + 0.5) * (2.0 * math.pi / n)

    def row_z(self, h_res=None):
        """Height (relative to the center) of each row center, top row first."""
        n = self.h_res if h_res is None else h_res
        hh = self.half_height
        return hh - (np.arange(n) + 0.5) * (2.0 * hh / n)

    def resized(self, h_res, w_res):
        return CylinderSpec(self.center, self.radius, self.height, int(h_res), int(w_res), self.fov)

    def to_dict(self):
        return {"center": [float(v) for v in self.center], "radius": float(self.radius),
                "height": float(self.height), "h_res": int(self.h_res), "w_res": int(self.w_res),
                "fov": float(self.fov)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["center"], float), d["radius"], d["height"], int(d["h_res"]),
                   int(d["w_res"]), d.get("fov", 0.0))


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    dir: np.ndarray

    def __post_init__(self):
        o, d = _frozen(self.origin), _frozen(self.dir)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be a unit vector")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "dir", d)

    def at(self, t):
        return self.origin + t * self.dir


def wrap_angle(theta):
    """Wrap angles into ``[-pi, pi)``."""
    out = np.mod(np.asarray(theta, dtype=np.float64) + math.pi, 2.0 * math.pi) - math.pi
    return float(out) if np.ndim(out) == 0 else out


def vertical_fov_from_intrinsics(fy, height):
    return 2.0 * math.atan(height / (2.0 * fy))


def look_rotation(azimuth, pitch=0.0):
    """Camera-to-ego rotation for an optical axis at ``azimuth`` (yaw, CCW from
    +x) tilted up by ``pitch``."""
    ca, sa = math.cos(azimuth), math.sin(azimuth)
    cp, sp = math.cos(pitch), math.sin(pitch)
    forward = np.array([ca * cp, sa * cp, sp])
    right = np.array([sa, -ca, 0.0])
    down = np.cross(forward, right)
    return np.column_stack([right, down, forward])


def make_camera(azimuth, position, hfov, width, height, pitch=0.0, name="", vertical_fov=None):
    """Square-pixel camera with a centered principal point."""
    fx = (width / 2.0) / math.tan(hfov / 2.0)
    ext = np.eye(4)
    ext[:3, :3] = look_rotation(azimuth, pitch)
    ext[:3, 3] = position
    return Camera(fx, fx, width / 2.0, height / 2.0, int(width), int(height), ext,
                  vertical_fov, name)


def build_cylinder_spec(cameras, z_extent_points, params, h_res, w_res):
    if len(cameras) == 0:
        raise ValueError("at least one camera is required")
    pts = np.asarray(z_extent_points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("z extent needs at least one point")
    f_min = min(c.vertical_fov for c in cameras)
    fov = params.rho * f_min
    if not 0 < fov < math.pi:
        raise ValueError(f"rho * f_min = {fov:.6g} must lie in (0, pi)")
    height = float(pts[:, 2].max() - pts[:, 2].min())
    if height <= 0:
        raise ValueError("degenerate vertical extent")
    center = np.mean([c.position for c in cameras], axis=0) + np.array([0.0, 0.0, params.delta_h])
    radius = (height / 2.0) / math.tan(fov / 2.0)
    return CylinderSpec(center, radius, height, int(h_res), int(w_res), fov)


def cyl_to_cartesian(p, spec):
    p = np.asarray(p, dtype=np.float64)
    r, th, z = p[..., 0], p[..., 1], p[..., 2]
    out = np.stack([r * np.cos(th), r * np.sin(th), z], axis=-1)
    return out + spec.center


def cartesian_to_cyl(x, spec):
    """Cartesian to ``(r, theta, z)``; on the axis theta is defined as 0."""
    rel = np.asarray(x, dtype=np.float64) - spec.center
    r = np.hypot(rel[..., 0], rel[..., 1])
    th = np.arctan2(rel[..., 1], rel[..., 0])
    th = np.where(th >= math.pi, th - 2.0 * math.pi, th)
    th = np.where(r == 0.0, 0.0, th)
    return np.stack([r, th, rel[..., 2]], axis=-1)


def to_camera_frame(points, cam):
    rel = np.asarray(points, dtype=np.float64) - cam.position
    return rel @ cam.rotation


def project_points(points, cam):
    """Vectorized projection.  Returns ``(uv, depth, valid)`` where ``valid``
    marks points in front of the camera and inside the image."""
    pc = to_camera_frame(points, cam)
    z = pc[..., 2]
    valid = z > 0
    zs = np.where(valid, z, 1.0)
    u = cam.fx * pc[..., 0] / zs + cam.cx
    v = cam.fy * pc[..., 1] / zs + cam.cy
    valid &= (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    return np.stack([u, v], axis=-1), z, valid


def world_to_pixel(x, cam):
    uv, depth, valid = project_points(np.asarray(x, dtype=np.float64)[None], cam)
    if not valid[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1]), float(depth[0])


def camera_ray_dirs(cam, cols=None, rows=None):
    """Unnormalised world directions ``R @ (x_c, y_c, 1)`` for pixel centers,
    shape ``(H, W, 3)``.  Scaling one by a z-depth lands on the 3D point."""
    cols = np.arange(cam.width) if cols is None else np.asarray(cols)
    rows = np.arange(cam.height) if rows is None else np.asarray(rows)
    xc = (cols - cam.cx + PIXEL_CENTER) / cam.fx
    yc = (rows - cam.cy + PIXEL_CENTER) / cam.fy
    xx, yy = np.meshgrid(xc, yc)
    dc = np.stack([xx, yy, np.ones_like(xx)], axis=-1)
    return dc @ cam.rotation.T


def pixel_rays(cam):
    """Unit ray directions for every pixel, ``(H, W, 3)``."""
    d = camera_ray_dirs(cam)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def pixel_ray(cam, i, j):
    if not (0 <= i < cam.width and 0 <= j < cam.height):
        raise ValueError("pixel outside the image")
    d = camera_ray_dirs(cam, [i], [j])[0, 0]
    return Ray(cam.position.copy(), d / np.linalg.norm(d))


def mirror_camera(cam, axis=0, offset=0.0):
    """Reflect a camera about the vertical plane ``x[axis] = offset``.

    A reflection is improper, so the stored rotation is composed with a
    horizontal image flip (negated camera x axis) and ``flipped`` is toggled:
    the virtual camera sees the mirrored scene as a left-right flipped image.
    """
    if axis not in (0, 1):
        raise ValueError("mirror plane must be vertical (axis 0 or 1)")
    m = np.eye(3)
    m[axis, axis] = -1.0
    flip = np.diag([-1.0, 1.0, 1.0])
    ext = np.eye(4)
    ext[:3, :3] = m @ cam.rotation @ flip
    pos = cam.position.copy()
    pos[axis] = 2.0 * offset - pos[axis]
    ext[:3, 3] = pos
    # The flip also mirrors the principal point.
    cx = cam.width - cam.cx
    name = cam.name[: -len("_mirror")] if cam.name.endswith("_mirror") else cam.name + "_mirror"
    return Camera(cam.fx, cam.fy, cx, cam.cy, cam.width, cam.height, ext, cam.vertical_fov,
                  name, not cam.flipped)


# ---------------------------------------------------------------------------
# structured text config

def cameras_to_config(cameras):
    cp = configparser.ConfigParser()
    for k, cam in enumerate(cameras):
        sec = f"camera.{k}"
        cp[sec] = {
            "name": cam.name,
            "fx": repr(float(cam.fx)),
            "fy": repr(float(cam.fy)),
            "cx": repr(float(cam.cx)),
            "cy": repr(float(cam.cy)),
            "width": str(cam.width),
            "height": str(cam.height),
            "vertical_fov_deg": repr(math.degrees(cam.vertical_fov)),
            "flipped": str(cam.flipped).lower(),
            "extrinsics": " ".join(repr(float(v)) for v in cam.extrinsics.ravel()),
        }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def cameras_from_config(text):
    cp = configparser.ConfigParser()
    cp.read_string(text)
    cams = []
    for sec in sorted((s for s in cp.sections() if s.startswith("camera.")),
                      key=lambda s: int(s.split(".", 1)[1])):
        s = cp[sec]
        ext = np.array([float(v) for v in s["extrinsics"].split()]).reshape(4, 4)
        cams.append(Camera(s.getfloat("fx"), s.getfloat("fy"), s.getfloat("cx"), s.getfloat("cy"),
                           s.getint("width"), s.getint("height"), ext,
                           math.radians(s.getfloat("vertical_fov_deg")), s.get("name", ""),
                           s.getboolean("flipped", fallback=False)))
    return cams
