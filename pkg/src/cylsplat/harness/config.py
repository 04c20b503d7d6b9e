"""Pipeline configuration, read from and written to INI text.

Schema (every key optional; defaults are the desk-scale settings)::

    [rig]        name, uccm, width, height
    [uccm]       rho_o, dh_o, rho_v, dh_v, rho_p, dh_p   (overrides the preset)
    [plane]      h_res, w_res
    [model]      K, D_occ, D_geo, D_app, D_pix, G_v, G_p, k_i, k_o
    [target]     h, w
    [occupancy]  dims (L H W), range (6 floats), voxel
    [cpfg]       r_min
    [seeds]      scene, complexity, processors
    [pipeline]   passthrough, pixel_branch
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass

from ..rigs import PRESET_NAMES, UccmPreset, uccm_preset


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    rig: str = "nuscenes"
    uccm: str = "nuscenes"
    uccm_override: tuple | None = None  # (rho_o, dh_o, rho_v, dh_v, rho_p, dh_p)
    cam_w: int = 200
    cam_h: int = 112
    h_res: int = 28
    w_res: int = 256
    K: int = 48
    D_occ: int = 8
    D_geo: int = 12
    D_app: int = 36
    D_pix: int = 24
    G_v: int = 3
    G_p: int = 1
    k_i: int = 2
    k_o: int = 2
    target_h: int = 112
    target_w: int = 200
    occ_dims: tuple = (20, 50, 50)
    occ_range: tuple = (-20.0, -20.0, -3.0, 20.0, 20.0, 13.0)
    voxel: float = 0.8
    r_min: float = 0.5
    scene_seed: int = 0
    complexity: int = 1
    proc_seed: int = 1234
    passthrough: bool = False
    pixel_branch: bool = True

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))

    def problems(self):
        out = []
        if self.rig not in PRESET_NAMES:
            out.append(f"unknown rig {self.rig!r}")
        if self.k_i * self.k_o != 4:
            out.append(f"k_i * k_o must be 4, got {self.k_i} * {self.k_o}")
        for name in ("K", "D_occ", "D_geo", "D_app", "D_pix", "G_v", "G_p", "k_i", "k_o"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1")
        if self.D_geo < 3 * self.G_v:
            out.append("D_geo must hold 3 values per volume Gaussian")
        if self.D_app < 11 * self.G_v:
            out.append("D_app must hold 11 values per volume Gaussian")
        if self.D_pix < 14 * self.G_p:
            out.append("D_pix must hold 14 values per pixel Gaussian")
        if self.D_occ < 2:
            out.append("D_occ must be >= 2 (empty / occupied scores)")
        if self.h_res < 2 or self.w_res < 2:
            out.append("plane resolution must be at least 2 x 2")
        if self.target_h % 4 or self.target_w % 4 or self.cam_h % 4 or self.cam_w % 4:
            out.append("image sizes must be multiples of 4")
        if len(self.occ_dims) != 3 or len(self.occ_range) != 6:
            out.append("occupancy dims need 3 values and range 6")
        else:
            L, H, W = self.occ_dims
            x0, y0, z0, x1, y1, z1 = self.occ_range
            for n, lo, hi in ((W, x0, x1), (H, y0, y1), (L, z0, z1)):
                if abs(n * self.voxel - (hi - lo)) > 1e-9:
                    out.append("occupancy dims * voxel must span the range")
                    break
        if not self.r_min >= 0:
            out.append("r_min must be >= 0")
        return out

    def uccm_params(self):
        if self.uccm_override is not None:
            return UccmPreset(*self.uccm_override)
        return uccm_preset(self.uccm)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    # -- INI ----------------------------------------------------------------

    def to_ini(self):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["rig"] = {"name": self.rig, "uccm": self.uccm, "width": str(self.cam_w),
                     "height": str(self.cam_h)}
        if self.uccm_override is not None:
            keys = ("rho_o", "dh_o", "rho_v", "dh_v", "rho_p", "dh_p")
            cp["uccm"] = {k: repr(float(v)) for k, v in zip(keys, self.uccm_override)}
        cp["plane"] = {"h_res": str(self.h_res), "w_res": str(self.w_res)}
        cp["model"] = {k: str(getattr(self, k)) for k in
                       ("K", "D_occ", "D_geo", "D_app", "D_pix", "G_v", "G_p", "k_i", "k_o")}
        cp["target"] = {"h": str(self.target_h), "w": str(self.target_w)}
        cp["occupancy"] = {"dims": " ".join(map(str, self.occ_dims)),
                           "range": " ".join(repr(float(v)) for v in self.occ_range),
                           "voxel": repr(float(self.voxel))}
        cp["cpfg"] = {"r_min": repr(float(self.r_min))}
        cp["seeds"] = {"scene": str(self.scene_seed), "complexity": str(self.complexity),
                       "processors": str(self.proc_seed)}
        cp["pipeline"] = {"passthrough": str(self.passthrough).lower(),
                          "pixel_branch": str(self.pixel_branch).lower()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text, **overrides):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"malformed config: {e}") from None
        kw = {}
        try:
            if cp.has_section("rig"):
                s = cp["rig"]
                kw.update(_pick(s, name=("rig", str), uccm=str, width=("cam_w", int), height=("cam_h", int)))
            if cp.has_section("uccm"):
                s = cp["uccm"]
                base = list(uccm_preset(kw.get("uccm", cls.uccm)).as_tuple())
                for i, k in enumerate(("rho_o", "dh_o", "rho_v", "dh_v", "rho_p", "dh_p")):
                    if k in s:
                        base[i] = float(s[k])
                kw["uccm_override"] = tuple(base)
            if cp.has_section("plane"):
                kw.update(_pick(cp["plane"], h_res=int, w_res=int))
            if cp.has_section("model"):
                kw.update(_pick(cp["model"], K=int, D_occ=int, D_geo=int, D_app=int, D_pix=int,
                                G_v=int, G_p=int, k_i=int, k_o=int))
            if cp.has_section("target"):
                kw.update(_pick(cp["target"], h=("target_h", int), w=("target_w", int)))
            if cp.has_section("occupancy"):
                s = cp["occupancy"]
                if "dims" in s:
                    kw["occ_dims"] = tuple(int(v) for v in s["dims"].split())
                if "range" in s:
                    kw["occ_range"] = tuple(float(v) for v in s["range"].split())
                if "voxel" in s:
                    kw["voxel"] = float(s["voxel"])
            if cp.has_section("cpfg"):
                kw.update(_pick(cp["cpfg"], r_min=float))
            if cp.has_section("seeds"):
                kw.update(_pick(cp["seeds"], scene=("scene_seed", int), complexity=int,
                                processors=("proc_seed", int)))
            if cp.has_section("pipeline"):
                s = cp["pipeline"]
                for k in ("passthrough", "pixel_branch"):
                    if k in s:
                        kw[k] = s.getboolean(k)
        except ValueError as e:
            raise ConfigError(f"bad value in config: {e}") from None
        kw.update(overrides)
        return cls(**kw)

    @classmethod
    def load(cls, path, **overrides):
        with open(path) as f:
            return cls.from_ini(f.read(), **overrides)


def _pick(section, **spec):
    out = {}
    for key, how in spec.items():
        if key not in section:
            continue
        name, conv = (key, how) if not isinstance(how, tuple) else how
        out[name] = conv(section[key])
    return out
