"""File formats: a small binary tensor container, Netpbm images and JSON sidecars.

Container layout (all little-endian)::

    magic   4 bytes  b"CYLT"
    dtype   u8       code from DTYPE_CODES
    ndim    u8
    shape   ndim x u64
    metalen u32      length of an optional UTF-8 JSON blob
    meta    metalen bytes
    payload row-major array bytes
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"CYLT"
DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("u1"), 4: np.dtype("<i4"),
               5: np.dtype("<u2"), 6: np.dtype("<i8")}
_CODE_OF = {v: k for k, v in DTYPE_CODES.items()}

ALPHA_SCALE = 65535.0  # alpha in [0, 1] -> u16
DEPTH_SCALE = 1000.0   # metres -> millimetres in u16


class ContainerError(ValueError):
    pass


class FormatError(ContainerError):
    """Bad magic or malformed header."""


class TruncatedError(ContainerError):
    """File ends before the header or payload is complete."""


class DtypeError(ContainerError):
    """Unsupported or unexpected element type."""


def encode_tensor(arr, meta=None):
    a = np.asarray(arr)
    key = a.dtype.newbyteorder("<") if a.dtype.itemsize > 1 else a.dtype
    if key not in _CODE_OF:
        raise DtypeError(f"dtype {a.dtype} is not supported by the container")
    if a.ndim > 255:
        raise FormatError("too many dimensions")
    blob = json.dumps(meta, sort_keys=True).encode() if meta is not None else b""
    head = MAGIC + struct.pack("<BB", _CODE_OF[key], a.ndim)
    head += struct.pack(f"<{a.ndim}Q", *a.shape) + struct.pack("<I", len(blob)) + blob
    return head + np.ascontiguousarray(a, dtype=key).tobytes()


def decode_tensor(buf, expect_dtype=None):
    """Inverse of :func:`encode_tensor`; returns ``(array, meta)``."""
    if len(buf) < 6:
        raise TruncatedError("file too short for a header")
    if buf[:4] != MAGIC:
        raise FormatError("bad magic: not a tensor container")
    code, ndim = struct.unpack_from("<BB", buf, 4)
    if code not in DTYPE_CODES:
        raise DtypeError(f"unknown dtype code {code}")
    dt = DTYPE_CODES[code]
    if expect_dtype is not None and np.dtype(expect_dtype) != dt.newbyteorder("="):
        raise DtypeError(f"expected {np.dtype(expect_dtype)}, file holds {dt}")
    off = 6
    if len(buf) < off + 8 * ndim + 4:
        raise TruncatedError("header truncated")
    shape = struct.unpack_from(f"<{ndim}Q", buf, off)
    off += 8 * ndim
    (mlen,) = struct.unpack_from("<I", buf, off)
    off += 4
    if len(buf) < off + mlen:
        raise TruncatedError("metadata truncated")
    try:
        meta = json.loads(buf[off:off + mlen].decode()) if mlen else None
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"malformed metadata: {e}") from None
    off += mlen
    n = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    if len(buf) - off < n:
        raise TruncatedError(f"payload truncated: need {n} bytes, have {len(buf) - off}")
    if len(buf) - off > n:
        raise FormatError("trailing bytes after payload")
    arr = np.frombuffer(buf, dtype=dt, count=n // dt.itemsize, offset=off).reshape(shape)
    return arr.astype(dt.newbyteorder("="), copy=True), meta


def write_tensor(path, arr, meta=None):
    with open(path, "wb") as f:
        f.write(encode_tensor(arr, meta))


def read_tensor(path, expect_dtype=None, with_meta=False):
    with open(path, "rb") as f:
        arr, meta = decode_tensor(f.read(), expect_dtype)
    return (arr, meta) if with_meta else arr


# -- typed wrappers ---------------------------------------------------------

def write_cloud(path, cloud):
    write_tensor(path, cloud.pack(), {"kind": "gaussians", "sh_degree": cloud.sh_degree,
                                      "provenance": cloud.provenance})


def read_cloud(path):
    from .gaussians import GaussianCloud
    rows, meta = read_tensor(path, with_meta=True)
    if not meta or meta.get("kind") != "gaussians":
        raise FormatError("container does not hold a Gaussian cloud")
    return GaussianCloud.unpack(rows, meta["sh_degree"], meta.get("provenance", "merged"))


def write_cpfg(path, cpfg):
    """Tensor plus a ``.json`` sidecar holding K, D, the radial span and the cylinder."""
    head = cpfg.header()
    write_tensor(path, cpfg.data, {"kind": "cpfg", **head})
    with open(str(path) + ".json", "w") as f:
        json.dump(head, f, indent=2, sort_keys=True)


def read_cpfg(path):
    from .cpfg import Cpfg
    from .geometry import CylinderSpec
    data, meta = read_tensor(path, with_meta=True)
    side = str(path) + ".json"
    if os.path.exists(side):
        with open(side) as f:
            meta = json.load(f)
    if not meta or "spec" not in meta:
        raise FormatError("missing CPFG header")
    if data.shape[:2] != (meta["D"], meta["K"]):
        raise FormatError("CPFG header disagrees with the tensor shape")
    return Cpfg(data, meta["r_min"], meta["r_max"], CylinderSpec.from_dict(meta["spec"]))


# -- Netpbm -----------------------------------------------------------------

def to_u8(img):
    a = np.asarray(img)
    if a.dtype == np.uint8:
        return a
    return np.clip(np.rint(np.asarray(a, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path, img):
    """8-bit binary PPM from a ``(3, H, W)`` image (float in [0, 1] or uint8)."""
    a = to_u8(img)
    if a.ndim != 3 or a.shape[0] != 3:
        raise ValueError("PPM needs a 3 x H x W image")
    _, h, w = a.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(np.ascontiguousarray(a.transpose(1, 2, 0)).tobytes())


def _read_netpbm_header(data, magic):
    if data[:2] != magic:
        raise FormatError(f"not a {magic.decode()} file")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedError("header truncated")
        try:
            fields.append(int(data[start:pos]))
        except ValueError:
            raise FormatError("malformed header field") from None
    return fields, pos + 1


def read_ppm(path):
    with open(path, "rb") as f:
        data = f.read()
    (w, h, maxval), off = _read_netpbm_header(data, b"P6")
    if maxval != 255:
        raise DtypeError("only 8-bit PPM is supported")
    n = w * h * 3
    if len(data) - off < n:
        raise TruncatedError("PPM payload truncated")
    px = np.frombuffer(data, dtype=np.uint8, count=n, offset=off).reshape(h, w, 3)
    return px.transpose(2, 0, 1).copy()


def write_pgm16(path, arr):
    """16-bit binary PGM (big-endian samples, as Netpbm requires)."""
    a = np.asarray(arr)
    if a.ndim != 2:
        raise ValueError("PGM needs an H x W map")
    if a.dtype != np.uint16:
        raise DtypeError("PGM16 expects uint16 samples")
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode())
        f.write(a.astype(">u2").tobytes())


def read_pgm16(path):
    with open(path, "rb") as f:
        data = f.read()
    (w, h, maxval), off = _read_netpbm_header(data, b"P5")
    if maxval != 65535:
        raise DtypeError("only 16-bit PGM is supported")
    n = w * h * 2
    if len(data) - off < n:
        raise TruncatedError("PGM payload truncated")
    return np.frombuffer(data, dtype=">u2", count=w * h, offset=off).reshape(h, w).astype(np.uint16)


def alpha_to_u16(alpha):
    return np.clip(np.rint(np.asarray(alpha) * ALPHA_SCALE), 0, 65535).astype(np.uint16)


def depth_to_u16(depth):
    return np.clip(np.rint(np.asarray(depth) * DEPTH_SCALE), 0, 65535).astype(np.uint16)


def write_render(prefix, out):
    """Image as PPM, alpha and depth as 16-bit PGM, plus raw tensors."""
    write_ppm(prefix + "_image.ppm", out.image)
    write_pgm16(prefix + "_alpha.pgm", alpha_to_u16(out.alpha))
    write_pgm16(prefix + "_depth.pgm", depth_to_u16(out.depth))
    write_tensor(prefix + "_image.cyt", out.image)
    write_tensor(prefix + "_alpha.cyt", out.alpha)
    write_tensor(prefix + "_depth.cyt", out.depth)
