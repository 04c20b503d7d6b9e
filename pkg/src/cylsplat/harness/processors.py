"""Deterministic stand-ins for the learned networks.

Every processor is a named map between feature grids with a declared shape
contract that is checked on each call.  The reference set uses seeded random
1x1 channel mixes, a shared-weight dual-branch encoder for the ``(F+, F-)``
pair and bilinear upsampling; nothing here is trained.
"""

from __future__ import annotations

import numpy as np

from ..background import box_downsample
from ..featureplane import hflip, resample
from ..gaussians import APP_PER_GAUSSIAN, GEO_PER_GAUSSIAN, RAW_PER_GAUSSIAN, DecoderParams

EXTRACT_SCALE = 4
BG_UPSAMPLE = 2


class ContractError(ValueError):
    """A processor received or produced a tensor of the wrong shape."""


def check_shape(name, arr, shape):
    a = np.asarray(arr)
    if a.shape != tuple(shape):
        raise ContractError(f"{name}: expected shape {tuple(shape)}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name}: non-finite values")
    return a


def _mix(w, x):
    return np.einsum("oc,chw->ohw", w, x)


def _upsample(x, k):
    if k == 1:
        return x
    return resample(x, x.shape[1] * k, x.shape[2] * k)


class FeatureProcessor:
    """Base class: ``__call__`` checks the input shape, runs, checks the output."""

    name = "processor"

    def in_shape(self, *shapes):
        return None

    def out_shape(self, in_shape):
        raise NotImplementedError

    def run(self, *xs):
        raise NotImplementedError

    def __call__(self, *xs):
        xs = [np.asarray(x, dtype=np.float64) for x in xs]
        want = self.in_shape(*[x.shape for x in xs])
        if want is not None:
            for i, x in enumerate(xs):
                check_shape(f"{self.name} input {i}", x, want)
        y = self.run(*xs)
        check_shape(f"{self.name} output", y, self.out_shape(xs[0].shape))
        return y


class ReferenceExtractor(FeatureProcessor):
    """Image -> ``(4, H/4, W/4)``: box-averaged RGB plus a constant coverage channel.

    The constant channel keeps every projected cell nonzero, so the
    zero-as-unset convention marks exactly the cells no camera sees.
    """

    name = "extract"
    channels = 4

    def in_shape(self, shape):
        if len(shape) != 3 or shape[0] != 3:
            raise ContractError(f"extract: expected a 3 x H x W image, got {shape}")
        return shape

    def out_shape(self, in_shape):
        return (self.channels, in_shape[1] // EXTRACT_SCALE, in_shape[2] // EXTRACT_SCALE)

    def run(self, img):
        x = np.concatenate([img, np.ones((1,) + img.shape[1:])])
        return box_downsample(x, EXTRACT_SCALE)


class DualBranch(FeatureProcessor):
    """Shared-weight encoder on ``F+`` and the flipped ``F-``, fused by a 1x1 mix.

    The second branch flips ``F-`` before encoding and flips the encoding back
    before fusion.  ``up_in`` / ``up_out`` upsample before and after.
    """

    def __init__(self, name, c_in, c_out, seed, hidden=16, up_in=1, up_out=1, bias=0.0):
        rng = np.random.default_rng(seed)
        self.name = name
        self.c_in, self.c_out = c_in, c_out
        self.up_in, self.up_out = up_in, up_out
        self.enc = rng.normal(0.0, 1.0 / np.sqrt(c_in), (hidden, c_in))
        self.dec = rng.normal(0.0, 1.0 / np.sqrt(2 * hidden), (c_out, 2 * hidden))
        self.bias = np.full(c_out, float(bias))

    def in_shape(self, a, b):
        if len(a) != 3 or a[0] != self.c_in:
            raise ContractError(f"{self.name}: expected {self.c_in} input channels, got {a}")
        return a

    def out_shape(self, in_shape):
        k = self.up_in * self.up_out
        return (self.c_out, in_shape[1] * k, in_shape[2] * k)

    def run(self, f_plus, f_minus):
        a = _upsample(f_plus, self.up_in)
        b = _upsample(f_minus, self.up_in)
        e_plus = np.tanh(_mix(self.enc, a))
        e_minus = hflip(np.tanh(_mix(self.enc, hflip(b))))
        y = _mix(self.dec, np.concatenate([e_plus, e_minus])) + self.bias[:, None, None]
        return _upsample(y, self.up_out)


class PixelDepth(FeatureProcessor):
    """Depth channel of the depth-augmented plane, upsampled by ``k``."""

    name = "pix_depth"

    def __init__(self, channel, k):
        self.channel, self.k = channel, k

    def out_shape(self, in_shape):
        return (in_shape[1] * self.k, in_shape[2] * self.k)

    def run(self, f_plus, f_minus):
        d = f_plus[self.channel:self.channel + 1]
        return _upsample(d, self.k)[0]


class Planted(FeatureProcessor):
    """Ignores its input (after the shape check) and returns a fixed tensor."""

    def __init__(self, name, value, expect_in=None):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.expect_in = None if expect_in is None else tuple(expect_in)

    def in_shape(self, *shapes):
        return self.expect_in

    def out_shape(self, in_shape):
        return self.value.shape

    def run(self, *xs):
        return self.value.copy()


class Processors:
    """The full set of stand-ins consumed by :func:`run_pipeline`.

    ``prepare(ctx)`` is called once the cylinder specs and the occupancy grid
    are known; subclasses that need scene knowledge build their tensors there.
    """

    passthrough = False

    def prepare(self, ctx):
        return None


class ReferenceProcessors(Processors):
    def __init__(self, config):
        c = config
        s = c.proc_seed
        self.extract = ReferenceExtractor()
        fc = ReferenceExtractor.channels
        self.feat_channels = fc
        self.occ = DualBranch("occ", fc, c.K * c.D_occ, s + 1)
        self.vol = DualBranch("vol", fc, c.K * (c.D_geo + c.D_app), s + 2)
        self.pix = DualBranch("pix", fc + 2, c.D_pix, s + 3, up_in=c.k_i, up_out=c.k_o)
        self.pix_depth = PixelDepth(fc, c.k_i * c.k_o)
        self.bg = DualBranch("bg", fc, 8, s + 4, up_out=BG_UPSAMPLE)
        # a positive bias on the occupied score keeps a sizable occupied set
        self.occ_head = DecoderParams(np.random.default_rng(s + 5).normal(0, 0.5, (2, c.D_occ)),
                                      np.array([0.0, -0.3]))
        self.geo_dec = DecoderParams.random(c.D_geo, GEO_PER_GAUSSIAN * c.G_v, s + 6)
        self.app_dec = DecoderParams.random(c.D_app, APP_PER_GAUSSIAN * c.G_v, s + 7)
        self.pix_dec = DecoderParams.random(c.D_pix, RAW_PER_GAUSSIAN * c.G_p, s + 8)
        self.mixer = DecoderParams.random(c.K * c.D_pix, fc, s + 9, gain=0.05)
        bg_w = np.random.default_rng(s + 10).normal(0, 0.3, (3, 8))
        self.bg_dec = DecoderParams(bg_w, np.full(3, 0.5))
