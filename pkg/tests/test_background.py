import math

import numpy as np
import pytest

from cylsplat.background import (box_downsample, channel_select, cylinder_uv, fuse,
                                 intersect_many, ray_cylinder_intersect, sample_background,
                                 synthesize_background)
from cylsplat.featureplane import CylinderPlaneFeature
from cylsplat.geometry import CylinderSpec, Ray, make_camera, pixel_rays
from cylsplat.splat import RenderOutput

from _oracles import bisect_root


def _cyl(R=5.0, Z=4.0, center=(0.0, 0.0, 0.0), h=8, w=64):
    return CylinderSpec(np.array(center, float), R, Z, h, w)


def _ray(o, d):
    d = np.asarray(d, float)
    return Ray(np.asarray(o, float), d / np.linalg.norm(d))


# -- intersection -----------------------------------------------------------------

def test_axial_origin():
    t, p = ray_cylinder_intersect(_ray([0, 0, 0], [1, 0, 0]), _cyl(5.0))
    assert abs(t - 5.0) <= 1e-9
    np.testing.assert_allclose(p, [5, 0, 0], atol=1e-9)


def test_off_center_origin():
    t, p = ray_cylinder_intersect(_ray([1, 0, 0], [0, 1, 0]), _cyl(2.0))
    assert abs(t - math.sqrt(3)) <= 1e-9
    np.testing.assert_allclose(p, [1, math.sqrt(3), 0], atol=1e-9)


def test_vertical_ray_misses():
    assert ray_cylinder_intersect(_ray([0.5, 0, 0], [0, 0, 1]), _cyl()) is None


def test_outside_origin_pointing_away():
    assert ray_cylinder_intersect(_ray([10, 0, 0], [1, 0, 0]), _cyl()) is None
    assert ray_cylinder_intersect(_ray([10, 0, 0], [0, 1, 0]), _cyl()) is None


def test_interior_rays_residual_and_bisection(rng):
    cs = _cyl(7.0, center=(0.3, -0.4, 1.0))
    for _ in range(300):
        r = 7.0 * math.sqrt(rng.random()) * 0.99
        a = rng.uniform(-math.pi, math.pi)
        o = cs.center + [r * math.cos(a), r * math.sin(a), rng.normal()]
        d = rng.normal(size=3)
        if np.hypot(d[0], d[1]) < 1e-3:
            continue
        ray = _ray(o, d)
        t, p = ray_cylinder_intersect(ray, cs)
        rel = p - cs.center
        assert abs(rel[0] ** 2 + rel[1] ** 2 - 49.0) <= 1e-6 * 49.0

        def f(s):
            q = ray.at(s) - cs.center
            return q[0] ** 2 + q[1] ** 2 - 49.0
        # the exit lies within a chord (2R) of horizontal travel
        hi = 14.0 / np.hypot(ray.dir[0], ray.dir[1])
        assert abs(t - bisect_root(f, 0.0, hi)) < 1e-9


def test_vectorized_matches_scalar(rng):
    cs = _cyl()
    o = rng.uniform(-2, 2, (100, 3))
    d = rng.normal(size=(100, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    t, pts = intersect_many(o, d, cs)
    for i in range(100):
        hit = ray_cylinder_intersect(Ray(o[i], d[i]), cs)
        assert hit[0] == pytest.approx(t[i], abs=1e-12)


# -- uv -------------------------------------------------------------------------

def test_uv_examples():
    cs = _cyl(5.0, 4.0)
    assert cylinder_uv([5, 0, 0], cs) == (0.0, 0.0)
    u, v = cylinder_uv([0, -5, 1.0], cs)
    assert u == pytest.approx(0.5) and v == pytest.approx(-0.25)
    assert cylinder_uv([0, -5, 1.0], cs, full_range=True)[1] == pytest.approx(-0.5)


def test_uv_rejects_off_wall():
    with pytest.raises(ValueError):
        cylinder_uv([1, 0, 0], _cyl())


def test_u_covers_half_open_range():
    cs = _cyl()
    th = np.linspace(-math.pi, math.pi, 721)[:-1]
    us = [cylinder_uv([5 * math.cos(a), 5 * math.sin(a), 0], cs)[0] for a in th]
    assert max(us) == pytest.approx(1.0) and min(us) > -1.0
    np.testing.assert_allclose(np.diff(us), -np.diff(th)[0] / math.pi, atol=1e-9)


def test_u_follows_pixel_column_for_centered_camera():
    cs = _cyl(8.0, 20.0)
    cam = make_camera(0.4, cs.center.copy(), math.radians(80), 40, 20)
    dirs = pixel_rays(cam)
    t, pts = intersect_many(np.broadcast_to(cam.position, dirs.shape), dirs, cs)
    u = np.array([[cylinder_uv(p, cs)[0] for p in row] for row in pts])
    cols = np.arange(40) + 0.5
    theta = 0.4 - np.arctan((cols - cam.cx) / cam.fx)
    np.testing.assert_allclose(u, np.broadcast_to(-theta / math.pi, u.shape), atol=1e-9)


# -- sampling ---------------------------------------------------------------------

def test_constant_plane_constant_output():
    cs = _cyl(6.0, 4.0, (0, 0, 1.6), 8, 64)
    plane = CylinderPlaneFeature(np.full((4, 8, 64), 0.3), cs, "clockwise")
    cam = make_camera(1.0, np.array([0.5, 0.2, 1.6]), math.radians(70), 33, 17)
    out = sample_background(plane, cam, 33, 17)
    assert out.shape == (4, 17, 33)
    np.testing.assert_allclose(out, 0.3, atol=1e-12)


def test_band_is_angular_crop():
    W = 360
    cs = _cyl(6.0, 40.0, (0, 0, 0), 8, W)
    cols = cs.column_theta()
    plane = CylinderPlaneFeature(np.broadcast_to(cols, (1, 8, W)).copy(), cs, "clockwise")
    cam = make_camera(0.0, cs.center.copy(), math.radians(70), 70, 6)
    out = sample_background(plane, cam, 70, 6)
    theta = -np.arctan((np.arange(70) + 0.5 - cam.cx) / cam.fx)
    np.testing.assert_allclose(out[0], np.broadcast_to(theta, (6, 70)), atol=1e-9)
    span = out[0, 3].max() - out[0, 3].min()
    assert span == pytest.approx(math.radians(70) * (69 / 70), rel=0.02)


def test_rows_beyond_plane_take_edge():
    cs = _cyl(4.0, 1.0, (0, 0, 0), 4, 16)
    g = np.zeros((1, 4, 16))
    g[0, 0] = 1.0   # top row
    plane = CylinderPlaneFeature(g, cs, "clockwise")
    cam = make_camera(0.0, np.zeros(3), math.radians(60), 16, 16, pitch=math.radians(50))
    out = sample_background(plane, cam, 16, 16)
    assert np.all(out[0, :4] == 1.0)


def test_sample_requires_plane_feature():
    with pytest.raises(TypeError):
        sample_background(np.zeros((1, 2, 2)), make_camera(0, np.zeros(3), 1.0, 4, 4), 4, 4)


# -- synthesis and fusion -----------------------------------------------------------

def test_zero_features_black():
    img = synthesize_background(np.zeros((5, 8, 12)), np.ones((3, 5)))
    assert img.shape == (3, 8, 12) and not img.any()


def test_channel_select_identity(rng):
    f = rng.uniform(0, 1, (6, 8, 12))
    img = synthesize_background(f, channel_select([2, 0, 5], 6))
    np.testing.assert_array_equal(img, f[[2, 0, 5]])


def test_synthesis_resolution():
    img = synthesize_background(np.ones((3, 5, 7)), np.eye(3), target_hw=(6, 10))
    assert img.shape == (3, 24, 40)


def test_synthesis_channel_mismatch():
    with pytest.raises(ValueError):
        synthesize_background(np.ones((3, 4, 4)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        synthesize_background(np.ones((3, 4, 4)), np.ones((3, 5)))


def _fg(img, alpha):
    return RenderOutput(img, alpha, np.zeros_like(alpha))


def test_fuse_cases(rng):
    H, W = 6, 10
    fg_img = rng.uniform(0, 0.5, (3, H, W))
    bg = rng.uniform(0, 1, (3, 4 * H, 4 * W))
    np.testing.assert_array_equal(fuse(_fg(fg_img, np.ones((H, W))), bg), fg_img)
    np.testing.assert_allclose(fuse(_fg(np.zeros((3, H, W)), np.zeros((H, W))), bg),
                               box_downsample(bg), atol=1e-15)
    c = rng.uniform(0, 1, 3)
    bgc = np.broadcast_to(c[:, None, None], (3, 4 * H, 4 * W))
    out = fuse(_fg(np.broadcast_to(0.5 * c[:, None, None], (3, H, W)), np.full((H, W), 0.5)), bgc)
    np.testing.assert_allclose(out, np.broadcast_to(c[:, None, None], out.shape), atol=1e-15)


def test_fuse_linear_in_background(rng):
    H, W = 4, 4
    fg = _fg(np.zeros((3, H, W)), rng.uniform(0, 1, (H, W)))
    a, b = rng.uniform(0, 0.5, (2, 3, 16, 16))
    np.testing.assert_allclose(fuse(fg, a + b), fuse(fg, a) + fuse(fg, b), atol=1e-15)


def test_fuse_shape_mismatch():
    with pytest.raises(ValueError):
        fuse(_fg(np.zeros((3, 4, 4)), np.zeros((4, 4))), np.zeros((3, 8, 8)))
