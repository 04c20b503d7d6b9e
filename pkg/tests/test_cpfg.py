import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cylsplat.cpfg import (Cpfg, CpfgRangeError, NormalizedCpfgCoord, default_r_max,
                           denormalize, inject_projection, normalize_point,
                           project_pixel_features, reshape_to_cpfg, sample_grid,
                           trilinear_sample, trilinear_sample_points)
from cylsplat.featureplane import CylinderPlaneFeature, hflip
from cylsplat.geometry import CylinderSpec, cartesian_to_cyl, cyl_to_cartesian
from cylsplat.occupancy import OccupancyGrid, grid_points

from _oracles import trilinear_neighbours

BACKENDS = ["numba", "numpy"]


@pytest.fixture
def cyl():
    return CylinderSpec(np.array([0.2, -0.1, 1.6]), 8.0, 16.0, 6, 12)


def _cpfg(rng, cyl, D=3, K=5, r_min=0.5, r_max=20.0):
    return Cpfg(rng.normal(size=(D, K, cyl.h_res, cyl.w_res)), r_min, r_max, cyl)


# -- reshape --------------------------------------------------------------------

def test_reshape_sizes(cyl):
    f = np.zeros((48 * 8, 4, 6))
    assert reshape_to_cpfg(f, 48, 0.5, 10, cyl).data.shape == (8, 48, 4, 6)


def test_reshape_block_layout_and_sum(rng, cyl):
    f = rng.normal(size=(12, 4, 6))
    c = reshape_to_cpfg(f, 3, 0.5, 10, cyl)
    for j in range(3):
        np.testing.assert_array_equal(c.data[:, j], f[4 * j:4 * j + 4])
    assert c.data.sum() == pytest.approx(f.sum(), abs=1e-12)
    assert sorted(c.data.ravel()) == sorted(f.ravel())


def test_reshape_single_plane(rng, cyl):
    f = rng.normal(size=(4, 3, 5))
    np.testing.assert_array_equal(reshape_to_cpfg(f, 1, 0.5, 10, cyl).data[:, 0], f)


def test_reshape_indivisible(cyl):
    with pytest.raises(ValueError):
        reshape_to_cpfg(np.zeros((10, 2, 2)), 3, 0.5, 10, cyl)


def test_cpfg_invariants(cyl):
    with pytest.raises(ValueError):
        Cpfg(np.zeros((1, 2, 2, 2)), 5.0, 5.0, cyl)
    with pytest.raises(ValueError):
        Cpfg(np.full((1, 2, 2, 2), np.nan), 0.5, 5.0, cyl)


# -- normalized coordinates ------------------------------------------------------

def test_normalize_endpoint(rng, cyl):
    c = _cpfg(rng, cyl)
    n = normalize_point([c.r_max, math.pi, 0.0], c)
    assert (float(n.t), float(n.s), float(n.p)) == (1.0, 0.0, 0.5)
    np.testing.assert_array_equal(n.canonical, [1.0, -1.0, 0.0])


def test_normalize_vertical_component(rng, cyl):
    c = _cpfg(rng, cyl)
    r, z = 7.0, 1.3
    n = normalize_point([r, 0.4, z], c)
    assert n.canonical[2] == pytest.approx(-2 * z * cyl.radius / (cyl.height * r), abs=1e-15)


def test_normalize_frustum_half_height(rng, cyl):
    c = _cpfg(rng, cyl)
    r = 6.0
    n = normalize_point([r, 0.0, cyl.height * r / (2 * cyl.radius)], c)
    assert float(n.p) == pytest.approx(0.0, abs=1e-15)
    assert n.canonical[2] == pytest.approx(-1.0)


def test_angular_component_is_negated_theta(rng, cyl):
    c = _cpfg(rng, cyl)
    th = rng.uniform(-math.pi, math.pi, 1000)
    pts = np.stack([np.full(1000, 3.0), th, np.zeros(1000)], axis=1)
    np.testing.assert_allclose(normalize_point(pts, c).canonical[:, 1], -th / math.pi, atol=1e-9)


def test_normalize_errors(rng, cyl):
    c = _cpfg(rng, cyl)
    with pytest.raises(CpfgRangeError):
        normalize_point([0.1, 0.0, 0.0], c)
    with pytest.raises(CpfgRangeError):
        normalize_point([25.0, 0.0, 0.0], c)
    c0 = Cpfg(np.zeros((1, 2, 2, 2)), 0.0, 5.0, cyl)
    with pytest.raises(CpfgRangeError):
        normalize_point([0.0, 0.0, 0.0], c0)
    n = normalize_point([25.0, 0.0, 0.0], c, clamp=True)
    assert float(n.t) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.5, 20.0), st.floats(-math.pi, math.pi, exclude_max=True), st.floats(-30, 30))
def test_normalize_inverse_round_trip(r, th, z):
    cs = CylinderSpec(np.zeros(3), 8.0, 16.0, 6, 12)
    c = Cpfg(np.zeros((1, 2, 6, 12)), 0.5, 20.0, cs)
    back = denormalize(normalize_point([r, th, z], c), c)
    assert abs(back[0] - r) < 1e-9 and abs(back[2] - z) < 1e-9
    assert abs(math.remainder(back[1] - th, 2 * math.pi)) < 1e-9


def test_radial_ratio_affine_in_r(rng, cyl):
    c = _cpfg(rng, cyl)
    r = np.linspace(0.5, 20, 50)
    pts = np.stack([r, np.full(50, 0.3), 0.1 * r], axis=1)   # fixed z / r
    n = normalize_point(pts, c)
    np.testing.assert_allclose(np.diff(n.t, 2), 0.0, atol=1e-12)
    np.testing.assert_allclose(n.p, n.p[0], atol=1e-12)


# -- trilinear sampling ------------------------------------------------------------

@pytest.mark.parametrize("backend", BACKENDS)
def test_constant_volume(backend, cyl, rng):
    c = Cpfg(np.full((2, 4, cyl.h_res, cyl.w_res), 1.5), 0.5, 10, cyl)
    K, H, W = 4, cyl.h_res, cyl.w_res
    lo = np.array([1 / K - 1, 1 / W - 1, 1 / H - 1])   # first node along each axis
    canon = rng.uniform(lo, -lo, (200, 3))
    np.testing.assert_allclose(trilinear_sample_points(c, canon, backend), 1.5, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_node_returns_stored_vector(backend, cyl, rng):
    c = _cpfg(rng, cyl)
    j, h, w = 2, 3, 7
    canon = [(2 * j + 1) / c.planes - 1, (2 * w + 1) / c.w_res - 1, (2 * h + 1) / c.h_res - 1]
    got = trilinear_sample(c, np.array(canon), backend)
    np.testing.assert_allclose(got, c.data[:, j, h, w], atol=1e-14)


@pytest.mark.parametrize("backend", BACKENDS)
def test_matches_neighbour_oracle(backend, cyl, rng):
    c = _cpfg(rng, cyl, D=4, K=7)
    canon = rng.uniform(-1.05, 1.05, (1000, 3))
    got = trilinear_sample_points(c, canon, backend)
    want = np.stack([trilinear_neighbours(c.data, q) for q in canon], axis=1)
    np.testing.assert_allclose(got, want, atol=1e-6, rtol=0)


def test_out_of_range_is_zero(rng, cyl):
    c = _cpfg(rng, cyl)
    coord = NormalizedCpfgCoord(np.array(1.2), np.array(0.5), np.array(0.5))
    np.testing.assert_array_equal(trilinear_sample(c, coord), 0.0)


def test_backends_agree_exactly(rng, cyl):
    c = _cpfg(rng, cyl)
    canon = rng.uniform(-1, 1, (500, 3))
    a = trilinear_sample_points(c, canon, "numba")
    b = trilinear_sample_points(c, canon, "numpy")
    np.testing.assert_allclose(a, b, atol=1e-14, rtol=0)


# -- sample_grid ------------------------------------------------------------------

def test_sample_grid_shape():
    grid = OccupancyGrid((8, 20, 20), 0.4, (-4, -4, -1, 4, 4, 2.2))
    cs = CylinderSpec(np.array([0, 0, 1.6]), 5.0, 3.2, 4, 8)
    c = Cpfg(np.ones((8, 3, 4, 8)), 0.5, default_r_max(grid.range), cs)
    assert sample_grid(c, grid_points(grid)).shape == (8, 8 * 20 * 20)


def test_sample_grid_point_at_node(rng, cyl):
    c = _cpfg(rng, cyl, K=4, r_min=0.5, r_max=12.0)
    node = (1, 2, 5)
    t = (2 * node[0] + 1) / (2 * c.planes)
    theta = math.pi - (2 * node[2] + 1) / (2 * c.w_res) * 2 * math.pi
    r = c.r_min + t * (c.r_max - c.r_min)
    p = (2 * node[1] + 1) / (2 * c.h_res)
    z = (0.5 - p) * cyl.height * r / cyl.radius
    x = cyl_to_cartesian([r, theta, z], cyl)
    np.testing.assert_allclose(sample_grid(c, x[None])[:, 0], c.data[:, 1, 2, 5], atol=1e-9)


def test_sample_grid_permutation(rng, cyl):
    c = _cpfg(rng, cyl)
    pts = rng.uniform(-10, 10, (64, 3))
    perm = rng.permutation(64)
    np.testing.assert_allclose(sample_grid(c, pts)[:, perm], sample_grid(c, pts[perm]), atol=0)


def test_sample_grid_clamps_radius(rng, cyl):
    c = _cpfg(rng, cyl, r_min=2.0, r_max=6.0)
    inner = cyl.center + [0.5, 0.0, 0.0]
    edge = cyl.center + [2.0, 0.0, 0.0]
    np.testing.assert_allclose(sample_grid(c, inner[None]), sample_grid(c, edge[None]))


# -- pixel feature deposits -------------------------------------------------------

def _deposit_setup(cyl, K=6):
    return (K, cyl.h_res, cyl.w_res), 0.5, 20.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_deposit_weights_sum_to_one(backend, cyl, rng):
    shape, rmin, rmax = _deposit_setup(cyl)
    pts = cyl.center + np.column_stack([rng.uniform(-12, 12, (300, 2)), rng.uniform(-1, 1, 300)])
    kept = 0
    for p in pts:
        out = project_pixel_features(p[None], np.ones((1, 1)), shape, rmin, rmax, cyl, backend)
        cylp = cartesian_to_cyl(p, cyl)
        t = (cylp[0] - rmin) / (rmax - rmin)
        v = 0.5 - cylp[2] * cyl.radius / (cyl.height * cylp[0])
        if 0 <= t * shape[0] <= shape[0] - 1 and 0 <= v < 1:
            assert out.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.count_nonzero(out.sum(axis=(0, 2, 3))) <= 2
            kept += 1
        else:
            assert out.sum() == 0.0
    assert kept > 100


def test_deposit_integral_plane(cyl):
    shape, rmin, rmax = _deposit_setup(cyl)
    K = shape[0]
    r = rmin + 2.0 / K * (rmax - rmin)   # t K = 2 exactly
    p = cyl_to_cartesian([r, 0.3, 0.0], cyl)
    out = project_pixel_features(p[None], np.array([[2.0, 3.0]]), shape, rmin, rmax, cyl)
    per_plane = out.sum(axis=(2, 3))
    np.testing.assert_allclose(per_plane[:, 2], [2.0, 3.0], atol=1e-9)
    assert np.abs(per_plane[:, 3]).sum() < 1e-9


def test_deposit_split_and_cell(cyl):
    shape, rmin, rmax = _deposit_setup(cyl)
    K, H, W = shape
    t = 2.25 / K
    r = rmin + t * (rmax - rmin)
    p = cyl_to_cartesian([r, math.pi - 2 * math.pi * (3.5 / W), 0.0], cyl)
    out = project_pixel_features(p[None], np.ones((1, 1)), shape, rmin, rmax, cyl)
    assert out[0, 2, H // 2, 3] == pytest.approx(0.75)
    assert out[0, 3, H // 2, 3] == pytest.approx(0.25)


@pytest.mark.parametrize("backend", BACKENDS)
def test_deposit_additive(backend, cyl, rng):
    shape, rmin, rmax = _deposit_setup(cyl)
    p = cyl.center + [[4.0, 3.0, 0.2]]
    f = rng.normal(size=(1, 3))
    one = project_pixel_features(p, f, shape, rmin, rmax, cyl, backend)
    two = project_pixel_features(np.repeat(p, 2, 0), np.repeat(f, 2, 0), shape, rmin, rmax, cyl,
                                 backend)
    np.testing.assert_allclose(two, 2 * one, atol=1e-15)


def test_deposit_drops_out_of_range(cyl):
    shape, rmin, rmax = _deposit_setup(cyl)
    far = cyl.center + [[30.0, 0.0, 0.0]]
    high = cyl.center + [[5.0, 0.0, 40.0]]
    out = project_pixel_features(np.vstack([far, high]), np.ones((2, 1)), shape, rmin, rmax, cyl)
    assert out.sum() == 0.0


def test_deposit_backends_agree(cyl, rng):
    shape, rmin, rmax = _deposit_setup(cyl)
    pts = cyl.center + rng.uniform(-10, 10, (400, 3)) * [1, 1, 0.1]
    f = rng.normal(size=(400, 4))
    a = project_pixel_features(pts, f, shape, rmin, rmax, cyl, "numba")
    b = project_pixel_features(pts, f, shape, rmin, rmax, cyl, "numpy")
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_deposit_length_mismatch(cyl):
    with pytest.raises(ValueError):
        project_pixel_features(np.zeros((2, 3)), np.ones((3, 1)), (2, 6, 12), 0.5, 5, cyl)


# -- injection -------------------------------------------------------------------

def _planes(rng, cyl, C=2):
    g = rng.normal(size=(C, cyl.h_res, cyl.w_res))
    return (CylinderPlaneFeature(g, cyl, "clockwise"),
            CylinderPlaneFeature(g[..., ::-1].copy(), cyl, "counterclockwise"))


def test_inject_zero_projection(rng, cyl):
    fp, fm = _planes(rng, cyl)
    a, b = inject_projection(fp, fm, np.zeros((2, 1, cyl.h_res, cyl.w_res)), np.eye(2))
    np.testing.assert_array_equal(a.grid, fp.grid)
    np.testing.assert_array_equal(b.grid, fm.grid)


def test_inject_single_cell(rng, cyl):
    fp, fm = _planes(rng, cyl)
    proj = np.zeros((2, 1, cyl.h_res, cyl.w_res))
    proj[:, 0, 2, 3] = [1.0, -2.0]
    a, b = inject_projection(fp, fm, proj, np.eye(2))
    da = np.any(a.grid != fp.grid, axis=0)
    db = np.any(b.grid != fm.grid, axis=0)
    assert np.argwhere(da).tolist() == [[2, 3]]
    assert np.argwhere(db).tolist() == [[2, cyl.w_res - 1 - 3]]


def test_inject_linear(rng, cyl):
    fp, fm = _planes(rng, cyl)
    M = rng.normal(size=(2, 6))
    p1 = rng.normal(size=(2, 3, cyl.h_res, cyl.w_res))
    p2 = rng.normal(size=(2, 3, cyl.h_res, cyl.w_res))
    zero = [g.grid for g in inject_projection(fp, fm, 0 * p1, M)]
    r1 = [g.grid - z for g, z in zip(inject_projection(fp, fm, p1, M), zero)]
    r2 = [g.grid - z for g, z in zip(inject_projection(fp, fm, p2, M), zero)]
    r12 = [g.grid - z for g, z in zip(inject_projection(fp, fm, p1 + p2, M), zero)]
    for x, y, s in zip(r1, r2, r12):
        np.testing.assert_allclose(x + y, s, atol=1e-12)
    # the reversed-plane term is the flip of the forward one
    np.testing.assert_allclose(r1[1], hflip(r1[0]), atol=1e-12)


def test_inject_shape_mismatch(rng, cyl):
    fp, fm = _planes(rng, cyl)
    with pytest.raises(ValueError):
        inject_projection(fp, fm, np.zeros((2, 1, 3, 3)), np.eye(2))
    with pytest.raises(ValueError):
        inject_projection(fp, fm, np.zeros((2, 1, cyl.h_res, cyl.w_res)), np.eye(3, 2))
