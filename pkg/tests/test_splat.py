import math

import numpy as np
import pytest

from cylsplat.gaussians import GaussianCloud, Gaussian3D, rgb_to_sh0
from cylsplat.geometry import Camera
from cylsplat.splat import (LOW_PASS, TILE, eval_sh, project_cloud, project_gaussian, rasterize,
                            sort_key)

from _oracles import brute_force_render

BACKENDS = ["numba", "numpy"]


def _cam(w=64, h=48, f=60.0):
    return Camera(f, f, w / 2, h / 2, w, h, np.eye(4))


def _iso(mean, s, op, rgb):
    n = len(mean)
    return GaussianCloud(np.asarray(mean, float), np.tile([1.0, 0, 0, 0], (n, 1)),
                         np.full((n, 3), s), np.asarray(op, float),
                         rgb_to_sh0(np.asarray(rgb, float))[:, None, :])


def random_scene(rng, n=200, cam=None):
    cam = cam or _cam()
    z = rng.uniform(2, 12, n)
    xy = rng.uniform(-0.6, 0.6, (n, 2)) * z[:, None]
    q = rng.normal(size=(n, 4))
    return GaussianCloud(np.column_stack([xy, z]), q / np.linalg.norm(q, axis=1, keepdims=True),
                         rng.uniform(0.03, 0.4, (n, 3)), rng.uniform(0.05, 0.99, n),
                         rgb_to_sh0(rng.uniform(0, 1, (n, 1, 3))))


def _oracle(cloud, cam):
    sp = project_cloud(cloud, cam)
    return brute_force_render(sp.means2d, sp.conics, sp.opacities, sp.colors, sp.depths,
                              cam.width, cam.height)


# -- projection -------------------------------------------------------------------

def test_on_axis_covariance():
    cam = _cam()
    for z, s in ((3.0, 0.1), (8.0, 0.5)):
        sp = project_gaussian(Gaussian3D(np.array([0, 0, z]), np.array([1.0, 0, 0, 0]),
                                         np.full(3, s), 0.5, np.zeros((1, 3))), cam)
        want = (cam.fx * s / z) ** 2 + LOW_PASS
        np.testing.assert_allclose(sp.cov2d, want * np.eye(2), atol=1e-12)
        np.testing.assert_allclose(sp.mean2d, [cam.cx, cam.cy])
        assert sp.depth == z


def test_behind_camera_culled():
    g = Gaussian3D(np.array([0, 0, -1.0]), np.array([1.0, 0, 0, 0]), np.ones(3), 0.5, np.zeros((1, 3)))
    assert project_gaussian(g, _cam()) is None
    assert len(project_cloud(_iso([[0, 0, 0.005]], 0.1, [0.5], [[1, 1, 1]]), _cam())) == 0


def test_degree0_color_ignores_view(rng):
    sh = rng.normal(size=(5, 1, 3))
    dirs = rng.normal(size=(5, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    np.testing.assert_array_equal(eval_sh(sh, dirs), eval_sh(sh, -dirs))


def test_higher_degree_sh_depends_on_view():
    sh = np.zeros((1, 4, 3))
    sh[0, 3] = 1.0
    a = eval_sh(sh, np.array([[1.0, 0, 0]]))
    b = eval_sh(sh, np.array([[-1.0, 0, 0]]))
    np.testing.assert_allclose(a, -b)
    assert np.all(a != 0)


# -- sort -------------------------------------------------------------------------

def test_sort_key():
    assert sort_key([3, 1, 2]).tolist() == [1, 2, 0]
    assert sort_key([1, 1, 1]).tolist() == [0, 1, 2]
    assert sort_key([2.0, 1.0, 1.0, 0.5]).tolist() == [3, 1, 2, 0]


# -- compositing ------------------------------------------------------------------

@pytest.mark.parametrize("backend", BACKENDS)
def test_single_splat_peak(backend):
    # odd size: the center of pixel (32, 24) is the principal point
    cam = Camera(60.0, 60.0, 32.5, 24.5, 65, 49, np.eye(4))
    op, rgb = 0.7, np.array([0.2, 0.5, 0.9])
    out = rasterize(_iso([[0, 0, 5.0]], 0.2, [op], [rgb]), cam, backend=backend)
    np.testing.assert_allclose(out.image[:, 24, 32], rgb * op, atol=1e-12)
    assert out.alpha[24, 32] == pytest.approx(op)
    assert out.depth[24, 32] == pytest.approx(5.0 * op)


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_splat_conservation(backend):
    cloud = _iso([[0.2, -0.1, 4.0]], 0.3, [0.8], [[0.3, 0.6, 0.1]])
    out = rasterize(cloud, _cam(), backend=backend)
    rgb = project_cloud(cloud, _cam()).colors[0]
    for c in range(3):
        np.testing.assert_array_equal(out.image[c], rgb[c] * out.alpha)


@pytest.mark.parametrize("backend", BACKENDS)
def test_two_coincident_splats(backend):
    cam = Camera(60.0, 60.0, 32.5, 24.5, 65, 49, np.eye(4))
    c1, c2 = np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])
    cloud = _iso([[0, 0, 5.0], [0, 0, 5.000001]], 0.2, [0.5, 0.5], [c1, c2])
    out = rasterize(cloud, cam, backend=backend)
    np.testing.assert_allclose(out.image[:, 24, 32], 0.5 * c1 + 0.25 * c2, atol=1e-7)
    assert out.alpha[24, 32] == pytest.approx(0.75, abs=1e-7)


@pytest.mark.parametrize("backend", BACKENDS)
def test_matches_brute_force(backend, rng):
    cam = _cam()
    for _ in range(5):
        cloud = random_scene(rng, 200, cam)
        got = rasterize(cloud, cam, backend=backend)
        img, alpha, depth = _oracle(cloud, cam)
        assert np.abs(got.image - img).max() <= 1e-5
        assert np.abs(got.alpha - alpha).max() <= 1e-5
        assert np.abs(got.depth - depth).max() <= 1e-5


def test_tiling_invariance(rng):
    cam = _cam(70, 45)
    cloud = random_scene(rng, 300, _cam(70, 45))
    ref = rasterize(cloud, cam, tile=TILE)
    for t in (4, 7, 32, 128):
        other = rasterize(cloud, cam, tile=t)
        np.testing.assert_allclose(other.image, ref.image, atol=1e-12, rtol=0)


def test_backends_agree(rng):
    cam = _cam()
    cloud = random_scene(rng, 400)
    a = rasterize(cloud, cam, backend="numba")
    b = rasterize(cloud, cam, backend="numpy")
    np.testing.assert_allclose(a.image, b.image, atol=1e-12, rtol=0)
    np.testing.assert_allclose(a.depth, b.depth, atol=1e-10, rtol=0)


def test_permutation_invariance(rng):
    cam = _cam()
    cloud = random_scene(rng, 150)
    p = rng.permutation(150)
    a = rasterize(cloud, cam)
    b = rasterize(cloud.subset(p), cam)
    np.testing.assert_allclose(a.image, b.image, atol=1e-6)
    np.testing.assert_allclose(a.alpha, b.alpha, atol=1e-6)


def test_alpha_monotone_in_opacity(rng):
    cam = _cam()
    cloud = random_scene(rng, 80)
    base = rasterize(cloud, cam).alpha
    for i in rng.choice(80, 5, replace=False):
        c2 = cloud.subset(np.arange(80))
        c2.opacities = c2.opacities.copy()
        c2.opacities[i] = min(0.999, c2.opacities[i] * 1.5)
        assert np.all(rasterize(c2, cam).alpha >= base - 1e-12)


def test_output_contracts(rng):
    out = rasterize(random_scene(rng, 300), _cam())
    out.validate()
    assert out.image.shape == (3, 48, 64)
    assert np.all(out.image <= out.alpha[None] + 1e-12)
    assert np.all(out.depth[out.alpha == 0] == 0)


def test_empty_cloud_renders_zero():
    out = rasterize(GaussianCloud.empty(), _cam())
    assert not out.image.any() and not out.alpha.any() and not out.depth.any()


def test_render_size_override(rng):
    out = rasterize(random_scene(rng, 20), _cam(), width=32, height=24)
    assert out.alpha.shape == (24, 32)
    with pytest.raises(ValueError):
        rasterize(GaussianCloud.empty(), _cam(), width=0, height=3)


def test_near_plane_side_gaussian_stays_local():
    # a large Gaussian just in front of the camera and far off to the side must
    # not smear across the whole frame
    cam = _cam()
    out = rasterize(_iso([[3.0, 0.0, 0.05]], 0.3, [0.9], [[1, 1, 1]]), cam)
    assert out.alpha.mean() < 0.5
