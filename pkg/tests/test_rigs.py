import math
from pathlib import Path

import numpy as np
import pytest

from cylsplat.featureplane import hflip
from cylsplat.geometry import cameras_from_config, cameras_to_config, wrap_angle
from cylsplat.rigs import (ARGOVERSE_RHO_O_ALT, PRESET_NAMES, RING_HEIGHT, RING_RADIUS,
                           complete_waymo, coverage_gaps, golden_table, rig_preset, uccm_preset,
                           virtual_side_views)

GOLDEN = Path(__file__).parent / "golden" / "rigs.json"


def test_golden_table_bytes():
    assert golden_table().encode() == GOLDEN.read_bytes()


def test_nuscenes_rig():
    rig = rig_preset("nuscenes")
    assert len(rig) == 6 and rig.coverage == "=360"
    fovs = [round(math.degrees(c.horizontal_fov), 9) for c in rig.cameras]
    assert fovs == [70, 70, 70, 110, 70, 70]
    assert coverage_gaps(rig.cameras) == 0.0


def test_waymo_rig():
    rig = rig_preset("waymo")
    assert len(rig) == 5 and rig.hfov_deg == (50,) * 5
    seen = 360.0 - coverage_gaps(rig.cameras)
    assert seen > 180.0


def test_argoverse_rig():
    rig = rig_preset("argoverse")
    assert len(rig) == 7
    np.testing.assert_allclose([math.degrees(c.horizontal_fov) for c in rig.cameras], 69.0)


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_ring_geometry(name):
    for cam in rig_preset(name).cameras:
        assert math.hypot(*cam.position[:2]) == pytest.approx(RING_RADIUS)
        assert cam.position[2] == RING_HEIGHT
        assert 0 < cam.vertical_fov < math.pi
        assert np.linalg.det(cam.rotation) == pytest.approx(1.0)


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_cameras_listed_clockwise(name):
    az = [c.azimuth for c in rig_preset(name).cameras]
    steps = [wrap_angle(b - a) for a, b in zip(az, az[1:])]
    assert all(s < 0 for s in steps)


def test_uccm_rows():
    assert uccm_preset("nuscenes").as_tuple() == (0.90, 0.00, 0.98, 0.40, 0.98, 0.40)
    assert uccm_preset("pandaset").as_tuple() == (2.00, 0.00, 1.60, 0.00, 1.60, 0.00)
    assert uccm_preset("waymo").as_tuple() == (1.20, 0.00, 0.98, 0.40, 0.98, 0.40)


def test_argoverse_alternative():
    assert uccm_preset("argoverse").rho_o == 0.09
    assert uccm_preset("argoverse", argoverse_alt=True).rho_o == ARGOVERSE_RHO_O_ALT


def test_uccm_stage_params():
    p = uccm_preset("nuscenes")
    assert (p.stage("occ").rho, p.stage("vol").delta_h, p.stage("pix").rho) == (0.9, 0.4, 0.98)


def test_unknown_names():
    with pytest.raises(KeyError):
        rig_preset("kitti")
    with pytest.raises(KeyError):
        uccm_preset("kitti")


def test_waymo_completion():
    rig = rig_preset("waymo")
    rig8, _ = complete_waymo(rig)
    assert len(rig8) == 8
    assert coverage_gaps(rig8.cameras) == 0.0
    max_fov = max(c.horizontal_fov for c in rig8.cameras)
    az = sorted(c.azimuth for c in rig8.cameras)
    gaps = np.diff(az + [az[0] + 2 * math.pi])
    assert gaps.max() < max_fov
    for c in rig8.cameras + rig8.aux:
        R = c.rotation
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0)
    assert sum(c.flipped for c in rig8.cameras) == 3


def test_waymo_completion_deterministic():
    a, _ = complete_waymo(rig_preset("waymo"))
    b, _ = complete_waymo(rig_preset("waymo"))
    for x, y in zip(a.cameras, b.cameras):
        np.testing.assert_array_equal(x.extrinsics, y.extrinsics)


def test_virtual_images_are_flips(rng):
    rig = rig_preset("waymo")
    imgs = [rng.uniform(0, 1, (3, 8, 12)) for _ in rig.cameras]
    rig8, imgs8 = complete_waymo(rig, imgs)
    by_name = {c.name: i for i, c in enumerate(rig.cameras)}
    for cam, img in zip(rig8.cameras, imgs8):
        src = imgs[by_name[cam.name.replace("_mirror", "")]]
        np.testing.assert_array_equal(img, hflip(src) if cam.flipped else src)
    side = virtual_side_views(rig, imgs)
    np.testing.assert_array_equal(side[0], imgs[by_name["side_right"]][..., ::-1])


def test_completion_rejects_other_rigs():
    with pytest.raises(ValueError):
        complete_waymo(rig_preset("nuscenes"))


def test_preset_export_round_trip():
    cams = rig_preset("once").cameras
    back = cameras_from_config(cameras_to_config(cams))
    assert [c.name for c in back] == [c.name for c in cams]
