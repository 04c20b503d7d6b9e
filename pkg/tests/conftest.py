import math

import numpy as np
import pytest

from cylsplat.geometry import CylinderSpec, make_camera


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_cyl():
    """Radius 5, height 4 cylinder centred at the origin."""
    return CylinderSpec(np.zeros(3), 5.0, 4.0, 16, 64)


@pytest.fixture
def front_cam():
    return make_camera(0.0, np.zeros(3), math.radians(90.0), 64, 48)


def pytest_terminal_summary(terminalreporter):
    from _acceptance import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
