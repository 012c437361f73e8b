import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hypernav.config import Config
from hypernav.world import CameraIntrinsics, ObjectInstance, Scene

DATA_DIR = Path(__file__).parent / "data"

# small sensor profile so full episodes stay fast; same FOV/range as defaults
TEST_SENSOR = dict(sensor_width=96, sensor_height=72)

# navigation-scale profile: 64x64 cells at 0.15 m/cell is a 9.6 m world whose
# door widths and room sizes are proportionate to the fixed 0.5 m stride
NAV_SCALE = dict(resolution=0.15, block_size=12, **TEST_SENSOR)


def make_box_scene(width=64, height=64, resolution=0.05, wall_height=4.0,
                   objects=(), name="box"):
    wall = np.zeros((height, width))
    wall[0, :] = wall_height
    wall[-1, :] = wall_height
    wall[:, 0] = wall_height
    wall[:, -1] = wall_height
    return Scene(resolution=resolution, wall_height=wall, objects=objects, name=name)


def rect_object(obj_id, category, r0, c0, h, w, top_height):
    cells = frozenset((r0 + a, c0 + b) for a in range(h) for b in range(w))
    return ObjectInstance(id=obj_id, category=category, cells=cells, top_height=top_height)


@pytest.fixture
def box_scene():
    return make_box_scene()


@pytest.fixture
def test_config():
    return Config(**TEST_SENSOR)


@pytest.fixture
def nav_config():
    return Config(**NAV_SCALE)


@pytest.fixture
def intrinsics(test_config):
    return CameraIntrinsics.from_hfov(
        test_config.sensor_width, test_config.sensor_height,
        test_config.sensor_hfov_deg, test_config.sensor_max_range,
        test_config.sensor_mount_height)
