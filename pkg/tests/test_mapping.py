import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_box_scene
from hypernav.errors import ConfigError
from hypernav.mapping import (FREE, OBSTACLE, UNKNOWN, OccupancyGrid,
                              depth_to_points, grid_to_pgm, merge_patch,
                              no_return_endpoints, points_to_local_patch)
from hypernav.world import CameraIntrinsics, Pose, render_views
from oracles import backproject_pixel


@pytest.fixture
def small_intr():
    return CameraIntrinsics.from_hfov(64, 48, 79.0, 5.0, 0.8)


def test_all_zero_depth_gives_no_points(small_intr):
    depth = np.zeros((48, 64))
    pts = depth_to_points(depth, small_intr, Pose(0, 0, 0))
    assert pts.shape == (0, 3)


def test_principal_pixel_back_projection(small_intr):
    depth = np.zeros((48, 64))
    depth[int(small_intr.cy), int(small_intr.cx)] = 2.0
    pts = depth_to_points(depth, small_intr, Pose(0, 0, 0))
    assert pts.shape == (1, 3)
    assert pts[0] == pytest.approx([2.0, 0.0, 0.8], abs=1e-12)


def test_back_projection_matches_independent_transform(small_intr):
    rng = np.random.default_rng(42)
    for _ in range(20):
        u = int(rng.integers(0, small_intr.width))
        v = int(rng.integers(0, small_intr.height))
        d = float(rng.uniform(0.3, 4.5))
        pose = Pose(float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3)),
                    float(rng.uniform(0, 2 * math.pi)))
        depth = np.zeros((small_intr.height, small_intr.width))
        depth[v, u] = d
        pts = depth_to_points(depth, small_intr, pose)
        expected = backproject_pixel(u, v, d, small_intr.fx, small_intr.fy,
                                     small_intr.cx, small_intr.cy,
                                     pose.x, pose.y, pose.theta,
                                     small_intr.mount_height)
        ex = np.array(expected)
        ex[2] = max(ex[2], 0.0)
        assert pts[0] == pytest.approx(ex, abs=1e-9)


def test_rotated_pose_side_pixel():
    # pixel at u = cx + fx (45 deg right of axis), pose facing +y:
    # camera right axis is +x, so the ray points into the x=y diagonal
    intr = CameraIntrinsics(fx=20.0, fy=20.0, cx=32.0, cy=24.0, width=64,
                            height=48, max_range=5.0, mount_height=0.8)
    u = int(intr.cx + intr.fx)
    depth = np.zeros((intr.height, intr.width))
    d = 2.0
    depth[int(intr.cy), u] = d
    pts = depth_to_points(depth, intr, Pose(0, 0, math.pi / 2))
    expected = (d / math.sqrt(2), d / math.sqrt(2), 0.8)
    assert pts[0] == pytest.approx(expected, abs=1e-9)


# ---------------------------------------------------------------------------
# local patches

def test_point_below_clip_not_obstacle():
    pts = np.array([[1.0, 0.525, 0.1]])
    patch = points_to_local_patch(pts, (0.2, 1.2), 0.05, (0.025, 0.525))
    assert not (patch.cells == OBSTACLE).any()
    assert patch.get(10, 19) == FREE   # ray cells carved free up to the return


def test_wall_column_marks_obstacles_with_free_between(small_intr):
    scene = make_box_scene(128, 128)
    scene_wall = scene.wall.copy()
    scene_wall.setflags(write=True)
    scene_wall[:, 60] = 4.0   # wall front face at x = 3.0
    from hypernav.world import Scene
    scene = Scene(0.05, scene_wall, name="wall")
    pose = Pose(1.0, 3.2, 0.0)
    depth, _ = render_views(scene, pose, small_intr)
    pts = depth_to_points(depth, small_intr, pose)
    misses = no_return_endpoints(depth, small_intr, pose)
    patch = points_to_local_patch(pts, (0.2, 1.2), 0.05, (pose.x, pose.y), misses)
    obstacle_cols = set(np.nonzero(patch.cells == OBSTACLE)[1] + patch.origin_col)
    assert obstacle_cols == {60}
    row = 64 - patch.origin_row
    cols = slice(21 - patch.origin_col, 59 - patch.origin_col)
    assert (patch.cells[row, cols] == FREE).all()


def test_empty_points_with_max_range_rays_carve_free_wedge(small_intr):
    depth = np.zeros((small_intr.height, small_intr.width))
    pose = Pose(2.0, 2.0, 0.0)
    misses = no_return_endpoints(depth, small_intr, pose)
    pts = depth_to_points(depth, small_intr, pose)
    patch = points_to_local_patch(pts, (0.2, 1.2), 0.05, (pose.x, pose.y), misses)
    free_count = int((patch.cells == FREE).sum())
    assert free_count > 500
    assert not (patch.cells == OBSTACLE).any()
    # a cell straight ahead within range is free
    assert patch.get(40, 60) == FREE


def test_patch_requires_valid_clip():
    with pytest.raises(ConfigError):
        points_to_local_patch(np.zeros((0, 3)), (1.2, 0.2), 0.05, (0, 0))


# ---------------------------------------------------------------------------
# merges

def _patch_from(cells, origin=(0, 0), res=0.05):
    return OccupancyGrid(res, origin[0], origin[1], np.array(cells, dtype=np.uint8))


def test_merge_into_empty_equals_patch():
    patch = _patch_from([[FREE, OBSTACLE], [UNKNOWN, FREE]])
    merged = merge_patch(OccupancyGrid.empty(0.05), patch)
    assert merged.get(0, 0) == FREE
    assert merged.get(0, 1) == OBSTACLE
    assert merged.get(1, 0) == UNKNOWN
    assert merged.get(1, 1) == FREE


def test_merge_priority_obstacle_wins():
    base = merge_patch(OccupancyGrid.empty(0.05), _patch_from([[FREE]]))
    merged = merge_patch(base, _patch_from([[OBSTACLE]]))
    assert merged.get(0, 0) == OBSTACLE
    # and free never downgrades obstacle
    again = merge_patch(merged, _patch_from([[FREE]]))
    assert again.get(0, 0) == OBSTACLE


def test_merge_idempotent():
    patch = _patch_from([[FREE, OBSTACLE, UNKNOWN]])
    once = merge_patch(OccupancyGrid.empty(0.05), patch)
    twice = merge_patch(once, patch)
    assert (once.cells == twice.cells).all()
    assert once.lattice_bounds() == twice.lattice_bounds()


def test_merge_resolution_mismatch():
    with pytest.raises(ConfigError):
        merge_patch(OccupancyGrid.empty(0.05), _patch_from([[FREE]], res=0.1))


def test_merge_growth_keeps_lattice_alignment():
    g = merge_patch(OccupancyGrid.empty(0.05), _patch_from([[FREE]], origin=(3, 3)))
    assert g.origin_row % 64 == 0 and g.origin_col % 64 == 0
    g2 = merge_patch(g, _patch_from([[OBSTACLE]], origin=(-5, 130)))
    assert g2.origin_row % 64 == 0 and g2.origin_col % 64 == 0
    assert g2.get(3, 3) == FREE        # original observation kept in place
    assert g2.get(-5, 130) == OBSTACLE


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_merge_monotone_never_unexplores(seed):
    rng = np.random.default_rng(seed)
    g = OccupancyGrid.empty(0.05)
    explored_before = 0
    obstacles: set = set()
    for _ in range(4):
        h, w = int(rng.integers(1, 12)), int(rng.integers(1, 12))
        origin = (int(rng.integers(-20, 20)), int(rng.integers(-20, 20)))
        cells = rng.integers(0, 3, size=(h, w)).astype(np.uint8)
        g = merge_patch(g, OccupancyGrid(0.05, origin[0], origin[1], cells))
        explored_now = g.explored_count()
        assert explored_now >= explored_before
        explored_before = explored_now
        for r, c in obstacles:
            assert g.get(r, c) == OBSTACLE
        rows, cols = np.nonzero(g.cells == OBSTACLE)
        obstacles = {(int(r) + g.origin_row, int(c) + g.origin_col)
                     for r, c in zip(rows, cols)}


def test_pgm_export_shades():
    g = merge_patch(OccupancyGrid.empty(0.05),
                    _patch_from([[UNKNOWN, FREE, OBSTACLE]]))
    data = grid_to_pgm(g)
    assert data.startswith(b"P5\n64 64\n255\n")
    body = data.split(b"\n", 3)[3]
    assert set(body) <= {0, 128, 255}
    assert {0, 128, 255} <= set(body)
