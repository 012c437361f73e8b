# Build the agent's top-down occupancy map from depth alone.
#
# Each sensing step turns the depth image into a 3D point cloud, keeps the
# points inside a height band as obstacles, carves the freed space along the
# rays, and merges the local patch into the growing global map
# (Obstacle > Free > Unknown, obstacles sticky).

import os

from hypernav import (CameraIntrinsics, Pose, SceneParams, generate_scene,
                      grid_to_pgm, merge_patch, random_start_pose, render_views,
                      step_action)
from hypernav.mapping import (OccupancyGrid, depth_to_points, no_return_endpoints,
                              points_to_local_patch)
from hypernav.world import Action

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

scene = generate_scene(seed=7, params=SceneParams(resolution=0.15))
intr = CameraIntrinsics.from_hfov(160, 120, 79.0, 5.0, 0.8)
pose = random_start_pose(scene, seed=11)
clip = (0.2, 1.2)

# ## One in-place 360-degree scan (12 turns of 30 degrees)

grid = OccupancyGrid.empty(scene.resolution)
for step in range(12):
    depth, _ = render_views(scene, pose, intr)
    points = depth_to_points(depth, intr, pose)
    misses = no_return_endpoints(depth, intr, pose)
    patch = points_to_local_patch(points, clip, scene.resolution,
                                  (pose.x, pose.y), misses)
    grid = merge_patch(grid, patch)
    print(f"turn {step:2d}: {points.shape[0]:6d} points, "
          f"map {grid.width}x{grid.height}, explored {grid.explored_count()}")
    pose, _ = step_action(scene, pose, Action.TURN_LEFT)

# ## Wander a few steps and watch the map grow monotonically

for step in range(10):
    pose, collided = step_action(scene, pose, Action.FORWARD)
    if collided:   # reactive wander: swing away from the wall
        pose, _ = step_action(scene, pose, Action.TURN_LEFT)
        pose, _ = step_action(scene, pose, Action.TURN_LEFT)
    depth, _ = render_views(scene, pose, intr)
    points = depth_to_points(depth, intr, pose)
    misses = no_return_endpoints(depth, intr, pose)
    before = grid.explored_count()
    grid = merge_patch(grid, points_to_local_patch(
        points, clip, scene.resolution, (pose.x, pose.y), misses))
    print(f"step {step}: collided={collided} "
          f"explored {before} -> {grid.explored_count()}")

path = os.path.join(OUT, "map.pgm")
with open(path, "wb") as fh:
    fh.write(grid_to_pgm(grid))
print("wrote", path, "(unknown=128, free=255, obstacle=0)")
