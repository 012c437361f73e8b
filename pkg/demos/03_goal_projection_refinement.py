# Goal projection refinement: why the mask is eroded and the projected
# region dilated.
#
# A lamp sits inside a ring of night-stand walls. Its projected map cell is
# walled in, so planning straight at it fails; dilating the goal region past
# the enclosing obstacles gives the planner a reachable target. This is the
# classic "target surrounded" failure and its fix.

import math
import os

import numpy as np

from hypernav import (CameraIntrinsics, Pose, Scene, detect_goal, dilate_goal,
                      inflate_obstacles, merge_patch, project_goal, refine_mask)
from hypernav.mapping import (OccupancyGrid, depth_to_points, no_return_endpoints,
                              points_to_local_patch)
from hypernav.perception import DetectorParams
from hypernav.planner import astar
from hypernav.world import Action, ObjectInstance, render_views, step_action

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

# ## The scripted scene: lamp at the center of a two-cell ring

size, lr, lc = 96, 48, 48
wall = np.zeros((size, size))
wall[0, :] = wall[-1, :] = 4.0
wall[:, 0] = wall[:, -1] = 4.0
for d in (5, 6):
    for k in range(-d, d + 1):
        for rr, cc in ((lr - d, lc + k), (lr + d, lc + k),
                       (lr + k, lc - d), (lr + k, lc + d)):
            wall[rr, cc] = 0.25
lamp = ObjectInstance(id=1, category="lamp",
                      cells=frozenset({(lr, lc)}), top_height=0.15)
scene = Scene(0.05, wall, objects=(lamp,), name="lamp-ring")
intr = CameraIntrinsics.from_hfov(160, 120, 79.0, 5.0, 0.8)

# ## Map the ring from four vantage points

grid = OccupancyGrid.empty(scene.resolution)
for dr, dc in ((0, 13), (0, -13), (13, 0), (-13, 0)):
    pose = Pose(*scene.cell_center(lr + dr, lc + dc), 0.0)
    for _ in range(12):
        depth, _ = render_views(scene, pose, intr)
        pts = depth_to_points(depth, intr, pose)
        misses = no_return_endpoints(depth, intr, pose)
        grid = merge_patch(grid, points_to_local_patch(
            pts, (0.2, 1.2), scene.resolution, (pose.x, pose.y), misses))
        pose, _ = step_action(scene, pose, Action.TURN_LEFT)
print(f"ring mapped: {int((grid.cells == 2).sum())} obstacle cells")

# ## Detect the lamp over the ring and project it

pose = Pose(*scene.cell_center(lr, lc + 24), math.pi)
depth, semantic = render_views(scene, pose, intr)
det = detect_goal(semantic, depth, "lamp", scene, DetectorParams(), pose, intr)
print(f"detection: {det.mask.sum()} pixels, confidence {det.confidence:.2f}")
refined = refine_mask(det)
print(f"after erosion: {refined.mask.sum()} pixels (boundary dropped)")
region = project_goal(refined, depth, intr, pose, grid)
print("projected goal cells:", sorted(region.cells))

# ## Raw region is sealed; the dilated one is plannable

costmap = inflate_obstacles(grid, radius_cells=4)
start = (lr + 20, lc + 20)
raw_plan = astar(costmap, start, region)
print("plan to raw region:", "FAILED (enclosed)" if raw_plan is None else "found")
dilated = dilate_goal(region, grid, kernel_size=5, iterations=3)
print(f"dilated region: {len(region.cells)} -> {len(dilated.cells)} cells")
plan = astar(costmap, start, dilated)
print("plan to dilated region:",
      f"{len(plan.cells)} waypoints, cost {plan.cost:.1f} cells" if plan else "FAILED")
