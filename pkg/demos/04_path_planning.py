# A* over the inflated map, periodic replanning, and the discrete follower.

import math

import numpy as np

from hypernav import GoalRegion, astar, follow_step, inflate_obstacles, nearest_free
from hypernav.mapping import FREE, OBSTACLE, OccupancyGrid
from hypernav.planner import needs_replan
from hypernav.world import Action, Pose

rng = np.random.default_rng(3)

# ## A random obstacle field

cells = np.where(rng.random((48, 48)) < 0.06, OBSTACLE, FREE).astype(np.uint8)
cells[2:6, 2:6] = FREE
cells[42:46, 42:46] = FREE
grid = OccupancyGrid(resolution=0.15, origin_row=0, origin_col=0, cells=cells)

# ## Inflate obstacles by the robot radius, relocate blocked endpoints

costmap = inflate_obstacles(grid, radius_cells=1)
print(f"obstacles {int((cells == OBSTACLE).sum())} cells -> "
      f"blocked {int(costmap.blocked.sum())} after inflation")
start = nearest_free(costmap, (4, 4))
goal = nearest_free(costmap, (44, 44))
print("start:", start, "goal:", goal)

plan = astar(costmap, start, GoalRegion(cells=frozenset({goal}), source="global"))
if plan is None:
    print("this seed sealed the map; try another")
    raise SystemExit
straight = sum(1 for a, b in zip(plan.cells, plan.cells[1:])
               if a[0] == b[0] or a[1] == b[1])
print(f"plan: {len(plan.cells)} cells, {straight} straight + "
      f"{len(plan.cells) - 1 - straight} diagonal steps, cost {plan.cost:.2f}")

# ## Replanning triggers: cadence and newly blocked waypoints

print("fresh plan needs replan at step 9:", needs_replan(plan, 9, costmap))
print("fresh plan needs replan at step 10:", needs_replan(plan, 10, costmap))
mid = plan.cells[len(plan.cells) // 2]
blocked = costmap.blocked.copy()
blocked[mid[0] - costmap.origin_row, mid[1] - costmap.origin_col] = True
poked = type(costmap)(costmap.resolution, costmap.origin_row,
                      costmap.origin_col, blocked)
print("after poking a waypoint cell   :", needs_replan(plan, 3, poked))

# ## The follower: turn toward the waypoint, stride when aligned

pose = Pose(*costmap.cell_center(*start), 0.0)
actions = []
for _ in range(300):
    action = follow_step(pose, plan, turn_threshold_deg=15.0,
                         waypoint_radius=0.25)
    if action is Action.STOP:
        break
    actions.append(action.value)
    if action is Action.FORWARD:
        pose = Pose(pose.x + 0.5 * math.cos(pose.theta),
                    pose.y + 0.5 * math.sin(pose.theta), pose.theta)
    elif action is Action.TURN_LEFT:
        pose = Pose(pose.x, pose.y, pose.theta + math.pi / 6)
    else:
        pose = Pose(pose.x, pose.y, pose.theta - math.pi / 6)
gx, gy = costmap.cell_center(*goal)
print(f"follower: {len(actions)} actions "
      f"({actions.count('Forward')} forward), "
      f"final distance to goal {math.hypot(pose.x - gx, pose.y - gy):.2f} m")
