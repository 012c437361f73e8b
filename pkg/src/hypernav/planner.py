"""A* path planning over the inflated occupancy map, with nearest-free
relocation of endpoints, periodic/blocked replanning, and the discrete
turn-or-forward waypoint follower.

Path costs count straight and diagonal steps separately and evaluate
``n_straight + n_diagonal * sqrt(2)`` as a single expression wherever a cost
is compared, so two optimal searches always agree bit-for-bit on the optimum
(no accumulated float drift from different addition orders).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import PlanningError
from .mapping import OBSTACLE, OccupancyGrid
from .morphology import binary_dilate
from .perception import GoalRegion
from .world import Action, Pose, signed_angle_delta

SQRT2 = math.sqrt(2.0)

_MOVES = ((-1, -1, 1), (-1, 0, 0), (-1, 1, 1), (0, -1, 0),
          (0, 1, 0), (1, -1, 1), (1, 0, 0), (1, 1, 1))


@dataclass
class Costmap:
    resolution: float
    origin_row: int
    origin_col: int
    blocked: np.ndarray   # bool; True = not traversable

    @property
    def height(self) -> int:
        return self.blocked.shape[0]

    @property
    def width(self) -> int:
        return self.blocked.shape[1]

    def is_blocked(self, r: int, c: int) -> bool:
        rr, cc = r - self.origin_row, c - self.origin_col
        if not (0 <= rr < self.height and 0 <= cc < self.width):
            return False   # off-map is unexplored, hence optimistically traversable
        return bool(self.blocked[rr, cc])

    def cell_center(self, r: int, c: int) -> tuple[float, float]:
        return ((c + 0.5) * self.resolution, (r + 0.5) * self.resolution)


def inflate_obstacles(grid: OccupancyGrid, radius_cells: int) -> Costmap:
    """Dilate mapped obstacles by a square kernel of the given half-width.

    Unknown cells stay traversable: plans may aim into unexplored space, and
    newly sensed obstacles trigger replanning instead.
    """
    if radius_cells < 0:
        raise PlanningError("inflation radius must be >= 0")
    obstacle = grid.cells == OBSTACLE
    if radius_cells > 0 and obstacle.any():
        obstacle = binary_dilate(obstacle, kernel_size=2 * radius_cells + 1, iterations=1)
    return Costmap(grid.resolution, grid.origin_row, grid.origin_col, obstacle)


def nearest_free(costmap: Costmap, cell: tuple[int, int]) -> tuple[int, int]:
    """Nearest traversable cell by Euclidean distance, row-major tie-break.

    The input is returned unchanged when already traversable. Raises
    PlanningError when the costmap has no traversable cell at all.
    """
    if not costmap.is_blocked(*cell) and (
            costmap.origin_row <= cell[0] < costmap.origin_row + costmap.height
            and costmap.origin_col <= cell[1] < costmap.origin_col + costmap.width):
        return cell
    free_r, free_c = np.nonzero(~costmap.blocked)
    if free_r.size == 0:
        raise PlanningError("costmap has no traversable cell")
    free_r = free_r + costmap.origin_row
    free_c = free_c + costmap.origin_col
    d2 = (free_r - cell[0]) ** 2 + (free_c - cell[1]) ** 2
    order = np.lexsort((free_c, free_r, d2))
    return (int(free_r[order[0]]), int(free_c[order[0]]))


@dataclass
class PathPlan:
    cells: list                      # lattice (row, col) per waypoint
    waypoints: list                  # (x, y) world meters, cell centers
    created_at_step: int
    target: GoalRegion
    next_index: int = 0

    @property
    def cost(self) -> float:
        straight = diagonal = 0
        for (r0, c0), (r1, c1) in zip(self.cells[:-1], self.cells[1:]):
            if r0 != r1 and c0 != c1:
                diagonal += 1
            else:
                straight += 1
        return straight + diagonal * SQRT2

    def remaining_cells(self):
        return self.cells[self.next_index:]

    def remaining_waypoints(self):
        return self.waypoints[self.next_index:]


def _octile(dr: int, dc: int) -> float:
    dr, dc = abs(dr), abs(dc)
    lo, hi = (dr, dc) if dr < dc else (dc, dr)
    return (hi - lo) + lo * SQRT2


def astar(costmap: Costmap, start: tuple[int, int], target: GoalRegion,
          created_at_step: int = 0) -> PathPlan | None:
    """Optimal 8-connected A* from `start` to the target region.

    The destination is the target cell closest to the start; blocked start or
    destination cells are first relocated to the nearest traversable cell.
    Ties break on (f, h, row-major), making the returned path deterministic.
    Returns None when no path exists.
    """
    try:
        start = nearest_free(costmap, start)
    except PlanningError:
        return None
    dest = min(target.cells,
               key=lambda rc: ((rc[0] - start[0]) ** 2 + (rc[1] - start[1]) ** 2,
                               rc[0], rc[1]))
    try:
        dest = nearest_free(costmap, dest)
    except PlanningError:
        return None

    or_, oc = costmap.origin_row, costmap.origin_col
    h, w = costmap.height, costmap.width
    sr, sc = start[0] - or_, start[1] - oc
    dr_, dc_ = dest[0] - or_, dest[1] - oc
    if not (0 <= sr < h and 0 <= sc < w and 0 <= dr_ < h and 0 <= dc_ < w):
        return None
    blocked = costmap.blocked

    def make_plan(cells):
        world = [costmap.cell_center(r, c) for r, c in cells]
        return PathPlan(cells=cells, waypoints=world,
                        created_at_step=created_at_step, target=target)

    if (sr, sc) == (dr_, dc_):
        return make_plan([start])

    # g-cost as (straight, diagonal) step counts; scalar value recomputed
    # from the counts at every use so equal counts compare exactly equal
    g_straight = np.full((h, w), -1, dtype=np.int32)
    g_diag = np.zeros((h, w), dtype=np.int32)
    parent = np.full((h, w), -1, dtype=np.int64)
    g_straight[sr, sc] = 0
    h0 = _octile(dr_ - sr, dc_ - sc)
    heap = [(h0, h0, sr, sc, 0, 0)]
    while heap:
        f, hh, r, c, gs, gd = heapq.heappop(heap)
        if (gs, gd) != (int(g_straight[r, c]), int(g_diag[r, c])):
            continue   # superseded by a cheaper path
        if (r, c) == (dr_, dc_):
            cells = []
            node = r * w + c
            while node >= 0:
                cells.append((node // w + or_, node % w + oc))
                node = int(parent[node // w, node % w])
            cells.reverse()
            return make_plan(cells)
        for dr, dc, diag in _MOVES:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h and 0 <= nc < w) or blocked[nr, nc]:
                continue
            ns, nd = gs + (1 - diag), gd + diag
            ng = ns + nd * SQRT2
            old = (g_straight[nr, nc] + g_diag[nr, nc] * SQRT2
                   if g_straight[nr, nc] >= 0 else math.inf)
            if ng < old:
                g_straight[nr, nc] = ns
                g_diag[nr, nc] = nd
                parent[nr, nc] = r * w + c
                nh = _octile(dr_ - nr, dc_ - nc)
                heapq.heappush(heap, (ng + nh, nh, nr, nc, ns, nd))
    return None


def needs_replan(plan: PathPlan, current_step: int, costmap: Costmap,
                 interval: int = 10) -> bool:
    """Replan on cadence or when any remaining waypoint got blocked."""
    if current_step - plan.created_at_step >= interval:
        return True
    return any(costmap.is_blocked(r, c) for r, c in plan.remaining_cells())


def follow_step(pose: Pose, plan: PathPlan, turn_threshold_deg: float = 15.0,
                waypoint_radius: float = 0.25, forward_step: float = 0.5) -> Action:
    """One discrete follower decision toward the next pending waypoint.

    Advance rule: waypoints within `waypoint_radius` of the pose are
    consumed, and a pending waypoint within one stride is also consumed when
    its successor is already closer (a forward stride overshoots several
    cell-sized waypoints, which must not pull the robot backwards). With no
    waypoint left the follower reports Stop. Otherwise turn toward the
    waypoint bearing when the signed error exceeds the threshold, else drive
    forward.
    """
    n = len(plan.waypoints)
    while plan.next_index < n:
        wx, wy = plan.waypoints[plan.next_index]
        d = math.hypot(wx - pose.x, wy - pose.y)
        if d <= waypoint_radius:
            plan.next_index += 1
            continue
        if d <= forward_step and plan.next_index + 1 < n:
            nx, ny = plan.waypoints[plan.next_index + 1]
            if math.hypot(nx - pose.x, ny - pose.y) < d:
                plan.next_index += 1
                continue
        break
    if plan.next_index >= n:
        return Action.STOP
    wx, wy = plan.waypoints[plan.next_index]
    bearing = math.atan2(wy - pose.y, wx - pose.x)
    alpha = signed_angle_delta(bearing, pose.theta)
    # tiny slack so an error of exactly the threshold drives forward even
    # when the bearing lands an ulp past it
    threshold = math.radians(turn_threshold_deg) + 1e-9
    if alpha > threshold:
        return Action.TURN_LEFT
    if alpha < -threshold:
        return Action.TURN_RIGHT
    return Action.FORWARD
