"""Ground-truth world model: procedural indoor scenes, a disc robot with
discrete actions, and a raycast depth/semantic camera.

Frames and conventions
----------------------
World frame: x right, y up in the top-down view, z vertical. Heading theta is
radians counterclockwise from +x, normalized to [0, 2pi). Cell (row, col)
covers x in [col*res, (col+1)*res) and y in [row*res, (row+1)*res), so scene
cell indices coincide with the world lattice used by the mapping layer.

The camera looks along the robot heading from ``mount_height`` with zero
pitch/roll. Camera axes: z forward, x right, y down; a pixel (u, v) casts the
ray ((u-cx)/fx, (v-cy)/fy, 1) in camera coordinates. Depth is Euclidean
distance along the ray to the first hit, not the z-coordinate.

The world is 2.5D: every occupied cell is a vertical column from the floor to
its height. Rays hit the front face of a column when their z at the face
crossing is at or below the column height; a ray descending onto a column top
registers on the next face instead, a one-cell approximation. Rays that reach
the floor plane return the floor (semantic 0), which keeps free-space carving
from punching through walls that only tall rays cross.
"""

from __future__ import annotations

import enum
import json
import math
import random
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NoPathError, SceneGenerationError
from .morphology import binary_dilate

TWO_PI = 2.0 * math.pi
FORWARD_STEP = 0.5          # meters per Forward action
TURN_STEP = math.pi / 6.0   # 30 degrees per turn action
WALL_ID = -1                # semantic sentinel for wall hits
FLOOR_ID = 0                # semantic background / floor

SQRT2 = math.sqrt(2.0)


def normalize_angle(theta: float) -> float:
    """Wrap to [0, 2pi), snapping the residue of full turns back to zero."""
    theta = theta % TWO_PI
    if theta < 1e-12 or TWO_PI - theta < 1e-12:
        return 0.0
    return theta


def signed_angle_delta(target: float, source: float) -> float:
    """Smallest signed rotation from `source` to `target`, in (-pi, pi]."""
    d = (target - source) % TWO_PI
    if d > math.pi:
        d -= TWO_PI
    return d


class Action(enum.Enum):
    FORWARD = "Forward"
    TURN_LEFT = "TurnLeft"
    TURN_RIGHT = "TurnRight"
    STOP = "Stop"


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    max_range: float
    mount_height: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError("focal lengths must be positive")
        if not (0 < self.cx < self.width) or not (0 < self.cy < self.height):
            raise ConfigError("principal point must lie inside the image")
        if self.max_range <= 0 or self.mount_height <= 0:
            raise ConfigError("max_range and mount_height must be positive")

    @staticmethod
    def from_hfov(width: int, height: int, hfov_deg: float,
                  max_range: float, mount_height: float) -> "CameraIntrinsics":
        fx = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        return CameraIntrinsics(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0,
                                width=width, height=height,
                                max_range=max_range, mount_height=mount_height)


@dataclass(frozen=True)
class ObjectInstance:
    id: int
    category: str
    cells: frozenset
    top_height: float

    def __post_init__(self):
        if not self.cells:
            raise ConfigError(f"object {self.id} has an empty footprint")
        if self.id <= 0:
            raise ConfigError("object ids must be positive integers")
        if self.top_height <= 0:
            raise ConfigError("object top_height must be positive")
        if not _is_4_connected(self.cells):
            raise ConfigError(f"object {self.id} footprint is not 4-connected")

    def footprint_bbox(self) -> tuple[int, int, int, int]:
        rows = [rc[0] for rc in self.cells]
        cols = [rc[1] for rc in self.cells]
        return (min(rows), min(cols), max(rows), max(cols))


def _is_4_connected(cells) -> bool:
    cells = set(cells)
    seen = {next(iter(sorted(cells)))}
    stack = list(seen)
    while stack:
        r, c = stack.pop()
        for nb in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if nb in cells and nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(cells)


class Scene:
    """Immutable ground-truth 2.5D world: wall heights plus object instances."""

    def __init__(self, resolution: float, wall_height: np.ndarray,
                 objects=(), name: str = "scene"):
        if resolution <= 0:
            raise ConfigError("resolution must be positive")
        self.resolution = float(resolution)
        self.name = name
        wall = np.asarray(wall_height, dtype=np.float64)
        if wall.ndim != 2:
            raise ConfigError("wall_height must be a 2D array")
        self.wall = wall
        self.objects = tuple(objects)
        self._build_derived()
        self._validate()

    def _build_derived(self) -> None:
        h, w = self.wall.shape
        self.surface = self.wall.copy()
        self.cell_id = np.zeros((h, w), dtype=np.int32)
        self.cell_id[self.wall > 0] = WALL_ID
        for obj in self.objects:
            for r, c in obj.cells:
                self.surface[r, c] = max(self.surface[r, c], obj.top_height)
                self.cell_id[r, c] = obj.id
        self.blocked = self.surface > 0
        for arr in (self.wall, self.surface, self.cell_id, self.blocked):
            arr.setflags(write=False)

    def _validate(self) -> None:
        h, w = self.wall.shape
        if not (self.wall[0, :] > 0).all() or not (self.wall[-1, :] > 0).all() \
                or not (self.wall[:, 0] > 0).all() or not (self.wall[:, -1] > 0).all():
            raise ConfigError("scene boundary must be walls")
        ids = [o.id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise ConfigError("object ids must be unique")
        for obj in self.objects:
            for r, c in obj.cells:
                if not (0 <= r < h and 0 <= c < w):
                    raise ConfigError(f"object {obj.id} extends outside the scene")
                if self.wall[r, c] > 0:
                    raise ConfigError(f"object {obj.id} overlaps a wall cell")
        if not (~self.blocked).any():
            raise ConfigError("scene has no free space")

    @property
    def height(self) -> int:
        return self.wall.shape[0]

    @property
    def width(self) -> int:
        return self.wall.shape[1]

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor(y / self.resolution)), int(math.floor(x / self.resolution)))

    def cell_center(self, r: int, c: int) -> tuple[float, float]:
        return ((c + 0.5) * self.resolution, (r + 0.5) * self.resolution)

    def in_bounds(self, r: int, c: int) -> bool:
        return 0 <= r < self.height and 0 <= c < self.width

    def objects_of(self, category: str):
        return [o for o in self.objects if o.category == category]


# ---------------------------------------------------------------------------
# kinematics

def disc_hits_blocked(scene: Scene, x: float, y: float, radius: float) -> bool:
    """True if a disc at (x, y) overlaps any wall/object cell or leaves the scene."""
    res = scene.resolution
    r0 = int(math.floor((y - radius) / res))
    r1 = int(math.floor((y + radius) / res))
    c0 = int(math.floor((x - radius) / res))
    c1 = int(math.floor((x + radius) / res))
    if r0 < 0 or c0 < 0 or r1 >= scene.height or c1 >= scene.width:
        return True
    window = scene.blocked[r0:r1 + 1, c0:c1 + 1]
    if not window.any():
        return False
    rows, cols = np.nonzero(window)
    cell_x0 = (cols + c0) * res
    cell_y0 = (rows + r0) * res
    nearest_x = np.clip(x, cell_x0, cell_x0 + res)
    nearest_y = np.clip(y, cell_y0, cell_y0 + res)
    d2 = (nearest_x - x) ** 2 + (nearest_y - y) ** 2
    return bool((d2 <= radius * radius).any())


def is_valid_pose(scene: Scene, pose: Pose, robot_radius: float) -> bool:
    return not disc_hits_blocked(scene, pose.x, pose.y, robot_radius)


def step_action(scene: Scene, pose: Pose, action: Action,
                robot_radius: float = 0.18, forward_step: float = FORWARD_STEP,
                turn_step: float = TURN_STEP) -> tuple[Pose, bool]:
    """Apply one discrete action. Returns (new_pose, collided).

    Forward translates 0.5 m along the heading unless the swept robot disc
    would overlap a wall/object cell, in which case the pose is unchanged and
    the collision flag is set. Turns rotate exactly 30 degrees and never
    collide. The step sizes are parameters so a deployment with different
    atoms can reuse the kinematics.
    """
    if action is Action.STOP:
        return pose, False
    if action is Action.TURN_LEFT:
        return Pose(pose.x, pose.y, pose.theta + turn_step), False
    if action is Action.TURN_RIGHT:
        return Pose(pose.x, pose.y, pose.theta - turn_step), False
    dx = math.cos(pose.theta) * forward_step
    dy = math.sin(pose.theta) * forward_step
    # sample the swept disc every 5 cm; denser than both the grid and the
    # robot radius, so the sweep cannot tunnel through a cell
    n = max(10, int(math.ceil(forward_step / 0.05)))
    for i in range(1, n + 1):
        t = i / n
        if disc_hits_blocked(scene, pose.x + dx * t, pose.y + dy * t, robot_radius):
            return pose, True
    return Pose(pose.x + dx, pose.y + dy, pose.theta), False


# ---------------------------------------------------------------------------
# raycast camera

def pixel_ray_directions(intrinsics: CameraIntrinsics, pose: Pose,
                         window: tuple[int, int, int, int] | None = None) -> np.ndarray:
    """Unit world-frame ray direction per pixel, shape (h*w, 3) row-major.

    `window` = (u0, v0, u1, v1) inclusive restricts to a pixel sub-rectangle.
    """
    if window is None:
        u_range = np.arange(intrinsics.width, dtype=np.float64)
        v_range = np.arange(intrinsics.height, dtype=np.float64)
    else:
        u0, v0, u1, v1 = window
        u_range = np.arange(u0, u1 + 1, dtype=np.float64)
        v_range = np.arange(v0, v1 + 1, dtype=np.float64)
    vv, uu = np.meshgrid(v_range, u_range, indexing="ij")
    camx = (uu - intrinsics.cx) / intrinsics.fx
    camy = (vv - intrinsics.cy) / intrinsics.fy
    st, ct = math.sin(pose.theta), math.cos(pose.theta)
    # world = right*camx + down*camy + forward*camz, camz = 1
    dx = (st * camx + ct).ravel()
    dy = (-ct * camx + st).ravel()
    dz = (-camy).ravel()
    inv = 1.0 / np.sqrt(dx * dx + dy * dy + dz * dz)
    return np.stack([dx * inv, dy * inv, dz * inv], axis=1)


def raycast_grid(height_grid: np.ndarray, id_grid: np.ndarray, resolution: float,
                 pose: Pose, intrinsics: CameraIntrinsics,
                 window: tuple[int, int, int, int] | None = None
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Cast one ray per pixel through a 2.5D column grid.

    Returns (depth, semantic): depth holds Euclidean hit distance in meters,
    clamped to [0, max_range] with 0 meaning no return within range; semantic
    holds the id of the hit column (WALL_ID for walls, object id otherwise)
    and FLOOR_ID for floor hits or no return. A pixel `window` (u0, v0, u1,
    v1, inclusive) restricts the cast to that sub-rectangle.
    """
    if window is None:
        h, w = intrinsics.height, intrinsics.width
    else:
        h = window[3] - window[1] + 1
        w = window[2] - window[0] + 1
    dirs = pixel_ray_directions(intrinsics, pose, window)
    dxs, dys, dzs = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    n = dxs.size
    x0, y0, z0 = pose.x, pose.y, intrinsics.mount_height
    max_range = intrinsics.max_range

    # per-ray cap: floor-plane crossing or max range, whichever is first
    with np.errstate(divide="ignore"):
        t_floor = np.where(dzs < 0, z0 / np.maximum(-dzs, 1e-300), np.inf)
    t_cap = np.minimum(max_range, t_floor)

    depth = np.zeros(n, dtype=np.float64)
    semantic = np.zeros(n, dtype=np.int32)
    resolved = np.zeros(n, dtype=bool)

    grid_h, grid_w = height_grid.shape
    flat_height = np.ascontiguousarray(height_grid, dtype=np.float64).ravel()
    flat_id = np.ascontiguousarray(id_grid, dtype=np.int32).ravel()

    ridx = np.arange(n)
    ix = np.full(n, int(math.floor(x0 / resolution)), dtype=np.int64)
    iy = np.full(n, int(math.floor(y0 / resolution)), dtype=np.int64)
    step_x = np.where(dxs > 0, 1, -1).astype(np.int64)
    step_y = np.where(dys > 0, 1, -1).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        tdx = np.where(dxs != 0, resolution / np.abs(dxs), np.inf)
        tdy = np.where(dys != 0, resolution / np.abs(dys), np.inf)
        tmx = np.where(dxs != 0, ((ix + (dxs > 0)) * resolution - x0) / dxs, np.inf)
        tmy = np.where(dys != 0, ((iy + (dys > 0)) * resolution - y0) / dys, np.inf)
    a_dz = dzs.copy()
    a_cap = t_cap.copy()

    max_iter = 4 * (grid_h + grid_w) + 8
    for _ in range(max_iter):
        if ridx.size == 0:
            break
        take_x = tmx <= tmy
        t = np.where(take_x, tmx, tmy)
        ix = ix + np.where(take_x, step_x, 0)
        iy = iy + np.where(take_x, 0, step_y)
        tmx = tmx + np.where(take_x, tdx, 0.0)
        tmy = tmy + np.where(take_x, 0.0, tdy)
        alive = t <= a_cap
        inb = (ix >= 0) & (ix < grid_w) & (iy >= 0) & (iy < grid_h)
        live = alive & inb
        flat = np.where(live, iy * grid_w + ix, 0)
        cell_h = np.where(live, flat_height[flat], 0.0)
        hit = live & (cell_h > 0) & (z0 + a_dz * t <= cell_h)
        if hit.any():
            hidx = ridx[hit]
            depth[hidx] = t[hit]
            semantic[hidx] = flat_id[flat[hit]]
            resolved[hidx] = True
        keep = live & ~hit
        if not keep.all():
            ridx = ridx[keep]
            ix, iy = ix[keep], iy[keep]
            tmx, tmy, tdx, tdy = tmx[keep], tmy[keep], tdx[keep], tdy[keep]
            step_x, step_y = step_x[keep], step_y[keep]
            a_dz, a_cap = a_dz[keep], a_cap[keep]

    # unresolved rays: floor return if the floor crossing is within range
    floor_hit = ~resolved & (t_floor <= max_range)
    depth[floor_hit] = t_floor[floor_hit]
    semantic[floor_hit] = FLOOR_ID
    return depth.reshape(h, w), semantic.reshape(h, w)


def render_views(scene: Scene, pose: Pose,
                 intrinsics: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Render consistent depth and semantic images from one raycast pass."""
    return raycast_grid(scene.surface, scene.cell_id, scene.resolution, pose, intrinsics)


def render_depth(scene: Scene, pose: Pose, intrinsics: CameraIntrinsics) -> np.ndarray:
    return render_views(scene, pose, intrinsics)[0]


def render_semantic(scene: Scene, pose: Pose, intrinsics: CameraIntrinsics) -> np.ndarray:
    return render_views(scene, pose, intrinsics)[1]


# ---------------------------------------------------------------------------
# geodesic oracle

def inflated_blocked(scene: Scene, robot_radius: float) -> np.ndarray:
    cells = max(0, int(math.ceil(robot_radius / scene.resolution - 1e-9)))
    if cells == 0:
        return scene.blocked.copy()
    return binary_dilate(scene.blocked, kernel_size=2 * cells + 1, iterations=1)


def _nearest_unblocked(blocked: np.ndarray, cell: tuple[int, int]) -> tuple[int, int]:
    free_r, free_c = np.nonzero(~blocked)
    if free_r.size == 0:
        raise NoPathError("grid has no traversable cell")
    d2 = (free_r - cell[0]) ** 2 + (free_c - cell[1]) ** 2
    order = np.lexsort((free_c, free_r, d2))
    return (int(free_r[order[0]]), int(free_c[order[0]]))


def geodesic_shortest_length(scene: Scene, start: Pose, goal: ObjectInstance,
                             success_radius: float, robot_radius: float = 0.18) -> float:
    """Length of the shortest 8-connected path from `start` to within
    `success_radius` of the goal footprint, on the robot-inflated true grid.

    Diagonal steps cost sqrt(2) * resolution. Raises NoPathError when the goal
    cannot be approached; the caller marks such episodes invalid.
    """
    import heapq

    res = scene.resolution
    blocked = inflated_blocked(scene, robot_radius)
    start_cell = scene.world_to_cell(start.x, start.y)
    if not scene.in_bounds(*start_cell):
        raise NoPathError("start pose outside the scene")
    if blocked[start_cell]:
        start_cell = _nearest_unblocked(blocked, start_cell)

    # target set: traversable cells whose center is within success_radius of
    # any footprint cell center
    foot = np.array(sorted(goal.cells), dtype=np.float64)
    foot_xy = (foot[:, ::-1] + 0.5) * res
    targets = np.zeros_like(blocked)
    pad = int(math.ceil(success_radius / res)) + 1
    r0 = max(0, int(foot[:, 0].min()) - pad)
    r1 = min(scene.height - 1, int(foot[:, 0].max()) + pad)
    c0 = max(0, int(foot[:, 1].min()) - pad)
    c1 = min(scene.width - 1, int(foot[:, 1].max()) + pad)
    rows = np.arange(r0, r1 + 1)
    cols = np.arange(c0, c1 + 1)
    cy = (rows[:, None] + 0.5) * res
    cx = (cols[None, :] + 0.5) * res
    dist2 = np.full((rows.size, cols.size), np.inf)
    for fx, fy in foot_xy:
        dist2 = np.minimum(dist2, (cx - fx) ** 2 + (cy - fy) ** 2)
    targets[r0:r1 + 1, c0:c1 + 1] = dist2 <= success_radius ** 2
    targets &= ~blocked
    if not targets.any():
        raise NoPathError(f"no reachable cell within {success_radius} m of goal {goal.id}")
    if targets[start_cell]:
        return 0.0

    h, w = blocked.shape
    dist = np.full((h, w), np.inf)
    dist[start_cell] = 0.0
    heap = [(0.0, start_cell[0], start_cell[1])]
    moves = [(-1, -1, SQRT2), (-1, 0, 1.0), (-1, 1, SQRT2), (0, -1, 1.0),
             (0, 1, 1.0), (1, -1, SQRT2), (1, 0, 1.0), (1, 1, SQRT2)]
    while heap:
        d, r, c = heapq.heappop(heap)
        if d > dist[r, c]:
            continue
        if targets[r, c]:
            return d * res
        for dr, dc, cost in moves:
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and not blocked[nr, nc]:
                nd = d + cost
                if nd < dist[nr, nc]:
                    dist[nr, nc] = nd
                    heapq.heappush(heap, (nd, nr, nc))
    raise NoPathError(f"goal {goal.id} ({goal.category}) unreachable from start")


# ---------------------------------------------------------------------------
# procedural generation

# footprint (width cells, height cells) and top height in meters per category
CATEGORY_SHAPES = {
    "bed": (4, 3, 0.55),
    "sofa": (4, 2, 0.50),
    "table": (3, 3, 0.70),
    "chair": (2, 2, 0.45),
    "plant": (2, 2, 0.90),
    "toilet": (2, 2, 0.45),
    "tv": (3, 1, 1.10),
    "lamp": (1, 1, 0.15),
}
DEFAULT_SHAPE = (2, 2, 0.50)


@dataclass(frozen=True)
class SceneParams:
    rooms: int = 4
    width: int = 64
    height: int = 64
    object_categories: tuple = ("bed", "plant", "toilet")
    resolution: float = 0.05
    wall_height: float = 4.0
    door_width: int = 9
    min_room_side: int = 14
    robot_radius: float = 0.18

    def __post_init__(self):
        if self.rooms < 1:
            raise ConfigError("at least one room required")
        if self.width < 16 or self.height < 16:
            raise ConfigError("scene must be at least 16x16 cells")
        if self.door_width < 2 * math.ceil(self.robot_radius / self.resolution) + 1:
            raise ConfigError("door_width too narrow for the robot")
        if self.min_room_side < self.door_width + 4:
            raise ConfigError("min_room_side must exceed door_width + 4")


def _split_regions(rng: random.Random, params: SceneParams, wall: np.ndarray):
    """Recursive axis-aligned splits with door gaps; returns leaf room rects.

    A later split wall placed next to an earlier door would seal its one-lane
    passage once obstacles are inflated by the robot radius, so split
    positions are rejected within `keepout` cells of any existing door gap.
    """
    rooms = [(1, 1, params.height - 1, params.width - 1)]  # r0, c0, r1, c1 half-open
    min_side = params.min_room_side
    keepout = int(math.ceil(params.robot_radius / params.resolution)) + 2
    doors: list[tuple[int, int, int, int]] = []  # gap cell rects, half-open

    def door_safe(rect) -> bool:
        r0, c0, r1, c1 = rect
        for dr0, dc0, dr1, dc1 in doors:
            if (r0 < dr1 + keepout and dr0 - keepout < r1
                    and c0 < dc1 + keepout and dc0 - keepout < c1):
                return False
        return True

    while len(rooms) < params.rooms:
        progressed = False
        order = sorted(range(len(rooms)),
                       key=lambda i: -(rooms[i][2] - rooms[i][0]) * (rooms[i][3] - rooms[i][1]))
        for idx in order:
            r0, c0, r1, c1 = rooms[idx]
            if max(r1 - r0, c1 - c0) < 2 * min_side + 1:
                continue
            if (c1 - c0) >= (r1 - r0):
                cuts = [c0 + k for k in range(min_side, (c1 - c0) - min_side)
                        if door_safe((r0, c0 + k, r1, c0 + k + 1))]
                if not cuts:
                    continue
                cut = cuts[rng.randrange(len(cuts))]
                door = r0 + rng.randrange(2, (r1 - r0) - params.door_width - 1)
                wall[r0:r1, cut] = params.wall_height
                wall[door:door + params.door_width, cut] = 0.0
                doors.append((door, cut, door + params.door_width, cut + 1))
                rooms.pop(idx)
                rooms.insert(idx, (r0, c0, r1, cut))
                rooms.insert(idx + 1, (r0, cut + 1, r1, c1))
            else:
                cuts = [r0 + k for k in range(min_side, (r1 - r0) - min_side)
                        if door_safe((r0 + k, c0, r0 + k + 1, c1))]
                if not cuts:
                    continue
                cut = cuts[rng.randrange(len(cuts))]
                door = c0 + rng.randrange(2, (c1 - c0) - params.door_width - 1)
                wall[cut, c0:c1] = params.wall_height
                wall[cut, door:door + params.door_width] = 0.0
                doors.append((cut, door, cut + 1, door + params.door_width))
                rooms.pop(idx)
                rooms.insert(idx, (r0, c0, cut, c1))
                rooms.insert(idx + 1, (cut + 1, c0, r1, c1))
            progressed = True
            break
        if not progressed:
            raise SceneGenerationError(
                f"cannot fit {params.rooms} rooms of side >= {min_side} "
                f"in a {params.width}x{params.height} scene")
    return rooms


def _place_objects(rng: random.Random, params: SceneParams, wall: np.ndarray, rooms):
    objects = []
    occupied = wall > 0
    for i, category in enumerate(params.object_categories, start=1):
        fw, fh, top = CATEGORY_SHAPES.get(category, DEFAULT_SHAPE)
        placed = False
        for _ in range(200):
            r0, c0, r1, c1 = rooms[rng.randrange(len(rooms))]
            # keep >= 1 cell clearance from the room walls
            if (r1 - r0) - fh < 2 or (c1 - c0) - fw < 2:
                continue
            rr = r0 + 1 + rng.randrange((r1 - r0) - fh - 1)
            cc = c0 + 1 + rng.randrange((c1 - c0) - fw - 1)
            rect = occupied[rr:rr + fh, cc:cc + fw]
            if rect.any():
                continue
            cells = frozenset((rr + a, cc + b) for a in range(fh) for b in range(fw))
            objects.append(ObjectInstance(id=i, category=category, cells=cells, top_height=top))
            occupied[rr:rr + fh, cc:cc + fw] = True
            placed = True
            break
        if not placed:
            raise SceneGenerationError(f"could not place object '{category}'")
    return objects


def _scene_is_solvable(scene: Scene, rooms, robot_radius: float) -> bool:
    """All room centers mutually reachable on the inflated grid and every
    object approachable to within 1.0 m."""
    blocked = inflated_blocked(scene, robot_radius)
    if blocked.all():
        return False
    seeds = []
    for r0, c0, r1, c1 in rooms:
        center = ((r0 + r1) // 2, (c0 + c1) // 2)
        seeds.append(_nearest_unblocked(blocked, center))
    # flood fill from the first seed
    h, w = blocked.shape
    reach = np.zeros((h, w), dtype=bool)
    stack = [seeds[0]]
    reach[seeds[0]] = True
    while stack:
        r, c = stack.pop()
        for nr, nc in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if 0 <= nr < h and 0 <= nc < w and not blocked[nr, nc] and not reach[nr, nc]:
                reach[nr, nc] = True
                stack.append((nr, nc))
    if not all(reach[s] for s in seeds):
        return False
    radius_cells = int(math.ceil(1.0 / scene.resolution))
    for obj in scene.objects:
        rows = np.array([rc[0] for rc in obj.cells])
        cols = np.array([rc[1] for rc in obj.cells])
        ok = False
        rr, cc = np.nonzero(reach)
        if rr.size:
            for fr, fc in zip(rows, cols):
                d2 = (rr - fr) ** 2 + (cc - fc) ** 2
                if (d2 <= radius_cells ** 2).any():
                    ok = True
                    break
        if not ok:
            return False
    return True


def generate_scene(seed: int, params: SceneParams | None = None) -> Scene:
    """Deterministic procedural scene: BSP rooms with door gaps plus objects.

    Raises SceneGenerationError (naming the category) if an object cannot be
    placed, and retries object layouts until every room center is mutually
    reachable and every object approachable on the robot-inflated grid.
    """
    params = params or SceneParams()
    rng = random.Random(seed)
    base_wall = np.zeros((params.height, params.width), dtype=np.float64)
    base_wall[0, :] = params.wall_height
    base_wall[-1, :] = params.wall_height
    base_wall[:, 0] = params.wall_height
    base_wall[:, -1] = params.wall_height
    rooms = _split_regions(rng, params, base_wall)

    last_error = None
    for _ in range(30):
        try:
            objects = _place_objects(rng, params, base_wall, rooms)
        except SceneGenerationError as exc:
            last_error = exc
            continue
        scene = Scene(resolution=params.resolution, wall_height=base_wall,
                      objects=objects, name=f"scene-{seed:04d}")
        if _scene_is_solvable(scene, rooms, params.robot_radius):
            scene.rooms = tuple(rooms)
            return scene
        last_error = SceneGenerationError("object layout left a goal unreachable")
    raise last_error or SceneGenerationError("scene generation failed")


def random_start_pose(scene: Scene, seed: int, robot_radius: float = 0.18) -> Pose:
    """Deterministic start pose on the inflated-free grid, heading on the 30-degree lattice."""
    rng = random.Random(seed)
    blocked = inflated_blocked(scene, robot_radius)
    free = np.argwhere(~blocked)
    if free.size == 0:
        raise SceneGenerationError("no free cell for a start pose")
    r, c = free[rng.randrange(len(free))]
    x, y = scene.cell_center(int(r), int(c))
    return Pose(x, y, rng.randrange(12) * TURN_STEP)


# ---------------------------------------------------------------------------
# scene JSON serialization (run-length-encoded rows, byte-stable)

def _rle_encode_row(row: np.ndarray) -> list:
    out = []
    value = float(row[0])
    run = 0
    for v in row:
        v = float(v)
        if v == value:
            run += 1
        else:
            out.append([value, run])
            value, run = v, 1
    out.append([value, run])
    return out


def _rle_decode_row(encoded, width: int) -> np.ndarray:
    row = np.zeros(width, dtype=np.float64)
    i = 0
    for value, run in encoded:
        row[i:i + run] = value
        i += run
    if i != width:
        raise ConfigError("run-length row does not match scene width")
    return row


def scene_to_json_dict(scene: Scene) -> dict:
    return {
        "name": scene.name,
        "resolution": scene.resolution,
        "width": scene.width,
        "height": scene.height,
        "cells": [_rle_encode_row(scene.wall[r]) for r in range(scene.height)],
        "objects": [
            {
                "id": obj.id,
                "category": obj.category,
                "cells": [list(rc) for rc in sorted(obj.cells)],
                "top_height": obj.top_height,
            }
            for obj in sorted(scene.objects, key=lambda o: o.id)
        ],
    }


def scene_to_json(scene: Scene) -> str:
    return json.dumps(scene_to_json_dict(scene), sort_keys=True, separators=(",", ":"))


def scene_from_json_dict(data: dict) -> Scene:
    try:
        width = int(data["width"])
        height = int(data["height"])
        wall = np.stack([_rle_decode_row(row, width) for row in data["cells"]])
        if wall.shape[0] != height:
            raise ConfigError("cell rows do not match scene height")
        objects = [
            ObjectInstance(
                id=int(o["id"]),
                category=str(o["category"]),
                cells=frozenset((int(r), int(c)) for r, c in o["cells"]),
                top_height=float(o["top_height"]),
            )
            for o in data["objects"]
        ]
        return Scene(resolution=float(data["resolution"]), wall_height=wall,
                     objects=objects, name=str(data["name"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed scene JSON: {exc}") from exc


def scene_from_json(text: str) -> Scene:
    return scene_from_json_dict(json.loads(text))


def save_scene(scene: Scene, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scene_to_json(scene))
        fh.write("\n")


def load_scene(path: str) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_json(fh.read())
