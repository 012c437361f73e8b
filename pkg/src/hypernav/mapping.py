"""Incremental top-down occupancy mapping from egocentric depth.

The agent map is a three-state grid (Unknown / Free / Obstacle) addressed by
world-lattice cell indices: cell (row, col) always covers the same world
rectangle regardless of how far the stored array has grown. The global grid
expands in 64-cell chunks so array reallocation never moves cell boundaries.

Cell states are encoded 0/1/2 so the merge priority Obstacle > Free > Unknown
is a plain elementwise maximum, which also makes Obstacle observations sticky.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .world import CameraIntrinsics, Pose, pixel_ray_directions

UNKNOWN = 0
FREE = 1
OBSTACLE = 2

CHUNK = 64


@dataclass
class OccupancyGrid:
    resolution: float
    origin_row: int      # world-lattice row index of cells[0, 0]
    origin_col: int
    cells: np.ndarray    # uint8, shape (height, width)

    @staticmethod
    def empty(resolution: float) -> "OccupancyGrid":
        return OccupancyGrid(resolution, 0, 0, np.zeros((0, 0), dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def lattice_bounds(self) -> tuple[int, int, int, int]:
        """(row0, col0, row1, col1), half-open, in lattice indices."""
        return (self.origin_row, self.origin_col,
                self.origin_row + self.height, self.origin_col + self.width)

    def contains(self, r: int, c: int) -> bool:
        return (self.origin_row <= r < self.origin_row + self.height
                and self.origin_col <= c < self.origin_col + self.width)

    def get(self, r: int, c: int) -> int:
        if not self.contains(r, c):
            return UNKNOWN
        return int(self.cells[r - self.origin_row, c - self.origin_col])

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor(y / self.resolution)), int(math.floor(x / self.resolution)))

    def cell_center(self, r: int, c: int) -> tuple[float, float]:
        return ((c + 0.5) * self.resolution, (r + 0.5) * self.resolution)

    def explored_count(self) -> int:
        return int((self.cells != UNKNOWN).sum())

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.resolution, self.origin_row, self.origin_col,
                             self.cells.copy())


def depth_to_points(depth: np.ndarray, intrinsics: CameraIntrinsics,
                    pose: Pose) -> np.ndarray:
    """Back-project valid returns (0 < d < max_range) to world points, (N, 3)."""
    if depth.shape != (intrinsics.height, intrinsics.width):
        raise ConfigError("depth image does not match intrinsics")
    d = depth.ravel()
    valid = (d > 0) & (d < intrinsics.max_range)
    dirs = pixel_ray_directions(intrinsics, pose)[valid]
    origin = np.array([pose.x, pose.y, intrinsics.mount_height])
    pts = origin + dirs * d[valid][:, None]
    # floor returns land at z == 0 up to rounding; clamp so z >= 0 holds
    pts[:, 2] = np.maximum(pts[:, 2], 0.0)
    return pts


def no_return_endpoints(depth: np.ndarray, intrinsics: CameraIntrinsics,
                        pose: Pose) -> np.ndarray:
    """World endpoints at max_range for pixels with no return, (M, 3)."""
    d = depth.ravel()
    none = d == 0
    dirs = pixel_ray_directions(intrinsics, pose)[none]
    origin = np.array([pose.x, pose.y, intrinsics.mount_height])
    return origin + dirs * intrinsics.max_range


def _carve_free(free: np.ndarray, origin_row: int, origin_col: int,
                resolution: float, sensor_xy: tuple[float, float],
                endpoints_xy: np.ndarray) -> None:
    """Mark cells crossed by the 2D rays from the sensor to each endpoint.

    Endpoints sharing an azimuth are collapsed to the farthest one first: the
    union of their swept cells is exactly the sweep of the longest ray, and an
    egocentric image yields one azimuth per pixel column, so this turns tens
    of thousands of rays into a few hundred.
    """
    if endpoints_xy.size == 0:
        return
    x0, y0 = sensor_xy
    dx = endpoints_xy[:, 0] - x0
    dy = endpoints_xy[:, 1] - y0
    length = np.hypot(dx, dy)
    keep = length > 1e-12
    dx, dy, length = dx[keep], dy[keep], length[keep]
    if length.size == 0:
        return
    azimuth = np.round(np.arctan2(dy, dx), 9)
    order = np.lexsort((length, azimuth))
    azimuth, length = azimuth[order], length[order]
    dx, dy = dx[order], dy[order]
    last = np.r_[azimuth[1:] != azimuth[:-1], True]  # farthest endpoint per azimuth
    dx, dy, length = dx[last], dy[last], length[last]
    ux, uy = dx / length, dy / length

    h, w = free.shape
    n = ux.size
    ix = np.full(n, int(math.floor(x0 / resolution)) - origin_col, dtype=np.int64)
    iy = np.full(n, int(math.floor(y0 / resolution)) - origin_row, dtype=np.int64)
    if (0 <= iy[0] < h) and (0 <= ix[0] < w):
        free[iy[0], ix[0]] = True  # the sensor's own cell is observed free
    step_x = np.where(ux > 0, 1, -1).astype(np.int64)
    step_y = np.where(uy > 0, 1, -1).astype(np.int64)
    gx0 = origin_col * resolution
    gy0 = origin_row * resolution
    with np.errstate(divide="ignore", invalid="ignore"):
        tdx = np.where(ux != 0, resolution / np.abs(ux), np.inf)
        tdy = np.where(uy != 0, resolution / np.abs(uy), np.inf)
        tmx = np.where(ux != 0, (gx0 + (ix + (ux > 0)) * resolution - x0) / ux, np.inf)
        tmy = np.where(uy != 0, (gy0 + (iy + (uy > 0)) * resolution - y0) / uy, np.inf)
    cap = length
    max_iter = 4 * (h + w) + 8
    for _ in range(max_iter):
        if ix.size == 0:
            break
        take_x = tmx <= tmy
        t = np.where(take_x, tmx, tmy)
        ix = ix + np.where(take_x, step_x, 0)
        iy = iy + np.where(take_x, 0, step_y)
        tmx = tmx + np.where(take_x, tdx, 0.0)
        tmy = tmy + np.where(take_x, 0.0, tdy)
        keep = (t <= cap) & (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        if not keep.all():
            ix, iy = ix[keep], iy[keep]
            tmx, tmy, tdx, tdy = tmx[keep], tmy[keep], tdx[keep], tdy[keep]
            step_x, step_y = step_x[keep], step_y[keep]
            cap = cap[keep]
        if ix.size:
            free[iy, ix] = True


def points_to_local_patch(points: np.ndarray, height_clip: tuple[float, float],
                          resolution: float, sensor_xy: tuple[float, float],
                          no_return_xy: np.ndarray | None = None) -> OccupancyGrid:
    """Rasterize one sensing step into a local Unknown/Free/Obstacle patch.

    Points inside the height band mark their cell Obstacle; the 2D rays from
    the sensor to every return (and to the max-range endpoint of no-return
    rays) carve Free cells. Obstacle wins over Free within the patch.

    `sensor_xy` and `no_return_xy` are required context the point set itself
    does not carry: carving needs the ray origin, and no-return rays have no
    point at all.
    """
    z_min, z_max = height_clip
    if z_min >= z_max:
        raise ConfigError("height clip must satisfy z_min < z_max")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    extra = (np.zeros((0, 3)) if no_return_xy is None
             else np.asarray(no_return_xy, dtype=np.float64).reshape(-1, 3))
    all_xy = np.vstack([points[:, :2], extra[:, :2], [sensor_xy]])

    res = resolution
    origin_row = int(math.floor(all_xy[:, 1].min() / res)) - 1
    origin_col = int(math.floor(all_xy[:, 0].min() / res)) - 1
    row1 = int(math.floor(all_xy[:, 1].max() / res)) + 2
    col1 = int(math.floor(all_xy[:, 0].max() / res)) + 2
    h, w = row1 - origin_row, col1 - origin_col

    free = np.zeros((h, w), dtype=bool)
    carve_targets = np.vstack([points[:, :2], extra[:, :2]])
    _carve_free(free, origin_row, origin_col, res, sensor_xy, carve_targets)

    obstacle = np.zeros((h, w), dtype=bool)
    band = (points[:, 2] >= z_min) & (points[:, 2] <= z_max)
    if band.any():
        # returns land exactly on cell faces; nudge forward along the ray so
        # boundary hits bin into the struck cell instead of one short
        px = points[band, 0]
        py = points[band, 1]
        dx = px - sensor_xy[0]
        dy = py - sensor_xy[1]
        norm = np.maximum(np.hypot(dx, dy), 1e-12)
        eps = res * 1e-6
        px = px + dx / norm * eps
        py = py + dy / norm * eps
        rows = np.floor(py / res).astype(np.int64) - origin_row
        cols = np.floor(px / res).astype(np.int64) - origin_col
        inb = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
        obstacle[rows[inb], cols[inb]] = True

    cells = np.zeros((h, w), dtype=np.uint8)
    cells[free] = FREE
    cells[obstacle] = OBSTACLE
    return OccupancyGrid(res, origin_row, origin_col, cells)


def _chunk_floor(v: int) -> int:
    return (v // CHUNK) * CHUNK


def _chunk_ceil(v: int) -> int:
    return -((-v) // CHUNK) * CHUNK


def merge_patch(grid: OccupancyGrid, patch: OccupancyGrid) -> OccupancyGrid:
    """Priority-merge a patch into the global grid, growing it chunkwise.

    Obstacle > Free > Unknown per cell; a cell ever observed Obstacle stays
    Obstacle and Unknown never overwrites an observed state. The input grids
    are left untouched.
    """
    if grid.resolution != patch.resolution:
        raise ConfigError(
            f"resolution mismatch: grid {grid.resolution} vs patch {patch.resolution}")
    if patch.height == 0 or patch.width == 0:
        return grid.copy()
    gr0, gc0, gr1, gc1 = grid.lattice_bounds()
    pr0, pc0, pr1, pc1 = patch.lattice_bounds()
    if grid.height == 0:
        gr0, gc0, gr1, gc1 = pr0, pc0, pr0, pc0
    r0 = _chunk_floor(min(gr0, pr0))
    c0 = _chunk_floor(min(gc0, pc0))
    r1 = _chunk_ceil(max(gr1, pr1))
    c1 = _chunk_ceil(max(gc1, pc1))
    cells = np.zeros((r1 - r0, c1 - c0), dtype=np.uint8)
    if grid.height:
        cells[gr0 - r0:gr1 - r0, gc0 - c0:gc1 - c0] = grid.cells
    region = cells[pr0 - r0:pr1 - r0, pc0 - c0:pc1 - c0]
    np.maximum(region, patch.cells, out=region)
    return OccupancyGrid(grid.resolution, r0, c0, cells)


_PGM_SHADE = {UNKNOWN: 128, FREE: 255, OBSTACLE: 0}


def grid_to_pgm(grid: OccupancyGrid) -> bytes:
    """Binary PGM (P5) snapshot; image row 0 is the +y edge of the map."""
    lut = np.zeros(3, dtype=np.uint8)
    for state, shade in _PGM_SHADE.items():
        lut[state] = shade
    shades = lut[grid.cells[::-1, :]]
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    return header + shades.tobytes()
