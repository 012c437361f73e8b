"""Local perception: find the goal object in the egocentric view and project
it onto the occupancy map as the navigation goal.

The detector here is an oracle over the semantic render: it stands in for a
vision-language detector + segmenter while preserving the downstream contract
(bounding box plus per-pixel mask, occlusion-dependent visibility, limited
range). Any detector implementing :class:`Detector` can replace it; the wire
codec for out-of-process detectors is `detection_to_json` /
`detection_from_json` (bbox, run-length mask, confidence).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Protocol

import numpy as np

from .errors import ConfigError
from .mapping import OBSTACLE, OccupancyGrid
from .morphology import binary_dilate, binary_erode
from .world import CameraIntrinsics, ObjectInstance, Pose, Scene, raycast_grid


@dataclass(frozen=True)
class DetectorParams:
    min_visible_fraction: float = 0.15
    max_det_range: float = 4.0

    def __post_init__(self):
        if self.min_visible_fraction <= 0 or self.max_det_range <= 0:
            raise ConfigError("detector thresholds must be positive")


@dataclass
class DetectionResult:
    bbox: tuple[int, int, int, int]   # (u_min, v_min, u_max, v_max), inclusive
    mask: np.ndarray                  # bool, full image; nonzero only inside bbox
    instance_id: int
    confidence: float


@dataclass(frozen=True)
class GoalRegion:
    cells: frozenset                  # world-lattice (row, col) indices
    source: str = "local"             # "local" | "global"

    def __post_init__(self):
        if not self.cells:
            raise ConfigError("goal region must be non-empty")

    def nearest_cell(self, x: float, y: float, resolution: float) -> tuple[int, int]:
        def d2(rc):
            cx = (rc[1] + 0.5) * resolution
            cy = (rc[0] + 0.5) * resolution
            return ((cx - x) ** 2 + (cy - y) ** 2, rc[0], rc[1])
        return min(self.cells, key=d2)

    def distance_to(self, x: float, y: float, resolution: float) -> float:
        r, c = self.nearest_cell(x, y, resolution)
        cx = (c + 0.5) * resolution
        cy = (r + 0.5) * resolution
        return math.hypot(cx - x, cy - y)


class Detector(Protocol):
    def detect(self, semantic: np.ndarray, depth: np.ndarray, goal_category: str,
               pose: Pose, intrinsics: CameraIntrinsics) -> Optional[DetectionResult]:
        ...


def _project_corners(obj: ObjectInstance, resolution: float, pose: Pose,
                     intrinsics: CameraIntrinsics) -> Optional[tuple[int, int, int, int]]:
    """Image-space bounding box of the object's full 3D extent, or None if any
    corner is behind the camera (caller falls back to the full frame)."""
    r0, c0, r1, c1 = obj.footprint_bbox()
    xs = (c0 * resolution, (c1 + 1) * resolution)
    ys = (r0 * resolution, (r1 + 1) * resolution)
    zs = (0.0, obj.top_height)
    st, ct = math.sin(pose.theta), math.cos(pose.theta)
    us, vs = [], []
    for x in xs:
        for y in ys:
            for z in zs:
                rx, ry, rz = x - pose.x, y - pose.y, z - intrinsics.mount_height
                cam_z = ct * rx + st * ry          # forward
                cam_x = st * rx - ct * ry          # right
                cam_y = -rz                        # down
                if cam_z < 1e-9:
                    return None
                us.append(intrinsics.cx + intrinsics.fx * cam_x / cam_z)
                vs.append(intrinsics.cy + intrinsics.fy * cam_y / cam_z)
    u0 = max(0, int(math.floor(min(us))) - 1)
    v0 = max(0, int(math.floor(min(vs))) - 1)
    u1 = min(intrinsics.width - 1, int(math.ceil(max(us))) + 1)
    v1 = min(intrinsics.height - 1, int(math.ceil(max(vs))) + 1)
    if u0 > u1 or v0 > v1:
        return None
    return (u0, v0, u1, v1)


def _unoccluded_pixel_count(scene: Scene, obj: ObjectInstance, pose: Pose,
                            intrinsics: CameraIntrinsics) -> int:
    """Pixels the object would cover seen alone (no walls, no other objects),
    rendered only inside its projected image window."""
    window = _project_corners(obj, scene.resolution, pose, intrinsics)
    if window is None:
        window = (0, 0, intrinsics.width - 1, intrinsics.height - 1)
    height = np.zeros((scene.height, scene.width))
    ids = np.zeros((scene.height, scene.width), dtype=np.int32)
    for r, c in obj.cells:
        height[r, c] = obj.top_height
        ids[r, c] = obj.id
    _, semantic = raycast_grid(height, ids, scene.resolution, pose, intrinsics,
                               window=window)
    return int((semantic == obj.id).sum())


def detect_goal(semantic: np.ndarray, depth: np.ndarray, goal_category: str,
                scene: Scene, params: DetectorParams, pose: Pose,
                intrinsics: CameraIntrinsics) -> Optional[DetectionResult]:
    """Oracle goal detection over the semantic render.

    An instance qualifies when its visible pixel count reaches
    `min_visible_fraction` of its unoccluded pixel count and its nearest
    visible pixel is within `max_det_range`. The nearest qualifying instance
    wins; the mask is exactly its visible pixels. Unknown categories simply
    yield no detection.
    """
    candidates = scene.objects_of(goal_category)
    if not candidates:
        return None
    best = None
    for obj in sorted(candidates, key=lambda o: o.id):
        visible = semantic == obj.id
        count = int(visible.sum())
        if count == 0:
            continue
        nearest = float(depth[visible].min())
        if nearest > params.max_det_range:
            continue
        full = _unoccluded_pixel_count(scene, obj, pose, intrinsics)
        if full <= 0:
            continue
        fraction = count / full
        if fraction < params.min_visible_fraction:
            continue
        if best is None or nearest < best[0]:
            best = (nearest, obj, visible, fraction)
    if best is None:
        return None
    _, obj, visible, fraction = best
    rows, cols = np.nonzero(visible)
    bbox = (int(cols.min()), int(rows.min()), int(cols.max()), int(rows.max()))
    return DetectionResult(bbox=bbox, mask=visible, instance_id=obj.id,
                           confidence=min(1.0, fraction))


@dataclass
class OracleDetector:
    """Detector-protocol wrapper around `detect_goal` for the episode loop."""
    scene: Scene
    params: DetectorParams = field(default_factory=DetectorParams)

    def detect(self, semantic, depth, goal_category, pose, intrinsics):
        return detect_goal(semantic, depth, goal_category, self.scene,
                           self.params, pose, intrinsics)


def refine_mask(det: DetectionResult, kernel_size: int = 3,
                iterations: int = 1) -> DetectionResult:
    """Erode the segmentation mask to drop boundary pixels; if erosion would
    empty the mask (thin objects) the original is kept."""
    if not det.mask.any():
        raise ConfigError("cannot refine an empty mask")
    eroded = binary_erode(det.mask, kernel_size=kernel_size, iterations=iterations)
    if not eroded.any():
        return replace(det, mask=det.mask.copy())
    rows, cols = np.nonzero(eroded)
    bbox = (int(cols.min()), int(rows.min()), int(cols.max()), int(rows.max()))
    return replace(det, bbox=bbox, mask=eroded)


def project_goal(det: DetectionResult, depth: np.ndarray,
                 intrinsics: CameraIntrinsics, pose: Pose,
                 grid: OccupancyGrid) -> Optional[GoalRegion]:
    """Back-project masked pixels with valid depth onto map cells.

    Returns None (projection failure; the detection is discarded this step)
    when no masked pixel carries a usable return.
    """
    from .world import pixel_ray_directions

    flat_mask = det.mask.ravel()
    d = depth.ravel()
    valid = flat_mask & (d > 0) & (d < intrinsics.max_range)
    if not valid.any():
        return None
    dirs = pixel_ray_directions(intrinsics, pose)[valid]
    origin = np.array([pose.x, pose.y, intrinsics.mount_height])
    pts = origin + dirs * d[valid][:, None]
    # returns land exactly on cell faces; nudge forward so they bin into the
    # struck cell (same convention as the occupancy patch)
    eps = grid.resolution * 1e-6
    pts = pts + dirs * eps
    rows = np.floor(pts[:, 1] / grid.resolution).astype(np.int64)
    cols = np.floor(pts[:, 0] / grid.resolution).astype(np.int64)
    r0, c0, r1, c1 = grid.lattice_bounds()
    inb = (rows >= r0) & (rows < r1) & (cols >= c0) & (cols < c1)
    cells = frozenset(zip(rows[inb].tolist(), cols[inb].tolist()))
    if not cells:
        return None
    return GoalRegion(cells=cells, source="local")


def dilate_goal(region: GoalRegion, grid: OccupancyGrid, kernel_size: int = 5,
                iterations: int = 3) -> GoalRegion:
    """Morphologically dilate the goal region on the map so it pokes out past
    enclosing obstacles; obstacle cells stay in the region (the planner aims
    for its nearest reachable cell, it never drives onto obstacles)."""
    rows = [rc[0] for rc in region.cells]
    cols = [rc[1] for rc in region.cells]
    radius = (kernel_size // 2) * iterations
    r0, c0 = min(rows) - radius, min(cols) - radius
    h = max(rows) - r0 + radius + 1
    w = max(cols) - c0 + radius + 1
    mask = np.zeros((h, w), dtype=bool)
    for r, c in region.cells:
        mask[r - r0, c - c0] = True
    mask = binary_dilate(mask, kernel_size=kernel_size, iterations=iterations)
    gr0, gc0, gr1, gc1 = grid.lattice_bounds()
    out = set()
    for r, c in zip(*np.nonzero(mask)):
        rr, cc = int(r) + r0, int(c) + c0
        if gr0 <= rr < gr1 and gc0 <= cc < gc1:
            out.add((rr, cc))
    if not out:
        out = set(region.cells)
    return GoalRegion(cells=frozenset(out), source=region.source)


def reachable_target_cells(region: GoalRegion, grid: OccupancyGrid) -> frozenset:
    """Region cells that are not mapped Obstacle (candidate stop cells)."""
    return frozenset(rc for rc in region.cells if grid.get(*rc) != OBSTACLE)


# ---------------------------------------------------------------------------
# wire codec for external detectors

def _rle_mask(mask: np.ndarray) -> dict:
    flat = mask.ravel()
    changes = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.r_[0, changes, flat.size]
    runs = np.diff(bounds).tolist()
    return {"shape": list(mask.shape), "first": bool(flat[0]), "runs": runs}


def _unrle_mask(data: dict) -> np.ndarray:
    total = int(np.prod(data["shape"]))
    flat = np.zeros(total, dtype=bool)
    value = bool(data["first"])
    i = 0
    for run in data["runs"]:
        if value:
            flat[i:i + run] = True
        i += run
        value = not value
    if i != total:
        raise ConfigError("run-length mask does not match its shape")
    return flat.reshape(data["shape"])


def detection_to_json(det: Optional[DetectionResult]) -> str:
    if det is None:
        return json.dumps(None)
    return json.dumps({
        "bbox": list(det.bbox),
        "mask": _rle_mask(det.mask),
        "confidence": det.confidence,
    }, sort_keys=True, separators=(",", ":"))


def detection_from_json(text: str) -> Optional[DetectionResult]:
    data = json.loads(text)
    if data is None:
        return None
    try:
        return DetectionResult(bbox=tuple(int(v) for v in data["bbox"]),
                               mask=_unrle_mask(data["mask"]),
                               instance_id=int(data.get("instance_id", 0)),
                               confidence=float(data["confidence"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed detection JSON: {exc}") from exc
