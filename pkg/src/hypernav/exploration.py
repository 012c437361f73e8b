"""Global perception: partition the explored map into ID-labeled blocks,
render the advisor's context image, pick the next exploration destination, and
track the destination-update conditions.

The advisor itself is pluggable (HTTP endpoint, scripted answers, or the
frontier heuristic); this module owns everything around it: block labeling is
rebuilt from the current map on every query, answers are screened against the
visited memory, and any advisor failure degrades to the frontier heuristic so
an episode never aborts on a network problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .advisor import AdvisorAnswer, AdvisorError, AdvisorQuery, summarize_answer
from .imaging import draw_digits, draw_filled_triangle, draw_line, encode_ppm
from .mapping import FREE, OBSTACLE, UNKNOWN, OccupancyGrid
from .perception import GoalRegion
from .world import Pose


@dataclass(frozen=True)
class Block:
    id: int
    row0: int      # lattice indices, half-open
    col0: int
    row1: int
    col1: int

    def center_cell(self) -> tuple[int, int]:
        return ((self.row0 + self.row1 - 1) // 2, (self.col0 + self.col1 - 1) // 2)

    def center_xy(self, resolution: float) -> tuple[float, float]:
        r, c = self.center_cell()
        return ((c + 0.5) * resolution, (r + 0.5) * resolution)

    def contains(self, r: int, c: int) -> bool:
        return self.row0 <= r < self.row1 and self.col0 <= c < self.col1


@dataclass
class BlockGrid:
    block_size: int
    blocks: dict          # id -> Block, ids consecutive from 1, row-major

    def __bool__(self) -> bool:
        return bool(self.blocks)

    def block_of(self, r: int, c: int) -> Optional[int]:
        for bid, blk in self.blocks.items():
            if blk.contains(r, c):
                return bid
        return None

    def valid_ids(self) -> tuple:
        return tuple(sorted(self.blocks))


def build_blocks(grid: OccupancyGrid, block_size: int) -> BlockGrid:
    """Tile the map into block_size squares anchored at the grid origin; only
    tiles containing at least one explored cell receive ids (row-major from 1)."""
    blocks: dict = {}
    if grid.height == 0 or grid.width == 0:
        return BlockGrid(block_size, blocks)
    explored = grid.cells != UNKNOWN
    next_id = 1
    for bi in range(0, grid.height, block_size):
        for bj in range(0, grid.width, block_size):
            tile = explored[bi:bi + block_size, bj:bj + block_size]
            if tile.any():
                blocks[next_id] = Block(
                    id=next_id,
                    row0=grid.origin_row + bi,
                    col0=grid.origin_col + bj,
                    row1=grid.origin_row + min(bi + block_size, grid.height),
                    col1=grid.origin_col + min(bj + block_size, grid.width),
                )
                next_id += 1
    return BlockGrid(block_size, blocks)


# ---------------------------------------------------------------------------
# context image

_COLOR_UNKNOWN = (128, 128, 128)
_COLOR_FREE = (255, 255, 255)
_COLOR_OBSTACLE = (0, 0, 0)
_COLOR_BOUNDARY = (0, 0, 255)
_COLOR_DIGIT = (255, 0, 0)
_COLOR_TRAJECTORY = (0, 180, 0)
_COLOR_ARROW = (255, 0, 255)

CONTEXT_SCALE = 4   # image pixels per map cell


def _world_to_pixel(grid: OccupancyGrid, x: float, y: float,
                    scale: int) -> tuple[int, int]:
    # image row 0 is the +y edge of the stored map
    c = (x / grid.resolution - grid.origin_col) * scale
    r = (grid.origin_row + grid.height - y / grid.resolution) * scale
    return (int(math.floor(r)), int(math.floor(c)))


def render_context_image(grid: OccupancyGrid, blocks: BlockGrid, pose: Pose,
                         trajectory=(), scale: int = CONTEXT_SCALE) -> bytes:
    """Deterministic PPM: map shading, block outlines and id numerals, the
    past trajectory, and the pose as an arrow."""
    h = max(grid.height, 1) * scale
    w = max(grid.width, 1) * scale
    canvas = np.empty((h, w, 3), dtype=np.uint8)
    canvas[:] = _COLOR_UNKNOWN
    if grid.height:
        lut = np.empty((3, 3), dtype=np.uint8)
        lut[UNKNOWN] = _COLOR_UNKNOWN
        lut[FREE] = _COLOR_FREE
        lut[OBSTACLE] = _COLOR_OBSTACLE
        shaded = lut[grid.cells[::-1, :]]
        canvas[:] = np.repeat(np.repeat(shaded, scale, axis=0), scale, axis=1)

    for bid in sorted(blocks.blocks):
        blk = blocks.blocks[bid]
        top = (grid.origin_row + grid.height - blk.row1) * scale
        bottom = (grid.origin_row + grid.height - blk.row0) * scale - 1
        left = (blk.col0 - grid.origin_col) * scale
        right = (blk.col1 - grid.origin_col) * scale - 1
        draw_line(canvas, top, left, top, right, _COLOR_BOUNDARY)
        draw_line(canvas, bottom, left, bottom, right, _COLOR_BOUNDARY)
        draw_line(canvas, top, left, bottom, left, _COLOR_BOUNDARY)
        draw_line(canvas, top, right, bottom, right, _COLOR_BOUNDARY)
        cx, cy = blk.center_xy(grid.resolution)
        pr, pc = _world_to_pixel(grid, cx, cy, scale)
        draw_digits(canvas, str(bid), pr, pc, _COLOR_DIGIT, scale=3)

    if len(trajectory) >= 2:
        pts = [_world_to_pixel(grid, p.x, p.y, scale) for p in trajectory]
        for a, b in zip(pts[:-1], pts[1:]):
            draw_line(canvas, a[0], a[1], b[0], b[1], _COLOR_TRAJECTORY)

    tip_len = 2.5 * grid.resolution
    base_len = 1.2 * grid.resolution
    tip = (pose.x + tip_len * math.cos(pose.theta), pose.y + tip_len * math.sin(pose.theta))
    left = (pose.x + base_len * math.cos(pose.theta + 2.5),
            pose.y + base_len * math.sin(pose.theta + 2.5))
    right = (pose.x + base_len * math.cos(pose.theta - 2.5),
             pose.y + base_len * math.sin(pose.theta - 2.5))
    draw_filled_triangle(canvas, [_world_to_pixel(grid, *p, scale) for p in (tip, left, right)],
                         _COLOR_ARROW)
    return encode_ppm(canvas)


# ---------------------------------------------------------------------------
# frontier heuristic

def frontier_cells(grid: OccupancyGrid) -> np.ndarray:
    """Free cells 4-adjacent to an Unknown cell, as (N, 2) lattice indices."""
    if grid.height == 0:
        return np.zeros((0, 2), dtype=np.int64)
    cells = grid.cells
    unknown = cells == UNKNOWN
    near_unknown = np.zeros_like(unknown)
    near_unknown[1:, :] |= unknown[:-1, :]
    near_unknown[:-1, :] |= unknown[1:, :]
    near_unknown[:, 1:] |= unknown[:, :-1]
    near_unknown[:, :-1] |= unknown[:, 1:]
    rows, cols = np.nonzero((cells == FREE) & near_unknown)
    out = np.stack([rows + grid.origin_row, cols + grid.origin_col], axis=1)
    return out


def frontier_advisor(query: AdvisorQuery, blocks: BlockGrid, grid: OccupancyGrid,
                     pose: Pose) -> AdvisorAnswer:
    """Baseline advisor: the block holding the frontier cell nearest the robot
    (ties to the lowest block id); with no usable frontier, the lowest
    non-excluded id."""
    excluded = set(query.excluded_ids)
    candidates = []
    for r, c in frontier_cells(grid):
        bid = blocks.block_of(int(r), int(c))
        if bid is None or bid in excluded:
            continue
        cx = (c + 0.5) * grid.resolution
        cy = (r + 0.5) * grid.resolution
        d2 = (cx - pose.x) ** 2 + (cy - pose.y) ** 2
        candidates.append((d2, bid, int(r), int(c)))
    if candidates:
        candidates.sort()
        return AdvisorAnswer(raw_text=str(candidates[0][1]))
    remaining = [bid for bid in sorted(blocks.blocks) if bid not in excluded]
    fallback = remaining[0] if remaining else min(blocks.blocks, default=0)
    return AdvisorAnswer(raw_text=str(fallback))


class FrontierHeuristicAdvisor:
    """Advisor-protocol wrapper so the heuristic is interchangeable with
    scripted and HTTP advisors."""

    name = "frontier"

    def answer(self, query: AdvisorQuery, context: "AdvisorContext") -> AdvisorAnswer:
        return frontier_advisor(query, context.blocks, context.grid, context.pose)


@dataclass
class AdvisorContext:
    blocks: BlockGrid
    grid: OccupancyGrid
    pose: Pose


# ---------------------------------------------------------------------------
# visited memory and the destination-update flag

@dataclass
class VisitedMemory:
    vicinity_radius: float = 1.0
    points: list = field(default_factory=list)   # (x, y), append-only

    def add(self, xy: tuple[float, float]) -> None:
        self.points.append((float(xy[0]), float(xy[1])))

    def is_visited(self, xy: tuple[float, float]) -> bool:
        x, y = xy
        return any(math.hypot(px - x, py - y) <= self.vicinity_radius
                   for px, py in self.points)


@dataclass
class NavState:
    endurance_limit: int = 60
    steps_since_destination: int = 0
    short_term_goal: Optional[GoalRegion] = None
    last_plan_failed: bool = False
    resolution: float = 0.05


def destination_update_reason(state: NavState, pose: Pose,
                              reached_radius: float) -> Optional[str]:
    """Which update condition fires, if any: 'reached', 'endurance', or
    'plan_failed'. Checked in that order."""
    if state.short_term_goal is not None:
        if state.short_term_goal.distance_to(pose.x, pose.y, state.resolution) \
                <= reached_radius:
            return "reached"
    if state.steps_since_destination > state.endurance_limit:
        return "endurance"
    if state.last_plan_failed:
        return "plan_failed"
    return None


def should_update_destination(state: NavState, pose: Pose,
                              reached_radius: float = 0.5) -> bool:
    """True iff the short-term goal is reached, the endurance limit is
    exceeded, or the last planning attempt failed."""
    return destination_update_reason(state, pose, reached_radius) is not None


# ---------------------------------------------------------------------------
# destination selection

@dataclass
class ChosenDestination:
    cell: tuple[int, int]
    xy: tuple[float, float]
    block_id: int
    queries: int
    used_fallback: bool


def _standable_free(grid: OccupancyGrid, radius_cells: int) -> np.ndarray:
    """Free cells the robot can actually stand on: mapped Free and clear of
    mapped obstacles by the inflation radius. A wall-hugging destination would
    be unreachable by construction, so these are the only candidates."""
    from .morphology import binary_dilate
    free = grid.cells == FREE
    obstacle = grid.cells == OBSTACLE
    if radius_cells > 0 and obstacle.any():
        obstacle = binary_dilate(obstacle, kernel_size=2 * radius_cells + 1,
                                 iterations=1)
    return free & ~obstacle


def _destination_in_block(grid: OccupancyGrid, block: Block,
                          standable: np.ndarray) -> Optional[tuple[int, int]]:
    r0 = max(block.row0, grid.origin_row)
    c0 = max(block.col0, grid.origin_col)
    r1 = min(block.row1, grid.origin_row + grid.height)
    c1 = min(block.col1, grid.origin_col + grid.width)
    if r0 >= r1 or c0 >= c1:
        return None
    sub = standable[r0 - grid.origin_row:r1 - grid.origin_row,
                    c0 - grid.origin_col:c1 - grid.origin_col]
    rows, cols = np.nonzero(sub)
    if rows.size == 0:
        return None
    rows = rows + r0
    cols = cols + c0
    cr, cc = block.center_cell()
    d2 = (rows - cr) ** 2 + (cols - cc) ** 2
    order = np.lexsort((cols, rows, d2))
    return (int(rows[order[0]]), int(cols[order[0]]))


def _nearest_free_cell(grid: OccupancyGrid, cell: tuple[int, int],
                       standable: np.ndarray) -> Optional[tuple[int, int]]:
    rows, cols = np.nonzero(standable)
    if rows.size == 0:
        rows, cols = np.nonzero(grid.cells == FREE)
    if rows.size == 0:
        return None
    rows = rows + grid.origin_row
    cols = cols + grid.origin_col
    d2 = (rows - cell[0]) ** 2 + (cols - cell[1]) ** 2
    order = np.lexsort((cols, rows, d2))
    return (int(rows[order[0]]), int(cols[order[0]]))


def choose_block(advisor, query: AdvisorQuery, memory: VisitedMemory,
                 blocks: BlockGrid, grid: OccupancyGrid, pose: Pose,
                 max_retries: int = 3, radius_cells: int = 4,
                 min_distance: float = 0.0) -> Optional[ChosenDestination]:
    """Query the advisor for the next exploration block and convert it to a
    concrete destination cell.

    Answers whose block center (or resulting destination) lies within the
    visited vicinity are re-queried with the id added to the exclusion list,
    at most `max_retries` times; after that the lowest-id non-excluded block
    wins. Advisor failures switch to the frontier heuristic for this query.
    The destination is the standable free cell nearest the block center (the
    nearest standable cell anywhere when the block offers none); destinations
    closer than `min_distance` to the robot are rejected like visited ones (a
    destination the robot is already standing on cannot drive exploration).
    The accepted destination is recorded in the visited memory.
    """
    if not blocks:
        return None
    context = AdvisorContext(blocks=blocks, grid=grid, pose=pose)
    fallback = FrontierHeuristicAdvisor()
    standable = _standable_free(grid, radius_cells)
    excluded = list(query.excluded_ids)
    valid = blocks.valid_ids()
    used_fallback = False
    queries = 0
    chosen: Optional[int] = None

    def destination_for(block: Block):
        dest = _destination_in_block(grid, block, standable)
        if dest is None:
            dest = _nearest_free_cell(grid, block.center_cell(), standable)
        return dest

    for _ in range(1 + max_retries):
        q = AdvisorQuery(context_image=query.context_image,
                         goal_category=query.goal_category,
                         excluded_ids=tuple(excluded), valid_ids=valid)
        queries += 1
        try:
            answer = advisor.answer(q, context)
        except AdvisorError:
            used_fallback = True
            advisor = fallback
            answer = advisor.answer(q, context)
        bid = summarize_answer(answer, valid, tuple(excluded))
        if bid is None:
            continue
        block = blocks.blocks[bid]
        if memory.is_visited(block.center_xy(grid.resolution)):
            excluded.append(bid)
            continue
        dest = destination_for(block)
        if dest is None:
            return None
        dest_xy = grid.cell_center(*dest)
        if memory.is_visited(dest_xy) or \
                math.hypot(dest_xy[0] - pose.x, dest_xy[1] - pose.y) < min_distance:
            excluded.append(bid)
            continue
        chosen = bid
        break
    if chosen is None:
        # retries exhausted: the lowest non-excluded id per the retry rule;
        # with every block excluded, ask the frontier heuristic so the robot
        # keeps pushing into unexplored space instead of cycling old ids
        candidates = [b for b in valid if b not in excluded]
        if not candidates:
            frontier_q = AdvisorQuery(context_image=query.context_image,
                                      goal_category=query.goal_category,
                                      excluded_ids=(), valid_ids=valid)
            hint = summarize_answer(fallback.answer(frontier_q, context), valid, ())
            candidates = ([hint] if hint is not None else []) + list(valid)
        dest = None
        for bid in candidates:
            cand = destination_for(blocks.blocks[bid])
            if cand is None:
                continue
            cand_xy = grid.cell_center(*cand)
            if math.hypot(cand_xy[0] - pose.x, cand_xy[1] - pose.y) >= min_distance:
                chosen, dest, dest_xy = bid, cand, cand_xy
                break
        if dest is None:
            chosen = candidates[0]
            dest = destination_for(blocks.blocks[chosen])
            if dest is None:
                return None
            dest_xy = grid.cell_center(*dest)
    memory.add(dest_xy)
    return ChosenDestination(cell=dest, xy=dest_xy, block_id=chosen,
                             queries=queries, used_fallback=used_fallback)
