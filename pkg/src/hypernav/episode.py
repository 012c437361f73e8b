"""Episode orchestration: one sense-map-detect-plan-act loop per step,
destination arbitration between local detection and the global advisor,
termination, and the SR/SPL bookkeeping.

A local goal detection always overrides the global destination; the global
advisor is consulted only when no local goal is active and the
destination-update flag fires (short-term goal reached, endurance exceeded,
or planning failure). Success is judged against ground truth while
termination is judged against the agent's belief, so false-positive
detections terminate the episode and land in the ``detection`` failure
bucket, exactly like a benchmark evaluator would score them.

Failure categories attached to unsuccessful episodes:

* ``detection`` -- terminated on a believed goal that ground truth rejects
* ``not_found`` -- step limit with no goal detection over the whole episode
* ``target_surrounded`` -- step limit while planning to a detected goal kept
  failing (goal region enclosed by obstacles)
* ``path_planning`` -- step limit although a goal was detected and plans
  existed; the follower never got there
* ``map_quality`` -- reserved label for depth dropouts corrupting the map; a
  simulated sensor never produces it, but external runners may assign it
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .advisor import AdvisorQuery
from .config import Config
from .errors import AggregationError, NoPathError
from .exploration import (NavState, VisitedMemory, build_blocks, choose_block,
                          destination_update_reason, render_context_image)
from .mapping import (OBSTACLE, OccupancyGrid, depth_to_points, merge_patch,
                      no_return_endpoints, points_to_local_patch)
from .perception import (DetectorParams, GoalRegion, OracleDetector, dilate_goal,
                         project_goal, refine_mask)
from .planner import astar, follow_step, inflate_obstacles, needs_replan
from .world import (Action, CameraIntrinsics, Pose, Scene,
                    geodesic_shortest_length, render_views, signed_angle_delta,
                    step_action)


class TerminationStatus(enum.Enum):
    CONTINUE = "continue"
    GOAL_REACHED = "goal_reached"
    STEP_LIMIT = "step_limit"


@dataclass(frozen=True)
class EpisodeSpec:
    scene: str                       # scene name or file path (label only)
    start: Pose
    goal_category: str
    success_radius: float = 1.0
    max_steps: int = 500
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "scene": self.scene,
            "start": [self.start.x, self.start.y, self.start.theta],
            "goal_category": self.goal_category,
            "success_radius": self.success_radius,
            "max_steps": self.max_steps,
            "seed": self.seed,
        }

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass
class EpisodeResult:
    spec: EpisodeSpec
    success: bool
    steps: int
    traveled_length: float
    shortest_length: float
    spl: float
    termination_reason: str          # goal_reached | step_limit | invalid
    failure_category: Optional[str]
    trace: list = field(default_factory=list)
    final_plan: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "spec_hash": self.spec.hash(),
            "success": self.success,
            "steps": self.steps,
            "traveled_length": self.traveled_length,
            "shortest_length": self.shortest_length,
            "spl": self.spl,
            "termination_reason": self.termination_reason,
            "failure_category": self.failure_category,
            "final_plan": self.final_plan,
            "trace": self.trace,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))


def compute_spl(success: bool, shortest: float, traveled: float) -> float:
    """success * shortest / max(traveled, shortest); a degenerate episode that
    starts at the goal (both lengths zero) scores 1 when successful."""
    if not success:
        return 0.0
    denom = max(traveled, shortest)
    if denom == 0.0:
        return 1.0
    return shortest / denom


# ---------------------------------------------------------------------------
# verifiers (the termination double-check)

class DetectorVerifier:
    """Confirms goal presence by re-running the detector on the current view."""

    def __init__(self, detector, intrinsics: CameraIntrinsics):
        self.detector = detector
        self.intrinsics = intrinsics

    def verify(self, depth, semantic, goal_category: str, pose: Pose) -> bool:
        det = self.detector.detect(semantic, depth, goal_category, pose, self.intrinsics)
        return det is not None


class AdvisorVerifier:
    """Asks the advisor endpoint whether the goal is visible, with a detector
    fallback when the endpoint is unreachable."""

    def __init__(self, endpoint, fallback: DetectorVerifier,
                 verify_template: Optional[str] = None):
        from .advisor import DEFAULT_VERIFY_TEMPLATE, verify_goal_present
        self._verify = verify_goal_present
        self.endpoint = endpoint
        self.fallback = fallback
        self.template = verify_template or DEFAULT_VERIFY_TEMPLATE

    def verify(self, depth, semantic, goal_category: str, pose: Pose) -> bool:
        image = semantic_to_ppm(semantic)
        return self._verify(
            self.endpoint, image, goal_category,
            fallback=lambda: self.fallback.verify(depth, semantic, goal_category, pose),
            verify_template=self.template)


def semantic_to_ppm(semantic: np.ndarray) -> bytes:
    """Deterministic false-color PPM of a semantic view (for advisor queries)."""
    from .imaging import encode_ppm
    h, w = semantic.shape
    rgb = np.empty((h, w, 3), dtype=np.uint8)
    rgb[:] = (235, 235, 235)
    rgb[semantic == -1] = (40, 40, 40)
    ids = semantic.astype(np.int64)
    obj = ids > 0
    if obj.any():
        rgb[obj, 0] = (37 * ids[obj] + 96) % 256
        rgb[obj, 1] = (83 * ids[obj] + 32) % 256
        rgb[obj, 2] = (151 * ids[obj] + 160) % 256
    return encode_ppm(rgb)


# ---------------------------------------------------------------------------
# termination

def check_termination(pose: Pose, local_goal: Optional[GoalRegion], steps: int,
                      spec: EpisodeSpec, verifier, depth, semantic,
                      resolution: float) -> TerminationStatus:
    """Agent-side termination: a detected (pre-dilation) goal region within
    the success radius plus a verifier confirmation ends the episode; the step
    limit is the fallback."""
    if local_goal is not None:
        if local_goal.distance_to(pose.x, pose.y, resolution) <= spec.success_radius:
            if verifier.verify(depth, semantic, spec.goal_category, pose):
                return TerminationStatus.GOAL_REACHED
    if steps >= spec.max_steps:
        return TerminationStatus.STEP_LIMIT
    return TerminationStatus.CONTINUE


def ground_truth_success(scene: Scene, pose: Pose, goal_category: str,
                         success_radius: float) -> bool:
    for obj in scene.objects_of(goal_category):
        for r, c in obj.cells:
            cx, cy = scene.cell_center(r, c)
            if math.hypot(cx - pose.x, cy - pose.y) <= success_radius:
                return True
    return False


def oracle_shortest_length(scene: Scene, spec: EpisodeSpec,
                           robot_radius: float) -> Optional[float]:
    """Min geodesic over all goal instances; None if none is reachable."""
    best = None
    for obj in sorted(scene.objects_of(spec.goal_category), key=lambda o: o.id):
        try:
            length = geodesic_shortest_length(scene, spec.start, obj,
                                              spec.success_radius, robot_radius)
        except NoPathError:
            continue
        best = length if best is None else min(best, length)
    return best


# ---------------------------------------------------------------------------
# the episode loop

@dataclass
class _Destination:
    source: str                       # "local" | "global"
    planning: GoalRegion              # what the planner aims at
    raw: Optional[GoalRegion] = None  # pre-dilation region (local only)
    block_id: Optional[int] = None


def _stride_hits_mapped_obstacle(grid: OccupancyGrid, pose: Pose,
                                 forward_step: float, robot_radius: float) -> bool:
    """Would a forward stride sweep the robot disc across a mapped obstacle?

    The planner's corridor is cell-sized but the robot moves in 0.5 m jumps
    from a continuous pose, so an aligned stride can still clip an obstacle
    corner the cell path avoids. This is the agent-side analog of the
    simulator's swept-disc test, evaluated against the agent's own map.
    """
    if grid.height == 0:
        return False
    res = grid.resolution
    cos_t, sin_t = math.cos(pose.theta), math.sin(pose.theta)
    xs = pose.x + cos_t * forward_step * np.linspace(0.1, 1.0, 10)
    ys = pose.y + sin_t * forward_step * np.linspace(0.1, 1.0, 10)
    r0 = int(math.floor((ys.min() - robot_radius) / res)) - grid.origin_row
    r1 = int(math.floor((ys.max() + robot_radius) / res)) - grid.origin_row
    c0 = int(math.floor((xs.min() - robot_radius) / res)) - grid.origin_col
    c1 = int(math.floor((xs.max() + robot_radius) / res)) - grid.origin_col
    r0, c0 = max(r0, 0), max(c0, 0)
    r1, c1 = min(r1, grid.height - 1), min(c1, grid.width - 1)
    if r0 > r1 or c0 > c1:
        return False
    window = grid.cells[r0:r1 + 1, c0:c1 + 1] == OBSTACLE
    if not window.any():
        return False
    rows, cols = np.nonzero(window)
    cell_x0 = (cols + c0 + grid.origin_col) * res
    cell_y0 = (rows + r0 + grid.origin_row) * res
    for x, y in zip(xs, ys):
        nearest_x = np.clip(x, cell_x0, cell_x0 + res)
        nearest_y = np.clip(y, cell_y0, cell_y0 + res)
        d2 = (nearest_x - x) ** 2 + (nearest_y - y) ** 2
        if (d2 <= robot_radius * robot_radius).any():
            return True
    return False


def _bump_patch(pose: Pose, robot_radius: float, res: float) -> OccupancyGrid:
    """One-cell obstacle belief just beyond the robot's leading edge after a
    collision report (contact-sensor semantics for obstacles below the
    camera's view cone)."""
    x = pose.x + math.cos(pose.theta) * (robot_radius + res)
    y = pose.y + math.sin(pose.theta) * (robot_radius + res)
    r = int(math.floor(y / res))
    c = int(math.floor(x / res))
    return OccupancyGrid(res, r, c, np.array([[OBSTACLE]], dtype=np.uint8))


def run_episode(scene: Scene, spec: EpisodeSpec, config: Config, advisor,
                detector=None, verifier=None) -> EpisodeResult:
    """Run one navigation episode; deterministic for a fixed (scene, spec,
    scripted advisor). Unreachable goals yield termination_reason="invalid"
    without running the loop."""
    intrinsics = CameraIntrinsics.from_hfov(
        config.sensor_width, config.sensor_height, config.sensor_hfov_deg,
        config.sensor_max_range, config.sensor_mount_height)
    if detector is None:
        detector = OracleDetector(scene, DetectorParams(
            min_visible_fraction=config.min_visible_fraction,
            max_det_range=config.max_det_range))
    if verifier is None:
        verifier = DetectorVerifier(detector, intrinsics)

    shortest = oracle_shortest_length(scene, spec, config.robot_radius)
    if shortest is None:
        return EpisodeResult(spec=spec, success=False, steps=0, traveled_length=0.0,
                             shortest_length=0.0, spl=0.0,
                             termination_reason="invalid", failure_category=None)

    res = config.resolution
    clip = (config.height_clip_min, config.height_clip_max)
    radius_cells = int(math.ceil(config.robot_radius / res - 1e-9))

    grid = OccupancyGrid.empty(res)
    memory = VisitedMemory(vicinity_radius=config.vicinity_radius)
    nav = NavState(endurance_limit=config.endurance_limit, resolution=res)
    pose = spec.start
    trajectory = [pose]
    dest: Optional[_Destination] = None
    plan = None
    scan_remaining = config.initial_scan_steps
    steps = 0
    traveled = 0.0
    trace: list = []
    detected_ever = False
    local_plan_failures = 0
    plans_existed = False
    recovery_dir: Optional[Action] = None
    recovery_count = 0
    termination = TerminationStatus.STEP_LIMIT

    while True:
        events: list = []
        depth, semantic = render_views(scene, pose, intrinsics)
        points = depth_to_points(depth, intrinsics, pose)
        misses = no_return_endpoints(depth, intrinsics, pose)
        patch = points_to_local_patch(points, clip, res, (pose.x, pose.y), misses)
        grid = merge_patch(grid, patch)

        det = detector.detect(semantic, depth, spec.goal_category, pose, intrinsics)
        if det is not None:
            detected_ever = True
            events.append("detect")
            refined = refine_mask(det, config.goal_erosion_kernel,
                                  config.goal_erosion_iterations)
            region = project_goal(refined, depth, intrinsics, pose, grid)
            if region is None:
                events.append("projection_failed")
            else:
                dilated = dilate_goal(region, grid, config.goal_dilation_kernel,
                                      config.goal_dilation_iterations)
                if dest is None or dest.source != "local":
                    events.append("dest:local")
                    nav.steps_since_destination = 0
                    nav.last_plan_failed = False
                    plan = None
                elif plan is not None and plan.cells[-1] not in dilated.cells:
                    plan = None   # refreshed region moved off the old plan target
                dest = _Destination(source="local", planning=dilated, raw=region)
                # reached-checks use the raw detected surface: the dilated
                # region exists for the planner and reaches back toward the
                # robot, so it must not trip the destination-update flag and
                # hand control back to the global advisor mid-approach
                nav.short_term_goal = region

        local_goal = dest.raw if dest is not None and dest.source == "local" else None
        status = check_termination(pose, local_goal, steps, spec, verifier,
                                   depth, semantic, res)
        if status is not TerminationStatus.CONTINUE:
            termination = status
            break

        # global destination arbitration
        update_reason = None
        if dest is None:
            if scan_remaining > 0:
                scan_remaining -= 1
                pose, collided = step_action(
                    scene, pose, Action.TURN_LEFT, config.robot_radius,
                    config.forward_step, math.radians(config.turn_deg))
                trajectory.append(pose)
                nav.steps_since_destination += 1
                trace.append(_trace_record(steps, pose, Action.TURN_LEFT, collided,
                                           None, events + ["scan"]))
                steps += 1
                continue
            update_reason = "initial"
        else:
            update_reason = destination_update_reason(
                nav, pose, config.destination_reached_radius)
        if update_reason is not None:
            blocks = build_blocks(grid, config.block_size)
            if blocks:
                events.append(f"advisor_query:{update_reason}")
                context_image = render_context_image(grid, blocks, pose, trajectory)
                query = AdvisorQuery(context_image=context_image,
                                     goal_category=spec.goal_category,
                                     excluded_ids=(), valid_ids=blocks.valid_ids())
                chosen = choose_block(advisor, query, memory, blocks, grid, pose,
                                      max_retries=config.advisor_max_retries,
                                      radius_cells=radius_cells,
                                      min_distance=config.destination_reached_radius)
                if chosen is not None:
                    if chosen.used_fallback:
                        events.append("advisor_fallback")
                    planning = GoalRegion(cells=frozenset([chosen.cell]), source="global")
                    dest = _Destination(source="global", planning=planning,
                                        block_id=chosen.block_id)
                    nav.short_term_goal = planning
                    nav.steps_since_destination = 0
                    nav.last_plan_failed = False
                    plan = None
                    events.append(f"dest:global:{chosen.block_id}")

        # plan and act
        action = Action.TURN_LEFT   # default scanning motion when planless
        if dest is not None:
            costmap = inflate_obstacles(grid, radius_cells)
            if plan is None or needs_replan(plan, steps, costmap, config.replan_interval):
                if plan is None:
                    replan_reason = "new"
                elif steps - plan.created_at_step >= config.replan_interval:
                    replan_reason = "periodic"
                else:
                    replan_reason = "blocked"
                start_cell = grid.world_to_cell(pose.x, pose.y)
                # aim for the detected surface itself; the dilated region is
                # the fallback that rescues goals enclosed by obstacles
                plan = None
                if dest.raw is not None:
                    plan = astar(costmap, start_cell, dest.raw,
                                 created_at_step=steps)
                if plan is None:
                    plan = astar(costmap, start_cell, dest.planning,
                                 created_at_step=steps)
                    if plan is not None and dest.raw is not None:
                        events.append("dilated_fallback")
                events.append(f"replan:{replan_reason}")
                if plan is None:
                    nav.last_plan_failed = True
                    events.append("plan_failed")
                    if dest.source == "local":
                        local_plan_failures += 1
                else:
                    plans_existed = True
                    nav.last_plan_failed = False
            if plan is not None:
                action = follow_step(pose, plan, config.turn_threshold_deg,
                                     config.waypoint_radius, config.forward_step)
                # a 0.5 m stride from a continuous pose can clip mapped
                # obstacle corners the cell path avoids: veto it and rotate
                # (one fixed direction) until a clear stride toward the
                # waypoint side appears
                wp = plan.waypoints[min(plan.next_index, len(plan.waypoints) - 1)]
                bearing = math.atan2(wp[1] - pose.y, wp[0] - pose.x)
                alpha = signed_angle_delta(bearing, pose.theta)
                if recovery_dir is not None:
                    if abs(alpha) <= math.pi / 2 and not _stride_hits_mapped_obstacle(
                            grid, pose, config.forward_step, config.robot_radius):
                        action = Action.FORWARD
                        recovery_dir = None
                        recovery_count = 0
                    else:
                        action = recovery_dir
                        recovery_count += 1
                        events.append("stride_veto")
                elif action is Action.FORWARD and _stride_hits_mapped_obstacle(
                        grid, pose, config.forward_step, config.robot_radius):
                    recovery_dir = (Action.TURN_LEFT if alpha >= 0
                                    else Action.TURN_RIGHT)
                    action = recovery_dir
                    recovery_count = 1
                    events.append("stride_veto")
                if recovery_count >= 12:   # full circle without a clear stride
                    nav.last_plan_failed = True
                    if dest.source == "local":
                        local_plan_failures += 1
                    plan = None
                    recovery_dir = None
                    recovery_count = 0
                    events.append("plan_failed")

        pose, collided = step_action(scene, pose, action, config.robot_radius,
                                     config.forward_step,
                                     math.radians(config.turn_deg))
        if action is Action.FORWARD:
            if collided:
                # contact with something the camera never saw: record the
                # belief, drop the plan, and rotate away next step
                grid = merge_patch(grid, _bump_patch(pose, config.robot_radius,
                                                     res))
                plan = None
                if recovery_dir is None:
                    recovery_dir = Action.TURN_LEFT
                    recovery_count = 1
                events.append("bump")
            else:
                traveled += config.forward_step
        trajectory.append(pose)
        nav.steps_since_destination += 1
        trace.append(_trace_record(steps, pose, action, collided,
                                   dest.source if dest else None, events))
        steps += 1

    success = (termination is TerminationStatus.GOAL_REACHED
               and ground_truth_success(scene, pose, spec.goal_category,
                                        spec.success_radius))
    failure = _failure_category(termination, success, detected_ever,
                                local_plan_failures, plans_existed)
    final_plan = [[x, y] for x, y in plan.remaining_waypoints()] if plan else []
    return EpisodeResult(
        spec=spec,
        success=success,
        steps=steps,
        traveled_length=traveled,
        shortest_length=shortest,
        spl=compute_spl(success, shortest, traveled),
        termination_reason=termination.value,
        failure_category=failure,
        trace=trace,
        final_plan=final_plan,
    )


def _trace_record(step: int, pose: Pose, action: Action, collided: bool,
                  dest_source: Optional[str], events: list) -> dict:
    return {
        "step": step,
        "pose": [pose.x, pose.y, pose.theta],
        "action": action.value,
        "collided": collided,
        "dest": dest_source,
        "events": events,
    }


def _failure_category(termination: TerminationStatus, success: bool,
                      detected_ever: bool, local_plan_failures: int,
                      plans_existed: bool) -> Optional[str]:
    if success:
        return None
    if termination is TerminationStatus.GOAL_REACHED:
        return "detection"
    if not detected_ever:
        return "not_found"
    if local_plan_failures > 0:
        return "target_surrounded"
    if plans_existed:
        return "path_planning"
    return "not_found"


# ---------------------------------------------------------------------------
# aggregation and result files

def aggregate(results) -> dict:
    """SR and mean SPL over valid episodes, order-independent."""
    ordered = sorted(results, key=lambda r: (r.spec.scene, r.spec.goal_category,
                                             r.spec.seed))
    valid = [r for r in ordered if r.termination_reason != "invalid"]
    invalid = len(ordered) - len(valid)
    if not valid:
        raise AggregationError("no valid episodes to aggregate")
    sr = sum(1 for r in valid if r.success) / len(valid)
    spl = sum(r.spl for r in valid) / len(valid)
    return {"SR": sr, "SPL": spl, "episodes": len(valid), "invalid": invalid}


def write_results_jsonl(results, path: str) -> None:
    ordered = sorted(results, key=lambda r: (r.spec.scene, r.spec.goal_category,
                                             r.spec.seed))
    with open(path, "w", encoding="utf-8") as fh:
        for r in ordered:
            fh.write(r.to_json_line())
            fh.write("\n")


def read_result_dicts(path: str) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
