import json
import math

import numpy as np
import pytest

from conftest import rect_object
from hypernav.advisor import ScriptedAdvisor
from hypernav.episode import (EpisodeResult, EpisodeSpec, TerminationStatus,
                              aggregate, check_termination, compute_spl,
                              run_episode, write_results_jsonl)
from hypernav.errors import AggregationError
from hypernav.exploration import FrontierHeuristicAdvisor
from hypernav.perception import GoalRegion
from hypernav.world import Pose, Scene, SceneParams, generate_scene, random_start_pose

RES = 0.15


def nav_scene(name="nav", objects=(), extra_walls=(), size=64):
    """64x64 box at navigation scale with optional interior wall rects."""
    wall = np.zeros((size, size))
    wall[0, :] = wall[-1, :] = 4.0
    wall[:, 0] = wall[:, -1] = 4.0
    for r0, c0, r1, c1 in extra_walls:
        wall[r0:r1, c0:c1] = 4.0
    return Scene(RES, wall, objects=objects, name=name)


def center(rc):
    return ((rc[1] + 0.5) * RES, (rc[0] + 0.5) * RES)


class NullDetector:
    def detect(self, semantic, depth, goal_category, pose, intrinsics):
        return None


class MislabelingDetector:
    """Detects instances of the wrong category under the requested name."""

    def __init__(self, scene, actual_category):
        from hypernav.perception import DetectorParams, OracleDetector
        self.inner = OracleDetector(scene, DetectorParams())
        self.actual = actual_category

    def detect(self, semantic, depth, goal_category, pose, intrinsics):
        return self.inner.detect(semantic, depth, self.actual, pose, intrinsics)


class PointAdvisor:
    """Test advisor steering toward a fixed world point: answers the block
    containing it, or the labeled block whose center is nearest."""

    def __init__(self, x, y):
        self.x, self.y = x, y

    def answer(self, query, context):
        from hypernav.advisor import AdvisorAnswer
        res = context.grid.resolution
        r = int(self.y / res)
        c = int(self.x / res)
        bid = context.blocks.block_of(r, c)
        if bid is None:
            bid = min(context.blocks.blocks,
                      key=lambda b: (context.blocks.blocks[b].center_xy(res)[0] - self.x) ** 2
                      + (context.blocks.blocks[b].center_xy(res)[1] - self.y) ** 2)
        return AdvisorAnswer(raw_text=str(bid))


# ---------------------------------------------------------------------------
# SPL arithmetic and aggregation

@pytest.mark.parametrize("success,l,p,expected", [
    (True, 4.0, 5.0, 0.8),
    (False, 4.0, 5.0, 0.0),
    (True, 5.0, 4.0, 1.0),    # traveled shorter than geodesic clamps to 1
    (True, 0.0, 0.0, 1.0),    # start-at-goal degenerate
    (True, 2.0, 2.0, 1.0),
])
def test_spl_arithmetic(success, l, p, expected):
    assert compute_spl(success, l, p) == pytest.approx(expected)


def fake_result(scene, goal, seed, success, l, p, reason="goal_reached"):
    spec = EpisodeSpec(scene=scene, start=Pose(1, 1, 0), goal_category=goal,
                       seed=seed)
    return EpisodeResult(spec=spec, success=success, steps=10, traveled_length=p,
                         shortest_length=l, spl=compute_spl(success, l, p),
                         termination_reason=reason, failure_category=None)


def test_aggregate_formula_identity():
    out = aggregate([fake_result("s", "bed", 0, True, 4.0, 4.0)])
    assert out["SR"] == 1.0
    assert out["SPL"] == 1.0


def test_aggregate_mean_with_zero_term():
    results = [fake_result("s", "bed", 0, True, 4.0, 5.0),
               fake_result("s", "bed", 1, False, 4.0, 9.0, reason="step_limit")]
    out = aggregate(results)
    assert out["SR"] == 0.5
    assert out["SPL"] == pytest.approx(0.4)


def test_aggregate_excludes_invalid_and_counts_them():
    results = [fake_result("s", "bed", 0, True, 4.0, 4.0),
               fake_result("s", "bed", 1, False, 0.0, 0.0, reason="invalid")]
    out = aggregate(results)
    assert out["SR"] == 1.0
    assert out["episodes"] == 1
    assert out["invalid"] == 1


def test_aggregate_order_invariant():
    results = [fake_result("s", "bed", i, i % 2 == 0, 3.0, 3.0 + i) for i in range(7)]
    a = aggregate(results)
    b = aggregate(list(reversed(results)))
    assert a == b


def test_aggregate_empty_raises():
    with pytest.raises(AggregationError):
        aggregate([fake_result("s", "bed", 0, False, 0, 0, reason="invalid")])


# ---------------------------------------------------------------------------
# termination

class YesVerifier:
    def verify(self, depth, semantic, goal_category, pose):
        return True


class NoVerifier:
    def verify(self, depth, semantic, goal_category, pose):
        return False


def term_spec():
    return EpisodeSpec(scene="t", start=Pose(1, 1, 0), goal_category="bed",
                       success_radius=1.0, max_steps=500)


def test_termination_nominal_goal_reached():
    region = GoalRegion(cells=frozenset({(10, 10)}), source="local")
    pose = Pose(*center((10, 12)), 0.0)
    out = check_termination(pose, region, 5, term_spec(), YesVerifier(),
                            None, None, RES)
    assert out is TerminationStatus.GOAL_REACHED


def test_termination_requires_verifier():
    region = GoalRegion(cells=frozenset({(10, 10)}), source="local")
    pose = Pose(*center((10, 12)), 0.0)
    out = check_termination(pose, region, 5, term_spec(), NoVerifier(),
                            None, None, RES)
    assert out is TerminationStatus.CONTINUE


def test_termination_step_limit():
    out = check_termination(Pose(1, 1, 0), None, 500, term_spec(), YesVerifier(),
                            None, None, RES)
    assert out is TerminationStatus.STEP_LIMIT


# ---------------------------------------------------------------------------
# full episodes

def test_degenerate_start_immediate_success(nav_config):
    bed = rect_object(1, "bed", 30, 36, 3, 4, 0.55)
    scene = nav_scene(objects=(bed,))
    start = Pose(*center((31, 30)), 0.0)   # ~1 m west of the bed, facing it
    spec = EpisodeSpec(scene="t", start=start, goal_category="bed",
                       success_radius=1.0, max_steps=500, seed=0)
    result = run_episode(scene, spec, nav_config, FrontierHeuristicAdvisor())
    assert result.success
    assert result.steps <= 5
    assert result.spl >= 0.9 or result.traveled_length == 0.0


def test_disabled_detector_not_found(nav_config):
    bed = rect_object(1, "bed", 30, 36, 3, 4, 0.55)
    scene = nav_scene(objects=(bed,))
    spec = EpisodeSpec(scene="t", start=Pose(*center((31, 30)), 0.0),
                       goal_category="bed", success_radius=1.0, max_steps=40,
                       seed=0)
    result = run_episode(scene, spec, nav_config, FrontierHeuristicAdvisor(),
                         detector=NullDetector())
    assert not result.success
    assert result.termination_reason == "step_limit"
    assert result.failure_category == "not_found"


def test_false_positive_detection_category(nav_config):
    # detector mistakes the plant for the requested bed; the episode
    # terminates on belief but ground truth rejects it
    bed = rect_object(1, "bed", 50, 50, 3, 4, 0.55)
    plant = rect_object(2, "plant", 30, 36, 2, 2, 0.9)
    scene = nav_scene(objects=(bed, plant))
    detector = MislabelingDetector(scene, "plant")
    spec = EpisodeSpec(scene="t", start=Pose(*center((31, 30)), 0.0),
                       goal_category="bed", success_radius=1.0, max_steps=120,
                       seed=0)
    result = run_episode(scene, spec, nav_config, FrontierHeuristicAdvisor(),
                         detector=detector)
    assert result.termination_reason == "goal_reached"
    assert not result.success
    assert result.failure_category == "detection"


def test_invalid_episode_when_goal_unreachable(nav_config):
    # bed sealed in a walled-off chamber
    bed = rect_object(1, "bed", 28, 44, 3, 4, 0.55)
    scene = nav_scene(objects=(bed,),
                      extra_walls=((24, 40, 25, 52), (35, 40, 36, 52),
                                   (24, 40, 36, 41), (24, 51, 36, 52)))
    spec = EpisodeSpec(scene="t", start=Pose(*center((10, 10)), 0.0),
                       goal_category="bed", success_radius=0.5, max_steps=100,
                       seed=0)
    result = run_episode(scene, spec, nav_config, FrontierHeuristicAdvisor())
    assert result.termination_reason == "invalid"
    assert result.steps == 0
    with pytest.raises(AggregationError):
        aggregate([result])


def test_traveled_length_counts_clean_forwards(nav_config):
    bed = rect_object(1, "bed", 30, 44, 3, 4, 0.55)
    scene = nav_scene(objects=(bed,))
    spec = EpisodeSpec(scene="t", start=Pose(*center((31, 20)), 0.0),
                       goal_category="bed", success_radius=1.0, max_steps=200,
                       seed=0)
    result = run_episode(scene, spec, nav_config, FrontierHeuristicAdvisor())
    forwards = sum(1 for rec in result.trace
                   if rec["action"] == "Forward" and not rec["collided"])
    assert result.traveled_length == pytest.approx(0.5 * forwards)
    assert result.success


def test_episode_determinism(nav_config):
    scene = generate_scene(3, SceneParams(resolution=RES))
    start = random_start_pose(scene, 33)
    spec = EpisodeSpec(scene=scene.name, start=start, goal_category="plant",
                       success_radius=1.0, max_steps=500, seed=3)
    a = run_episode(scene, spec, nav_config, FrontierHeuristicAdvisor())
    b = run_episode(scene, spec, nav_config, FrontierHeuristicAdvisor())
    assert a.to_json_line() == b.to_json_line()
    assert a.traveled_length == b.traveled_length


def test_scripted_advisor_deterministic_and_sticky(nav_config):
    scene = generate_scene(5, SceneParams(resolution=RES))
    start = random_start_pose(scene, 55)
    spec = EpisodeSpec(scene=scene.name, start=start, goal_category="toilet",
                       success_radius=1.0, max_steps=300, seed=5)
    a = run_episode(scene, spec, nav_config, ScriptedAdvisor(["1", "2", "3"]))
    b = run_episode(scene, spec, nav_config, ScriptedAdvisor(["1", "2", "3"]))
    assert a.to_json_line() == b.to_json_line()


# ---------------------------------------------------------------------------
# priority and the destination-update state machine

def two_room_scene_with_hidden_bed():
    """Divider wall with a door; the bed hides in the east room."""
    bed = rect_object(1, "bed", 46, 48, 3, 4, 0.55)
    walls = ((1, 32, 28, 33), (37, 32, 63, 33))   # door rows 28..36 at col 32
    return nav_scene(name="two-room", objects=(bed,), extra_walls=walls)


def test_local_detection_overrides_global_within_one_step(nav_config):
    scene = two_room_scene_with_hidden_bed()
    start = Pose(*center((16, 12)), math.pi)    # west room, facing away
    spec = EpisodeSpec(scene="t", start=start, goal_category="bed",
                       success_radius=1.0, max_steps=500, seed=0)
    result = run_episode(scene, spec, nav_config, PointAdvisor(*center((46, 50))))
    assert result.success
    detect_steps = [rec["step"] for rec in result.trace if "detect" in rec["events"]]
    assert detect_steps, "the bed must eventually be seen"
    first = detect_steps[0]
    before = [rec for rec in result.trace if rec["step"] < first and rec["dest"]]
    assert any(rec["dest"] == "global" for rec in before), \
        "a global destination must be active before the first detection"
    # the step the detection happens, the active destination is already local
    rec = result.trace[first]
    assert rec["dest"] == "local"
    # and the priority rule holds for every detection step
    for rec in result.trace:
        if "detect" in rec["events"] and rec["dest"] is not None \
                and "projection_failed" not in rec["events"]:
            assert rec["dest"] == "local"


def _query_reasons(result):
    reasons = []
    for rec in result.trace:
        for e in rec["events"]:
            if e.startswith("advisor_query:"):
                reasons.append(e.split(":", 1)[1])
    return reasons


def test_reached_condition_triggers_new_query(nav_config):
    bed = rect_object(1, "bed", 56, 56, 3, 4, 0.55)
    scene = nav_scene(objects=(bed,))
    spec = EpisodeSpec(scene="t", start=Pose(*center((10, 10)), 0.0),
                       goal_category="bed", success_radius=1.0, max_steps=200,
                       seed=0)
    result = run_episode(scene, spec, nav_config, FrontierHeuristicAdvisor(),
                         detector=NullDetector())
    reasons = _query_reasons(result)
    assert "reached" in reasons


def test_endurance_condition_triggers_new_query(nav_config):
    config = nav_config.replace(endurance_limit=5)
    bed = rect_object(1, "bed", 56, 56, 3, 4, 0.55)
    scene = nav_scene(objects=(bed,))
    spec = EpisodeSpec(scene="t", start=Pose(*center((10, 10)), 0.0),
                       goal_category="bed", success_radius=1.0, max_steps=60,
                       seed=0)
    result = run_episode(scene, spec, config, PointAdvisor(*center((56, 10))),
                         detector=NullDetector())
    reasons = _query_reasons(result)
    assert "endurance" in reasons


def test_plan_failure_condition_triggers_new_query(nav_config):
    # a 3-cell slit: wide enough to see through, too narrow to pass once the
    # posts are mapped and inflated, so planning into the east room fails
    walls = ((1, 32, 30, 33), (33, 32, 63, 33))
    bed = rect_object(1, "bed", 10, 10, 3, 4, 0.55)
    scene = nav_scene(objects=(bed,), extra_walls=walls)
    start = Pose(*center((31, 24)), 0.0)     # facing the slit
    spec = EpisodeSpec(scene="t", start=start, goal_category="bed",
                       success_radius=1.0, max_steps=120, seed=0)
    result = run_episode(scene, spec, nav_config, PointAdvisor(*center((31, 48))),
                         detector=NullDetector())
    reasons = _query_reasons(result)
    assert "plan_failed" in reasons
    assert any("plan_failed" in rec["events"] for rec in result.trace)


def test_blocked_path_triggers_replan_within_ten_steps(nav_config):
    # an obstacle slab on the route is hidden behind a wall stub; once the
    # robot rounds the stub, the slab is mapped and the plan must be dropped
    walls = ((20, 30, 29, 32),)                 # stub jutting into the hall
    slab = rect_object(2, "slab", 24, 34, 4, 2, 1.0)   # behind the stub
    bed = rect_object(1, "bed", 24, 56, 3, 4, 0.55)
    scene = nav_scene(objects=(bed, slab), extra_walls=walls)
    start = Pose(*center((24, 8)), 0.0)
    spec = EpisodeSpec(scene="t", start=start, goal_category="bed",
                       success_radius=1.0, max_steps=400, seed=0)
    result = run_episode(scene, spec, nav_config, PointAdvisor(*center((24, 56))))
    blocked_replans = [rec["step"] for rec in result.trace
                       if "replan:blocked" in rec["events"]]
    assert blocked_replans, "newly mapped obstacle must force a replan"
    assert result.success
    assert not any(rec["collided"] for rec in result.trace)


def test_results_jsonl_round_trip(tmp_path, nav_config):
    bed = rect_object(1, "bed", 30, 44, 3, 4, 0.55)
    scene = nav_scene(objects=(bed,))
    spec = EpisodeSpec(scene="t", start=Pose(*center((31, 20)), 0.0),
                       goal_category="bed", success_radius=1.0, max_steps=80,
                       seed=0)
    result = run_episode(scene, spec, nav_config, FrontierHeuristicAdvisor())
    path = tmp_path / "results.jsonl"
    write_results_jsonl([result], str(path))
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 1
    record = json.loads(lines[0])
    assert record["spec_hash"] == spec.hash()
    assert record["success"] == result.success
    assert record["trace"][0]["step"] == 0
    assert len(record["trace"]) == result.steps
