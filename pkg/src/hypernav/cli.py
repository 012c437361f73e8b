"""Command-line entry points: scene generation, single and batch episode runs,
and rendering map/trajectory images from a results file.

Exit codes: 0 ok, 2 config error, 3 invalid episode, 4 I/O error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
import zlib

from . import episode as ep
from .advisor import AdvisorEndpoint, HttpAdvisor, ScriptedAdvisor
from .config import Config, load_config
from .errors import AggregationError, ConfigError, HyperNavError
from .exploration import FrontierHeuristicAdvisor, build_blocks, render_context_image
from .imaging import draw_line
from .mapping import (OccupancyGrid, depth_to_points, grid_to_pgm, merge_patch,
                      no_return_endpoints, points_to_local_patch)
from .world import (CameraIntrinsics, Pose, SceneParams, generate_scene,
                    load_scene, random_start_pose, render_views, save_scene)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVALID = 3
EXIT_IO = 4


def make_advisor(spec: str | None, config: Config):
    """'heuristic', 'script:answers.json', or an http(s) endpoint URL.

    With no explicit spec, the configured advisor_url (which the
    HYPERNAV_ADVISOR_URL environment variable overrides) wins, then the
    frontier heuristic.
    """
    if spec is None:
        spec = config.advisor_url or "heuristic"
    if spec == "heuristic":
        return FrontierHeuristicAdvisor()
    if spec.startswith("script:"):
        return ScriptedAdvisor.from_file(spec.split(":", 1)[1])
    if spec.startswith("http://") or spec.startswith("https://"):
        endpoint = AdvisorEndpoint(base_url=spec, timeout=config.advisor_timeout,
                                   max_retries=config.advisor_max_retries)
        return HttpAdvisor(endpoint, config.advisor_prompt_template,
                           config.advisor_exclusion_template)
    raise ConfigError(f"unknown advisor spec {spec!r} "
                      "(expected 'heuristic', 'script:FILE', or a URL)")


def _episode_seed(base_seed: int, scene_name: str, goal: str) -> int:
    return zlib.crc32(f"{base_seed}:{scene_name}:{goal}".encode("utf-8"))


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise ConfigError(f"bad --size {text!r}, expected WIDTHxHEIGHT") from exc


def _parse_seeds(text: str) -> range:
    if "-" in text:
        lo, hi = text.split("-", 1)
        return range(int(lo), int(hi) + 1)
    return range(int(text), int(text) + 1)


def cmd_gen_scenes(args, config: Config) -> int:
    import os
    params = SceneParams(rooms=args.rooms, width=args.size[0], height=args.size[1],
                         object_categories=tuple(args.objects.split(",")),
                         resolution=config.resolution,
                         wall_height=config.wall_height,
                         robot_radius=config.robot_radius)
    os.makedirs(args.out, exist_ok=True)
    for seed in _parse_seeds(args.seeds):
        scene = generate_scene(seed, params)
        save_scene(scene, os.path.join(args.out, f"{scene.name}.json"))
    print(f"wrote {len(_parse_seeds(args.seeds))} scene(s) to {args.out}")
    return EXIT_OK


def _run_one(scene_path: str, goal: str, advisor_spec: str, seed: int,
             config: Config, max_steps: int | None):
    scene = load_scene(scene_path)
    if max_steps is not None:
        config = config.replace(max_steps=max_steps)
    start = random_start_pose(scene, _episode_seed(seed, scene.name, goal),
                              config.robot_radius)
    spec = ep.EpisodeSpec(scene=scene_path, start=start, goal_category=goal,
                          success_radius=config.success_radius,
                          max_steps=config.max_steps, seed=seed)
    advisor = make_advisor(advisor_spec, config)
    return ep.run_episode(scene, spec, config, advisor)


def cmd_run(args, config: Config) -> int:
    result = _run_one(args.scene, args.goal, args.advisor, args.seed, config,
                      args.max_steps)
    if any("advisor_fallback" in rec["events"] for rec in result.trace):
        print("warning: advisor unreachable, frontier heuristic answered some queries",
              file=sys.stderr)
    if args.trace:
        ep.write_results_jsonl([result], args.trace)
    public = result.to_json_dict()
    public.pop("trace")
    print(json.dumps(public, sort_keys=True))
    return EXIT_INVALID if result.termination_reason == "invalid" else EXIT_OK


def cmd_batch(args, config: Config) -> int:
    import os
    scene_files = sorted(
        os.path.join(args.scenes, f) for f in os.listdir(args.scenes)
        if f.endswith(".json"))
    if not scene_files:
        raise ConfigError(f"no scene files in {args.scenes}")
    with open(args.goals, "r", encoding="utf-8") as fh:
        goals = json.load(fh)
    if not isinstance(goals, list) or not all(isinstance(g, str) for g in goals):
        raise ConfigError("goals file must be a JSON array of category names")

    jobs = []
    for path in scene_files:
        scene = load_scene(path)
        present = {obj.category for obj in scene.objects}
        for goal in goals:
            if goal in present:
                jobs.append((path, goal, args.advisor, args.seed, config,
                             args.max_steps))
    if not jobs:
        raise ConfigError("no (scene, goal) pairs: none of the goals occur in the scenes")

    if args.parallelism > 1:
        with concurrent.futures.ProcessPoolExecutor(args.parallelism) as pool:
            results = list(pool.map(_run_one_star, jobs))
    else:
        results = [_run_one(*job) for job in jobs]

    ep.write_results_jsonl(results, args.out)
    try:
        report = ep.aggregate(results)
    except AggregationError:
        report = {"SR": None, "SPL": None, "episodes": 0, "invalid": len(results)}
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def _run_one_star(job):
    return _run_one(*job)


def _replay_map(scene, trace, config: Config) -> OccupancyGrid:
    intr = CameraIntrinsics.from_hfov(config.sensor_width, config.sensor_height,
                                      config.sensor_hfov_deg, config.sensor_max_range,
                                      config.sensor_mount_height)
    clip = (config.height_clip_min, config.height_clip_max)
    grid = OccupancyGrid.empty(config.resolution)
    for rec in trace:
        pose = Pose(*rec["pose"])
        depth, _ = render_views(scene, pose, intr)
        pts = depth_to_points(depth, intr, pose)
        misses = no_return_endpoints(depth, intr, pose)
        patch = points_to_local_patch(pts, clip, config.resolution,
                                      (pose.x, pose.y), misses)
        grid = merge_patch(grid, patch)
    return grid


def cmd_render(args, config: Config) -> int:
    records = ep.read_result_dicts(args.trace)
    if not records:
        raise ConfigError(f"no results in {args.trace}")
    if not 0 <= args.index < len(records):
        raise ConfigError(f"--index {args.index} out of range (file has {len(records)})")
    record = records[args.index]
    scene_path = args.scene or record["spec"]["scene"]
    scene = load_scene(scene_path)
    trace = record["trace"]
    grid = _replay_map(scene, trace, config)
    if grid.height == 0:
        grid = OccupancyGrid.empty(config.resolution)
        grid = merge_patch(grid, points_to_local_patch(
            [], (config.height_clip_min, config.height_clip_max),
            config.resolution, (Pose(*record["spec"]["start"]).x,
                                Pose(*record["spec"]["start"]).y)))
    poses = [Pose(*record["spec"]["start"])] + [Pose(*rec["pose"]) for rec in trace]
    blocks = build_blocks(grid, config.block_size)

    with open(args.out + ".map.pgm", "wb") as fh:
        fh.write(grid_to_pgm(grid))
    context = render_context_image(grid, blocks, poses[-1], poses)
    with open(args.out + ".context.ppm", "wb") as fh:
        fh.write(context)

    from .imaging import decode_ppm, encode_ppm
    from .exploration import CONTEXT_SCALE, _world_to_pixel
    canvas = decode_ppm(context)
    plan = record.get("final_plan") or []
    if len(plan) >= 2:
        px = [_world_to_pixel(grid, x, y, CONTEXT_SCALE) for x, y in plan]
        for a, b in zip(px[:-1], px[1:]):
            draw_line(canvas, a[0], a[1], b[0], b[1], (255, 128, 0))
    with open(args.out + ".path.ppm", "wb") as fh:
        fh.write(encode_ppm(canvas))
    print(f"wrote {args.out}.map.pgm, {args.out}.context.ppm, {args.out}.path.ppm")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypernav")
    parser.add_argument("--config", default=None, help="flat JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenes", help="generate procedural scene files")
    g.add_argument("--seeds", required=True, help="N or LO-HI")
    g.add_argument("--rooms", type=int, default=4)
    g.add_argument("--size", type=_parse_size, default=(64, 64))
    g.add_argument("--objects", default="bed,plant,toilet",
                   help="comma-separated category list")
    g.add_argument("--out", required=True)

    r = sub.add_parser("run", help="run one episode")
    r.add_argument("--scene", required=True)
    r.add_argument("--goal", required=True)
    r.add_argument("--advisor", default=None,
                   help="heuristic | script:FILE | URL (default: config advisor_url or heuristic)")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--max-steps", type=int, default=None)
    r.add_argument("--trace", default=None, help="write the full result JSONL here")

    b = sub.add_parser("batch", help="run all (scene, goal) pairs")
    b.add_argument("--scenes", required=True, help="directory of scene JSON files")
    b.add_argument("--goals", required=True, help="JSON array of goal categories")
    b.add_argument("--advisor", default=None)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--max-steps", type=int, default=None)
    b.add_argument("--parallelism", type=int, default=1)
    b.add_argument("--out", required=True, help="results JSONL path")

    v = sub.add_parser("render", help="render images from a results file")
    v.add_argument("--trace", required=True, help="results JSONL from run/batch")
    v.add_argument("--index", type=int, default=0)
    v.add_argument("--scene", default=None, help="override the recorded scene path")
    v.add_argument("--out", required=True, help="output path prefix")
    return parser


_COMMANDS = {
    "gen-scenes": cmd_gen_scenes,
    "run": cmd_run,
    "batch": cmd_batch,
    "render": cmd_render,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except HyperNavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
