# End to end: seeded scenes, full episodes with the frontier advisor, and the
# SR/SPL report. Equivalent to `hypernav batch` with the heuristic advisor.

import os
import time

from hypernav import (Config, EpisodeSpec, FrontierHeuristicAdvisor, aggregate,
                      generate_scene, random_start_pose, run_episode)
from hypernav.episode import write_results_jsonl
from hypernav.world import SceneParams

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

# 64x64 cells at 0.15 m/cell: a 9.6 m flat with rooms proportionate to the
# fixed 0.5 m stride; a smaller sensor keeps the demo quick
config = Config(resolution=0.15, block_size=12, sensor_width=96, sensor_height=72)
params = SceneParams(resolution=config.resolution)

results = []
t0 = time.perf_counter()
for seed in range(1, 9):
    scene = generate_scene(seed, params)
    goal = ("bed", "plant", "toilet")[seed % 3]
    start = random_start_pose(scene, seed * 1000 + 7)
    spec = EpisodeSpec(scene=scene.name, start=start, goal_category=goal,
                       success_radius=1.0, max_steps=500, seed=seed)
    result = run_episode(scene, spec, config, FrontierHeuristicAdvisor())
    results.append(result)
    print(f"{scene.name} goal={goal:7s} "
          f"{'SUCCESS' if result.success else 'FAIL   '} "
          f"steps={result.steps:3d} traveled={result.traveled_length:5.1f} m "
          f"shortest={result.shortest_length:4.1f} m spl={result.spl:.2f}")

report = aggregate(results)
print(f"\n{report['episodes']} episodes in {time.perf_counter() - t0:.1f}s: "
      f"SR={report['SR']:.2f} SPL={report['SPL']:.3f}")

path = os.path.join(OUT, "benchmark.jsonl")
write_results_jsonl(results, path)
print("full traces written to", path)
