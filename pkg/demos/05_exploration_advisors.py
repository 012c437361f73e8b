# Global perception: ID-labeled blocks, the advisor context image, visited
# memory, and the frontier heuristic baseline.
#
# The advisor sees a top-down context image with numbered blocks and answers
# free text; the text is summarized to a block id, screened against visited
# memory ("Don't answer number [...]"), and converted to a concrete free-cell
# destination.

import os

import numpy as np

from hypernav import (AdvisorQuery, ScriptedAdvisor, VisitedMemory, build_blocks,
                      choose_block, frontier_advisor, render_context_image,
                      summarize_answer)
from hypernav.mapping import FREE, OBSTACLE, UNKNOWN, OccupancyGrid
from hypernav.world import Pose

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

# ## A half-explored map

cells = np.full((96, 96), UNKNOWN, dtype=np.uint8)
cells[:52, :] = FREE
cells[0, :] = OBSTACLE
cells[:52, 0] = OBSTACLE
cells[:52, -1] = OBSTACLE
cells[30, 20:70] = OBSTACLE
grid = OccupancyGrid(resolution=0.1, origin_row=0, origin_col=0, cells=cells)

blocks = build_blocks(grid, block_size=24)
print("labeled blocks:", blocks.valid_ids())

pose = Pose(2.0, 2.0, 0.8)
trajectory = [Pose(1.0, 1.0, 0), Pose(1.5, 1.4, 0), pose]
image = render_context_image(grid, blocks, pose, trajectory)
path = os.path.join(OUT, "context.ppm")
with open(path, "wb") as fh:
    fh.write(image)
print("wrote", path, f"({len(image)} bytes, blocks numbered in red)")

# ## Text answers are distilled to the last valid id

query = AdvisorQuery(context_image=image, goal_category="bed",
                     excluded_ids=(), valid_ids=blocks.valid_ids())
for text in ("I would explore block 3 next.",
             "Either 2 or 4; I choose 4.",
             "go north"):
    from hypernav.advisor import AdvisorAnswer
    print(f"  {text!r:42s} -> {summarize_answer(AdvisorAnswer(text), blocks.valid_ids())}")

# ## The frontier baseline answers the block with the nearest frontier

answer = frontier_advisor(query, blocks, grid, pose)
print("frontier advisor answers:", answer.raw_text)

# ## Visited memory forces a retry with an exclusion prompt

memory = VisitedMemory(vicinity_radius=1.0)
chosen = choose_block(ScriptedAdvisor(["2", "2", "3"]), query, memory, blocks,
                      grid, pose)
print(f"first destination: block {chosen.block_id} cell {chosen.cell}")
advisor = ScriptedAdvisor(["2", "after the exclusion I pick 3"])
chosen = choose_block(advisor, query, memory, blocks, grid, pose)
print(f"second destination: block {chosen.block_id} "
      f"(queries={chosen.queries})")
print("second prompt carried:", advisor.prompts[1].split("?")[-1].strip())
