import numpy as np

from hypernav.advisor import AdvisorQuery, ScriptedAdvisor
from hypernav.exploration import (NavState, VisitedMemory, build_blocks,
                                  choose_block, destination_update_reason,
                                  frontier_advisor, frontier_cells,
                                  render_context_image, should_update_destination)
from hypernav.imaging import decode_ppm, digit_mask
from hypernav.mapping import FREE, OBSTACLE, UNKNOWN, OccupancyGrid
from hypernav.perception import GoalRegion
from hypernav.world import Pose


def grid_of(cells, origin=(0, 0), res=0.05):
    return OccupancyGrid(res, origin[0], origin[1],
                         np.asarray(cells, dtype=np.uint8))


def query_for(blocks, image=b"img", goal="bed", excluded=()):
    return AdvisorQuery(context_image=image, goal_category=goal,
                        excluded_ids=tuple(excluded), valid_ids=blocks.valid_ids())


# ---------------------------------------------------------------------------
# build_blocks

def test_full_grid_four_blocks_row_major():
    cells = np.full((96, 96), FREE, dtype=np.uint8)
    blocks = build_blocks(grid_of(cells), 48)
    assert blocks.valid_ids() == (1, 2, 3, 4)
    assert blocks.blocks[1].row0 == 0 and blocks.blocks[1].col0 == 0
    assert blocks.blocks[2].col0 == 48
    assert blocks.blocks[3].row0 == 48


def test_partial_exploration_single_block():
    cells = np.full((96, 96), UNKNOWN, dtype=np.uint8)
    cells[10, 10] = FREE
    blocks = build_blocks(grid_of(cells), 48)
    assert blocks.valid_ids() == (1,)
    assert blocks.blocks[1].contains(10, 10)


def test_blocks_deterministic():
    rng = np.random.default_rng(3)
    cells = rng.integers(0, 3, size=(96, 96)).astype(np.uint8)
    a = build_blocks(grid_of(cells), 48)
    b = build_blocks(grid_of(cells), 48)
    assert a.valid_ids() == b.valid_ids()
    assert all(a.blocks[i] == b.blocks[i] for i in a.blocks)


def test_empty_grid_empty_blocks():
    blocks = build_blocks(OccupancyGrid.empty(0.05), 48)
    assert not blocks


# ---------------------------------------------------------------------------
# context image

def make_explored_grid():
    cells = np.full((96, 96), FREE, dtype=np.uint8)
    cells[:, 0] = OBSTACLE
    cells[0, :] = OBSTACLE
    cells[40:50, 40:50] = UNKNOWN
    return grid_of(cells)


def test_context_image_deterministic_bytes():
    grid = make_explored_grid()
    blocks = build_blocks(grid, 48)
    pose = Pose(1.0, 1.0, 0.5)
    traj = [Pose(0.5, 0.5, 0), Pose(0.8, 0.7, 0), pose]
    a = render_context_image(grid, blocks, pose, traj)
    b = render_context_image(grid, blocks, pose, traj)
    assert a == b
    assert a.startswith(b"P6\n")


def test_context_image_matches_golden_file():
    from conftest import DATA_DIR
    grid = make_explored_grid()
    blocks = build_blocks(grid, 48)
    pose = Pose(1.0, 1.0, 0.5)
    traj = [Pose(0.5, 0.5, 0), Pose(0.8, 0.7, 0), pose]
    golden = (DATA_DIR / "context_golden.ppm").read_bytes()
    assert render_context_image(grid, blocks, pose, traj) == golden


def test_context_image_numerals_at_block_centers():
    grid = make_explored_grid()
    blocks = build_blocks(grid, 48)
    img = decode_ppm(render_context_image(grid, blocks, Pose(1.0, 1.0, 0.0), []))
    scale = 4
    for bid, blk in blocks.blocks.items():
        mask = digit_mask(str(bid), scale=3)
        cx, cy = blk.center_xy(0.05)
        pc = int((cx / 0.05 - grid.origin_col) * scale)
        pr = int((grid.origin_row + grid.height - cy / 0.05) * scale)
        r0 = pr - mask.shape[0] // 2
        c0 = pc - mask.shape[1] // 2
        window = img[r0:r0 + mask.shape[0], c0:c0 + mask.shape[1]]
        red = (window == np.array([255, 0, 0])).all(axis=2)
        assert (red == mask).all(), f"numeral {bid} not rendered at center"


def test_context_image_empty_trajectory_has_no_green():
    grid = make_explored_grid()
    blocks = build_blocks(grid, 48)
    img = decode_ppm(render_context_image(grid, blocks, Pose(1.0, 1.0, 0.0), []))
    green = (img == np.array([0, 180, 0])).all(axis=2)
    assert not green.any()
    img2 = decode_ppm(render_context_image(grid, blocks, Pose(1.0, 1.0, 0.0),
                                           [Pose(0.5, 0.5, 0), Pose(2.0, 2.0, 0)]))
    green2 = (img2 == np.array([0, 180, 0])).all(axis=2)
    assert green2.any()


# ---------------------------------------------------------------------------
# frontier advisor

def frontier_setup():
    cells = np.full((96, 96), UNKNOWN, dtype=np.uint8)
    cells[:48, :] = FREE            # explored top half; frontier along row 47
    return grid_of(cells)


def test_frontier_cells_on_boundary():
    grid = frontier_setup()
    cells = frontier_cells(grid)
    assert len(cells) > 0
    assert set(cells[:, 0].tolist()) == {47}


def test_frontier_advisor_nearest_block():
    grid = frontier_setup()
    blocks = build_blocks(grid, 48)     # blocks 1,2 explored (top), 3,4 partial
    pose = Pose(0.3, 0.3, 0.0)          # near block 1 side
    ans = frontier_advisor(query_for(blocks), blocks, grid, pose)
    assert ans.raw_text == "1"
    pose = Pose(95 * 0.05, 0.3, 0.0)    # near block 2 side
    ans = frontier_advisor(query_for(blocks), blocks, grid, pose)
    assert ans.raw_text == "2"


def test_frontier_advisor_tie_breaks_lowest_id():
    grid = frontier_setup()
    blocks = build_blocks(grid, 48)
    mid = Pose(48 * 0.05, 0.3, 0.0)     # equidistant frontiers in blocks 1 and 2
    ans = frontier_advisor(query_for(blocks), blocks, grid, mid)
    assert ans.raw_text == "1"


def test_frontier_advisor_exhausted_map_lowest_non_excluded():
    cells = np.full((96, 96), FREE, dtype=np.uint8)   # fully explored
    grid = grid_of(cells)
    blocks = build_blocks(grid, 48)
    ans = frontier_advisor(query_for(blocks, excluded=(1, 2)), blocks, grid,
                           Pose(1, 1, 0))
    assert ans.raw_text == "3"


def test_frontier_advisor_respects_exclusions():
    grid = frontier_setup()
    blocks = build_blocks(grid, 48)
    pose = Pose(0.3, 0.3, 0.0)
    ans = frontier_advisor(query_for(blocks, excluded=(1,)), blocks, grid, pose)
    assert ans.raw_text == "2"


# ---------------------------------------------------------------------------
# destination update flag

def test_update_reason_goal_reached():
    goal = GoalRegion(cells=frozenset({(10, 10)}), source="global")
    state = NavState(endurance_limit=60, short_term_goal=goal, resolution=0.05)
    at_goal = Pose(10.5 * 0.05, 10.5 * 0.05, 0.0)
    assert destination_update_reason(state, at_goal, 0.5) == "reached"
    assert should_update_destination(state, at_goal, 0.5)
    # exactly at the threshold distance still counts as reached
    edge = Pose(10.5 * 0.05 + 0.5, 10.5 * 0.05, 0.0)
    assert destination_update_reason(state, edge, 0.5) == "reached"


def test_update_reason_endurance():
    goal = GoalRegion(cells=frozenset({(100, 100)}), source="global")
    state = NavState(endurance_limit=60, short_term_goal=goal,
                     steps_since_destination=61, resolution=0.05)
    assert destination_update_reason(state, Pose(0, 0, 0), 0.5) == "endurance"
    state.steps_since_destination = 60
    assert destination_update_reason(state, Pose(0, 0, 0), 0.5) is None


def test_update_reason_plan_failed():
    goal = GoalRegion(cells=frozenset({(100, 100)}), source="global")
    state = NavState(endurance_limit=60, short_term_goal=goal,
                     last_plan_failed=True, resolution=0.05)
    assert destination_update_reason(state, Pose(0, 0, 0), 0.5) == "plan_failed"


def test_update_reason_negative_case():
    goal = GoalRegion(cells=frozenset({(100, 100)}), source="global")
    state = NavState(endurance_limit=60, short_term_goal=goal, resolution=0.05)
    assert not should_update_destination(state, Pose(0, 0, 0), 0.5)


# ---------------------------------------------------------------------------
# choose_block

def open_grid():
    cells = np.full((96, 96), FREE, dtype=np.uint8)
    return grid_of(cells)


def test_choose_block_visited_retry_appends_exclusion():
    grid = open_grid()
    blocks = build_blocks(grid, 48)
    memory = VisitedMemory(vicinity_radius=1.0)
    memory.add(blocks.blocks[3].center_xy(0.05))   # block 3 already visited
    advisor = ScriptedAdvisor(["block 3", "block 5 no wait, 1"])
    chosen = choose_block(advisor, query_for(blocks), memory, blocks, grid,
                          Pose(1, 1, 0))
    assert chosen.block_id == 1
    assert chosen.queries == 2
    assert "Don't answer number [3]." in advisor.prompts[1]
    assert blocks.blocks[1].contains(*chosen.cell)


def test_choose_block_single_block_forced():
    cells = np.full((48, 48), FREE, dtype=np.uint8)
    grid = grid_of(cells)
    blocks = build_blocks(grid, 48)
    advisor = ScriptedAdvisor(["go north"])   # unparseable
    chosen = choose_block(advisor, query_for(blocks), memory=VisitedMemory(),
                          blocks=blocks, grid=grid, pose=Pose(1, 1, 0))
    assert chosen.block_id == 1


def test_choose_block_all_obstacle_falls_back_to_nearest_free():
    cells = np.full((96, 96), FREE, dtype=np.uint8)
    cells[48:, :48] = OBSTACLE    # block 3 entirely obstacle
    grid = grid_of(cells)
    blocks = build_blocks(grid, 48)
    advisor = ScriptedAdvisor(["3"])
    chosen = choose_block(advisor, query_for(blocks), VisitedMemory(), blocks,
                          grid, Pose(1, 1, 0))
    assert chosen.block_id == 3
    assert grid.get(*chosen.cell) == FREE


def test_choose_block_retry_budget_respected():
    grid = open_grid()
    blocks = build_blocks(grid, 48)
    memory = VisitedMemory(vicinity_radius=1.0)
    for bid in (1, 2, 3):
        memory.add(blocks.blocks[bid].center_xy(0.05))
    advisor = ScriptedAdvisor(["1", "2", "3", "2", "2", "2"])
    chosen = choose_block(advisor, query_for(blocks), memory, blocks, grid,
                          Pose(1, 1, 0), max_retries=3)
    assert advisor.cursor <= 4            # <= 4 advisor calls
    assert chosen.block_id == 4           # lowest non-excluded after retries


def test_choose_block_advisor_failure_uses_frontier_fallback():
    grid = frontier_setup()
    blocks = build_blocks(grid, 48)
    advisor = ScriptedAdvisor([{"error": "unavailable"}])
    chosen = choose_block(advisor, query_for(blocks), VisitedMemory(), blocks,
                          grid, Pose(0.3, 0.3, 0))
    assert chosen is not None
    assert chosen.used_fallback
    assert chosen.block_id == 1           # frontier answer


def test_visited_exclusion_across_destinations():
    grid = open_grid()
    blocks = build_blocks(grid, 48)
    memory = VisitedMemory(vicinity_radius=1.0)
    picked = []
    for k in range(4):
        advisor = ScriptedAdvisor(["1", "2", "3", "4"])
        chosen = choose_block(advisor, query_for(blocks), memory, blocks, grid,
                              Pose(1, 1, 0))
        picked.append(chosen.xy)
    for i in range(len(picked)):
        for j in range(i + 1, len(picked)):
            d = ((picked[i][0] - picked[j][0]) ** 2
                 + (picked[i][1] - picked[j][1]) ** 2) ** 0.5
            assert d > 1.0, (picked[i], picked[j])
