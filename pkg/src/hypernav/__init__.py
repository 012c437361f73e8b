"""Hybrid local/global perception object-goal navigation sandbox.

A deterministic gridworld simulator plus the full navigation stack evaluated
on it: egocentric depth/semantic sensing, incremental occupancy mapping,
oracle goal detection with projection refinement, block-based exploration
driven by a pluggable advisor (frontier heuristic, scripted, or an external
VLM behind an HTTP endpoint), A* planning with a discrete follower, and
SR/SPL episode evaluation.
"""

from .advisor import (AdvisorAnswer, AdvisorEndpoint, AdvisorQuery, HttpAdvisor,
                      ScriptedAdvisor, query_advisor, summarize_answer,
                      verify_goal_present)
from .config import Config, load_config, save_config
from .episode import (EpisodeResult, EpisodeSpec, TerminationStatus, aggregate,
                      check_termination, compute_spl, run_episode)
from .errors import (AdvisorError, AdvisorProtocolError, AdvisorUnavailable,
                     AggregationError, ConfigError, HyperNavError, NoPathError,
                     PlanningError, SceneGenerationError)
from .exploration import (BlockGrid, FrontierHeuristicAdvisor, NavState,
                          VisitedMemory, build_blocks, choose_block,
                          frontier_advisor, render_context_image,
                          should_update_destination)
from .mapping import (FREE, OBSTACLE, UNKNOWN, OccupancyGrid, depth_to_points,
                      grid_to_pgm, merge_patch, points_to_local_patch)
from .morphology import binary_dilate, binary_erode
from .perception import (DetectionResult, Detector, DetectorParams, GoalRegion,
                         OracleDetector, detect_goal, dilate_goal, project_goal,
                         refine_mask)
from .planner import (Costmap, PathPlan, astar, follow_step, inflate_obstacles,
                      nearest_free, needs_replan)
from .world import (Action, CameraIntrinsics, ObjectInstance, Pose, Scene,
                    SceneParams, generate_scene, geodesic_shortest_length,
                    load_scene, random_start_pose, render_depth, render_semantic,
                    render_views, save_scene, scene_from_json, scene_to_json,
                    step_action)

__version__ = "0.1.0"
