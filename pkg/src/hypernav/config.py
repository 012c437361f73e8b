"""Flat key/value configuration for the whole navigation stack.

Every tunable lives here with its default; config files are flat JSON with
exactly these keys, and any ``HYPERNAV_<KEY>`` environment variable overrides
the corresponding key at load time.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

from .errors import ConfigError

ENV_PREFIX = "HYPERNAV_"


@dataclass(frozen=True)
class Config:
    # world / kinematics
    resolution: float = 0.05            # meters per cell
    robot_radius: float = 0.18          # meters
    forward_step: float = 0.5           # meters per Forward action
    turn_deg: float = 30.0              # degrees per turn action
    wall_height: float = 4.0            # meters, generated walls

    # egocentric sensor (stand-in values; the target platform either does not
    # publish these or they are deployment-specific, so they are config keys)
    sensor_width: int = 640
    sensor_height: int = 480
    sensor_hfov_deg: float = 79.0
    sensor_max_range: float = 5.0       # meters
    sensor_mount_height: float = 0.8    # meters

    # mapping
    height_clip_min: float = 0.2        # meters, occupancy voxel band
    height_clip_max: float = 1.2

    # goal detection / projection refinement
    min_visible_fraction: float = 0.15
    max_det_range: float = 4.0          # meters
    goal_erosion_kernel: int = 3
    goal_erosion_iterations: int = 1
    goal_dilation_kernel: int = 5
    goal_dilation_iterations: int = 3

    # global perception
    block_size: int = 48                # cells
    vicinity_radius: float = 1.0        # meters, visited-memory exclusion
    endurance_limit: int = 60           # steps before forcing a new destination
    destination_reached_radius: float = 0.5  # meters
    initial_scan_steps: int = 12        # in-place turns before first query

    # planner / follower
    replan_interval: int = 10           # steps
    turn_threshold_deg: float = 15.0
    waypoint_radius: float = 0.25       # meters, waypoint consumption

    # episode
    success_radius: float = 1.0         # meters
    max_steps: int = 500

    # advisor endpoint + prompts
    advisor_url: str = ""
    advisor_timeout: float = 30.0
    advisor_max_retries: int = 3
    advisor_prompt_template: str = (
        "To find {goal}, which block should you go? Answer with a single block number."
    )
    advisor_exclusion_template: str = " Don't answer number [{ids}]."
    verify_prompt_template: str = "Is there a {goal} in this image? Answer yes or no."

    def __post_init__(self) -> None:
        positive = (
            "resolution", "robot_radius", "forward_step", "turn_deg", "wall_height",
            "sensor_width", "sensor_height", "sensor_hfov_deg", "sensor_max_range",
            "block_size", "vicinity_radius", "destination_reached_radius",
            "replan_interval", "success_radius", "max_steps", "advisor_timeout",
            "advisor_max_retries", "goal_erosion_kernel", "goal_dilation_kernel",
            "min_visible_fraction", "max_det_range", "waypoint_radius",
        )
        for key in positive:
            if getattr(self, key) <= 0:
                raise ConfigError(f"config key '{key}' must be positive")
        if self.height_clip_min >= self.height_clip_max:
            raise ConfigError("height_clip_min must be below height_clip_max")
        if self.goal_erosion_kernel % 2 == 0 or self.goal_dilation_kernel % 2 == 0:
            raise ConfigError("morphology kernels must be odd")
        if self.min_visible_fraction > 1.0:
            raise ConfigError("min_visible_fraction must be in (0, 1]")
        for key in ("endurance_limit", "initial_scan_steps", "goal_erosion_iterations",
                    "goal_dilation_iterations"):
            if getattr(self, key) < 0:
                raise ConfigError(f"config key '{key}' must be non-negative")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **kwargs) -> "Config":
        return dataclasses.replace(self, **kwargs)


_FIELDS = {f.name: f.type for f in dataclasses.fields(Config)}


def config_from_dict(data: dict) -> Config:
    unknown = set(data) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    coerced = {}
    for key, value in data.items():
        default = getattr(Config, key)
        if isinstance(default, bool):
            ok = isinstance(value, bool)
        elif isinstance(default, int):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif isinstance(default, float):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            value = float(value)
        else:
            ok = isinstance(value, str)
        if not ok:
            raise ConfigError(f"config key '{key}' has wrong type: {value!r}")
        coerced[key] = value
    return Config(**coerced)


def _apply_env(data: dict, env) -> dict:
    out = dict(data)
    for key in _FIELDS:
        raw = env.get(ENV_PREFIX + key.upper())
        if raw is None:
            continue
        default = getattr(Config, key)
        if isinstance(default, str):
            out[key] = raw
        else:
            try:
                out[key] = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"cannot parse env override for '{key}': {raw!r}") from exc
    return out


def load_config(path: str | None = None, env=None) -> Config:
    """Load config from an optional JSON file, then apply env overrides."""
    env = os.environ if env is None else env
    data: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    return config_from_dict(_apply_env(data, env))


def save_config(config: Config, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
