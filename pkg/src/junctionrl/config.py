"""Run configuration: dataclass defaults, TOML files and command-line overrides.

Precedence is command line > file > defaults. Every key in a file must map onto a
dataclass field; anything else is rejected with its dotted key path.
"""
from __future__ import annotations

import hashlib
import json
import sys
import typing
from dataclasses import dataclass, fields, is_dataclass, replace
from pathlib import Path as FsPath
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamics import DT, VehicleParams
from .env import EnvConfig, EnvPool, ReachGoalEnv, RewardConfig, DrivingEnv, density_label
from .geometry import ScenarioSpec
from .sac import SacConfig
from .sensing import LidarConfig, V2XConfig
from .traffic import TrafficConfig

# Training episode seeds are drawn below 2**31 - 1, so evaluation seeds starting
# here can never coincide with one.
EVAL_SEED_BASE = 2**31


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioEntry:
    kind: str = "t_intersection"
    density: float = 0.1

    @property
    def config_id(self) -> str:
        return f"{self.kind}@{density_label(self.density)}"


@dataclass(frozen=True)
class EnvSection:
    max_steps: int = 1000
    decision_repeat: int = 10
    dt: float = DT
    arrival_radius: float = 5.0
    spawn_clearance: float = 15.0
    use_v2x: bool = True
    checkpoint_interval: float = 10.0
    capture_radius: float = 2.0
    entrance_length: float = 50.0
    lanes_per_approach: int = 3
    lane_width: float = 3.5
    goal_distance: float = 50.0


@dataclass(frozen=True)
class SeedSection:
    master: int = 0
    eval_base: int = EVAL_SEED_BASE


@dataclass(frozen=True)
class EvalSection:
    episodes: int = 100
    trajectory_log: bool = True


@dataclass(frozen=True)
class RunConfig:
    # "driving" trains on the scenario list; "reach_goal" on the traffic-free straight-road task
    task: str = "driving"
    scenarios: tuple[ScenarioEntry, ...] = (ScenarioEntry("t_intersection"), ScenarioEntry("four_way"),
                                            ScenarioEntry("roundabout"))
    env: EnvSection = EnvSection()
    reward: RewardConfig = RewardConfig()
    vehicle: VehicleParams = VehicleParams()
    traffic: TrafficConfig = TrafficConfig()
    lidar: LidarConfig = LidarConfig()
    v2x: V2XConfig = V2XConfig()
    sac: SacConfig = SacConfig()
    seeds: SeedSection = SeedSection()
    eval: EvalSection = EvalSection()
    out: str = "runs/default"

    def __post_init__(self):
        if self.task not in ("driving", "reach_goal"):
            raise ConfigError(f"task: expected 'driving' or 'reach_goal', got {self.task!r}")
        if not self.scenarios:
            raise ConfigError("scenarios: at least one entry is required")


# ---------------------------------------------------------------------------
# dict <-> dataclass


def _build(tp, value, path: str):
    origin = typing.get_origin(tp)
    if is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a table, got {type(value).__name__}")
        return from_dict(tp, value, path)
    if origin is tuple:
        args = typing.get_args(tp)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        inner = args[0]
        return tuple(_build(inner, v, f"{path}[{i}]") for i, v in enumerate(value))
    if tp is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if tp in (int, float, str, bool):
        if not isinstance(value, tp) or (tp is int and isinstance(value, bool)):
            raise ConfigError(f"{path}: expected {tp.__name__}, got {value!r}")
    return value


def from_dict(cls, data: dict, path: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls) if f.init}
    kwargs = {}
    for key, value in data.items():
        full = f"{path}.{key}" if path else key
        if key not in names:
            raise ConfigError(f"unknown configuration key '{full}'")
        kwargs[key] = _build(hints[key], value, full)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def to_dict(obj) -> Any:
    if is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in fields(obj) if f.init}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    return obj


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_override(text: str) -> dict:
    """``a.b.c=value`` to a nested dict; the value is parsed as a TOML literal, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    out: dict = {}
    cur = out
    parts = key.split(".")
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
    cur[parts[-1]] = value
    return out


def load_config(path=None, overrides: list[dict] | None = None) -> RunConfig:
    data = to_dict(RunConfig())
    if path is not None:
        try:
            text = FsPath(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        try:
            file_data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        # validate the file on its own first, so errors name the file's keys
        from_dict(RunConfig, file_data)
        data = _merge(data, file_data)
    for ov in overrides or ():
        data = _merge(data, ov)
    return from_dict(RunConfig, data)


def config_hash(cfg: RunConfig) -> str:
    """Stable digest of the settings that define a training run.

    The step budget and logging cadence are left out so a run can be extended
    from its last checkpoint.
    """
    d = to_dict(cfg)
    d.pop("out", None)
    d.pop("eval", None)
    for key in ("total_steps", "log_interval", "checkpoint_interval"):
        d["sac"].pop(key, None)
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# environment construction


def env_config(cfg: RunConfig, entry: ScenarioEntry, mode: str) -> EnvConfig:
    e = cfg.env
    scen = ScenarioSpec(kind=entry.kind, traffic_density=entry.density, entrance_length=e.entrance_length,
                        lanes_per_approach=e.lanes_per_approach, lane_width=e.lane_width)
    return EnvConfig(scenario=scen, mode=mode, max_steps=e.max_steps, decision_repeat=e.decision_repeat, dt=e.dt,
                     arrival_radius=e.arrival_radius, spawn_clearance=e.spawn_clearance, use_v2x=e.use_v2x,
                     checkpoint_interval=e.checkpoint_interval, capture_radius=e.capture_radius,
                     vehicle=cfg.vehicle, traffic=cfg.traffic, lidar=cfg.lidar, v2x=cfg.v2x, reward=cfg.reward)


def make_task_env(cfg: RunConfig, entry: ScenarioEntry, mode: str, seed: int | None):
    if cfg.task == "reach_goal":
        e = cfg.env
        return ReachGoalEnv(seed, "reach_goal", goal_distance=e.goal_distance, max_steps=min(e.max_steps, 100),
                            mode=mode, vehicle=cfg.vehicle, reward=replace(cfg.reward, reshaped=False),
                            arrival_radius=e.arrival_radius, decision_repeat=e.decision_repeat, dt=e.dt)
    return DrivingEnv(env_config(cfg, entry, mode), seed=seed, config_id=entry.config_id)


def task_entries(cfg: RunConfig) -> tuple[ScenarioEntry, ...]:
    if cfg.task == "reach_goal":
        return (ScenarioEntry("straight", 0.0),)
    return cfg.scenarios


def build_pool(cfg: RunConfig) -> EnvPool:
    """One training environment per configured scenario, seeded from the master seed."""
    ss = np.random.SeedSequence(cfg.seeds.master)
    children = ss.spawn(len(task_entries(cfg)))
    envs = [make_task_env(cfg, entry, "train", int(child.generate_state(1)[0]))
            for entry, child in zip(task_entries(cfg), children)]
    return EnvPool(envs)
