"""Driving MDP: observation assembly, reward, termination, decision repeat and the
multi-configuration environment pool."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import DT, VehicleParams, VehicleState, check_collision, map_action, step_vehicle
from .geometry import (CAPTURE_RADIUS, CHECKPOINT_INTERVAL, Navigator, PlanningError, RoadNetwork, Route,
                       ScenarioSpec, build_scenario, distance_to_boundary, plan_route)
from .sensing import LidarConfig, V2XConfig, raycast, v2x_query, vehicle_segments
from .traffic import Hdv, PlacementError, TrafficConfig, spawn_traffic, step_traffic

OBS_DIM = 273
EGO_DIM, NAV_DIM, V2X_SLOT = 6, 3, 6

SUCCESS, CRASH, OFF_ROAD, TIMEOUT = "success", "crash", "off_road", "timeout"


class ResetError(RuntimeError):
    pass


class UsageError(RuntimeError):
    pass


@dataclass(frozen=True)
class RewardConfig:
    c1: float = 0.1
    c2: float = 0.2
    r_term: float = 10.0
    p_crash: float = 5.0
    p_out: float = 5.0
    reshaped: bool = True
    reward_scale: float = 1.0
    # "negated": displacement term moved into the penalty group as written;
    # "remaining": penalty proportional to the remaining route distance
    disp_mode: str = "negated"

    def __post_init__(self):
        for name in ("c1", "c2", "r_term", "p_crash", "p_out"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.disp_mode not in ("negated", "remaining"):
            raise ValueError(f"unknown disp_mode {self.disp_mode!r}")


def compute_reward(prev_s: float, curr_s: float, speed: float, *, arrived: bool, crashed: bool,
                   off_road: bool, cfg: RewardConfig, v_max: float, remaining: float | None = None,
                   route_length: float | None = None) -> float:
    r_speed = speed / v_max
    r_disp = curr_s - prev_s
    r_term = cfg.r_term if arrived else 0.0
    penalty = cfg.p_crash * crashed + cfg.p_out * off_road
    if not cfg.reshaped:
        r = r_term + (cfg.c1 * r_speed + cfg.c2 * r_disp) - penalty
    elif cfg.disp_mode == "remaining" and remaining is not None:
        r = r_term + cfg.c1 * r_speed - (cfg.c2 * remaining / max(route_length or 1.0, 1e-9) + penalty)
    else:
        r = r_term + cfg.c1 * r_speed - (cfg.c2 * r_disp + penalty)
    return r * cfg.reward_scale


@dataclass(frozen=True)
class EpisodeOutcome:
    classification: str
    duration: float
    collided_ever: bool


@dataclass
class EpisodeTrace:
    reached: bool = False
    collided_ever: bool = False
    ended_off_road: bool = False
    decisions: int = 0


def classify_outcome(trace: EpisodeTrace, decision_dt: float = 10 * DT) -> EpisodeOutcome:
    if trace.reached and not trace.collided_ever:
        label = SUCCESS
    elif trace.collided_ever:
        label = CRASH
    elif trace.ended_off_road:
        label = OFF_ROAD
    else:
        label = TIMEOUT
    return EpisodeOutcome(label, round(trace.decisions * decision_dt, 9), trace.collided_ever)


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool
    info: dict


@dataclass(frozen=True)
class EnvConfig:
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    mode: str = "train"
    max_steps: int = 1000
    decision_repeat: int = 10
    dt: float = DT
    arrival_radius: float = 5.0
    spawn_clearance: float = 15.0
    use_v2x: bool = True
    checkpoint_interval: float = CHECKPOINT_INTERVAL
    capture_radius: float = CAPTURE_RADIUS
    vehicle: VehicleParams = VehicleParams()
    traffic: TrafficConfig = TrafficConfig()
    lidar: LidarConfig = LidarConfig()
    v2x: V2XConfig = V2XConfig()
    reward: RewardConfig = RewardConfig()

    def __post_init__(self):
        if self.mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {self.mode!r}")


def _clip(v: float, lo: float = -1.0, hi: float = 1.0) -> float:
    return lo if v < lo else hi if v > hi else v


class DrivingEnv:
    """One ego vehicle among parked/triggered HDVs in a seeded scenario."""

    observation_dim = OBS_DIM
    action_dim = 2

    def __init__(self, cfg: EnvConfig = EnvConfig(), seed: int | None = None, config_id: str = ""):
        self.cfg = cfg
        self.config_id = config_id
        self.net: RoadNetwork = build_scenario(cfg.scenario)
        self._seed_rng = np.random.default_rng(seed)
        self._reachable = self._reachable_destinations(self.net)
        self._done = True
        self.episode_seed: int | None = None

    @staticmethod
    def _reachable_destinations(net: RoadNetwork) -> list[list[tuple[str, float]]]:
        table = []
        for sp in net.spawn_points:
            ok = []
            for de in net.destinations:
                try:
                    plan_route(net, sp, de)
                except PlanningError:
                    continue
                ok.append(de)
            table.append(ok)
        return table

    # -- episode control -------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is None:
            seed = int(self._seed_rng.integers(2**31 - 1))
        self.episode_seed = seed
        rng = np.random.default_rng(seed)
        self.rng = rng
        cfg, net = self.cfg, self.net
        candidates = [i for i, d in enumerate(self._reachable) if d]
        if not candidates:
            raise ResetError("scenario has no spawn point with a reachable destination")
        sp_idx = candidates[int(rng.integers(len(candidates)))]
        dests = self._reachable[sp_idx]
        dest = dests[int(rng.integers(len(dests)))]
        self.route: Route = plan_route(net, net.spawn_points[sp_idx], dest, cfg.checkpoint_interval)
        x, y = self.route.path.point(0.0)
        vp = cfg.vehicle
        self.ego = VehicleState(x, y, self.route.path.heading(0.0), 0.0, 0.0, vp.length, vp.width)
        try:
            self.hdvs: list[Hdv] = spawn_traffic(net, cfg.scenario.traffic_density, rng, cfg.traffic, vp,
                                                 exclude=[(x, y, cfg.spawn_clearance)])
        except PlacementError as exc:
            raise ResetError(str(exc)) from exc
        self.navigator = Navigator(self.route, cfg.capture_radius)
        self.route_s = 0.0
        self.steps = 0
        self.trace = EpisodeTrace()
        self._v2x_history: deque = deque(maxlen=cfg.v2x.latency_steps + 1)
        self._done = False
        return self.observe()

    def _others(self) -> list[VehicleState]:
        return [h.state for h in self.hdvs if not h.finished]

    def observe(self) -> np.ndarray:
        cfg, ego, vp = self.cfg, self.ego, self.cfg.vehicle
        obs = np.zeros(OBS_DIM)
        left, right = distance_to_boundary(self.net, ego.x, ego.y, ego.heading)
        obs[0:EGO_DIM] = (_clip(ego.speed / vp.v_max), _clip(ego.steering / vp.s_max), math.cos(ego.heading),
                          math.sin(ego.heading), _clip(left / 10.0), _clip(right / 10.0))
        dist, bearing = self.navigator.features(ego.x, ego.y, ego.heading, self.route_s)
        obs[EGO_DIM:EGO_DIM + NAV_DIM] = (_clip(dist / 50.0), math.sin(bearing), math.cos(bearing))
        others = self._others()
        segs = np.vstack([self.net.segments, vehicle_segments(others)]) if others else self.net.segments
        lidar = raycast(segs, ego, cfg.lidar, self.rng)
        k0 = EGO_DIM + NAV_DIM
        obs[k0:k0 + cfg.lidar.beam_count] = lidar
        k1 = k0 + cfg.lidar.beam_count
        if cfg.use_v2x:
            self._v2x_history.append(others)
            seen = self._v2x_history[0]
            if cfg.v2x.dropout > 0:
                keep = self.rng.random(len(seen)) >= cfg.v2x.dropout
                seen = [o for o, k in zip(seen, keep) if k]
            for n, rep in enumerate(v2x_query(seen, ego, cfg.v2x.k)):
                if rep.present:
                    obs[k1 + V2X_SLOT * n:k1 + V2X_SLOT * (n + 1)] = (
                        _clip(rep.dx / 50.0), _clip(rep.dy / 50.0), _clip(rep.speed / vp.v_max),
                        math.sin(rep.relative_heading), math.cos(rep.relative_heading), 1.0)
        return obs

    def tick(self, command) -> tuple[bool, bool, bool]:
        """One physics tick: ego, then traffic; returns (crashed, off_road, arrived)."""
        cfg = self.cfg
        self.ego = step_vehicle(self.ego, command, cfg.vehicle, cfg.dt)
        step_traffic(self.hdvs, self.ego, self.net, cfg.dt, cfg.traffic, cfg.vehicle)
        crashed = any(check_collision(self.ego, h.state) for h in self.hdvs if not h.finished)
        off = not self.net.contains(self.ego.x, self.ego.y)
        dx, dy = self.route.destination
        arrived = math.hypot(self.ego.x - dx, self.ego.y - dy) <= cfg.arrival_radius
        return crashed, off, arrived

    def step(self, action: Sequence[float]) -> StepResult:
        if self._done:
            raise UsageError("step() called on a finished episode; call reset() first")
        cfg = self.cfg
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        cmd = map_action(float(a[0]), float(a[1]), cfg.vehicle)
        crashed = off = arrived = False
        for _ in range(cfg.decision_repeat):
            c, o, arr = self.tick(cmd)
            crashed |= c
            off |= o
            if arr:
                arrived = True
                break
            if cfg.mode == "eval" and (crashed or off):
                break
        self.steps += 1
        prev_s = self.route_s
        s, _, _ = self.route.path.project(self.ego.x, self.ego.y, prev_s - 5.0, prev_s + 10.0)
        self.route_s = s
        reward = compute_reward(prev_s, s, self.ego.speed, arrived=arrived, crashed=crashed, off_road=off,
                                cfg=cfg.reward, v_max=cfg.vehicle.v_max,
                                remaining=self.route.length - s, route_length=self.route.length)
        terminated = arrived or (cfg.mode == "eval" and (crashed or off))
        truncated = not terminated and self.steps >= cfg.max_steps
        tr = self.trace
        tr.decisions = self.steps
        tr.collided_ever |= crashed
        tr.reached |= arrived
        tr.ended_off_road = off and not arrived
        self._done = terminated or truncated
        obs = self.observe()
        info = {"crashed_this_step": crashed, "off_road_this_step": off, "arrived": arrived,
                "checkpoint_index": self.navigator.index, "sim_time": self.steps * cfg.decision_repeat * cfg.dt,
                "route_s": s}
        return StepResult(obs, float(reward), terminated, truncated, info)

    def outcome(self) -> EpisodeOutcome:
        return classify_outcome(self.trace, self.cfg.decision_repeat * self.cfg.dt)


class ReachGoalEnv:
    """Straight three-lane road with no traffic: drive 50 m to a goal point.

    Compact 8-dimensional observation; leaving the road ends the episode.
    """

    observation_dim = 8
    action_dim = 2

    def __init__(self, seed: int | None = None, config_id: str = "reach_goal", *, goal_distance: float = 50.0,
                 max_steps: int = 100, mode: str = "train", vehicle: VehicleParams = VehicleParams(),
                 reward: RewardConfig = RewardConfig(reshaped=False), arrival_radius: float = 5.0,
                 decision_repeat: int = 10, dt: float = DT):
        self.config_id = config_id
        self.goal_distance = goal_distance
        self.max_steps = max_steps
        self.mode = mode
        self.vehicle = vehicle
        self.reward_cfg = reward
        self.arrival_radius = arrival_radius
        self.decision_repeat = decision_repeat
        self.dt = dt
        self.half_width = 3 * 3.5 / 2
        self.start_x = 5.0
        self.goal = (self.start_x + goal_distance, 0.0)
        self._seed_rng = np.random.default_rng(seed)
        self._done = True
        self.episode_seed = None

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is None:
            seed = int(self._seed_rng.integers(2**31 - 1))
        self.episode_seed = seed
        rng = np.random.default_rng(seed)
        vp = self.vehicle
        self.ego = VehicleState(self.start_x, float(rng.uniform(-1.0, 1.0)), float(rng.uniform(-0.1, 0.1)),
                                0.0, 0.0, vp.length, vp.width)
        self.steps = 0
        self.trace = EpisodeTrace()
        self._done = False
        return self.observe()

    def observe(self) -> np.ndarray:
        e, vp = self.ego, self.vehicle
        dx, dy = self.goal[0] - e.x, self.goal[1] - e.y
        bearing = math.atan2(dy, dx) - e.heading
        return np.array([_clip(e.speed / vp.v_max), _clip(e.steering / vp.s_max), math.sin(e.heading),
                         math.cos(e.heading), _clip(e.y / self.half_width), _clip(math.hypot(dx, dy) / 50.0),
                         math.sin(bearing), math.cos(bearing)])

    def step(self, action: Sequence[float]) -> StepResult:
        if self._done:
            raise UsageError("step() called on a finished episode; call reset() first")
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        cmd = map_action(float(a[0]), float(a[1]), self.vehicle)
        prev_s = self.ego.x - self.start_x
        off = arrived = False
        for _ in range(self.decision_repeat):
            self.ego = step_vehicle(self.ego, cmd, self.vehicle, self.dt)
            if math.hypot(self.ego.x - self.goal[0], self.ego.y - self.goal[1]) <= self.arrival_radius:
                arrived = True
                break
            if abs(self.ego.y) > self.half_width:
                off = True
                break
        self.steps += 1
        s = self.ego.x - self.start_x
        reward = compute_reward(prev_s, s, self.ego.speed, arrived=arrived, crashed=False, off_road=off,
                                cfg=self.reward_cfg, v_max=self.vehicle.v_max)
        terminated = arrived or off
        truncated = not terminated and self.steps >= self.max_steps
        self.trace.decisions = self.steps
        self.trace.reached |= arrived
        self.trace.ended_off_road = off
        self._done = terminated or truncated
        info = {"crashed_this_step": False, "off_road_this_step": off, "arrived": arrived,
                "checkpoint_index": 0, "sim_time": self.steps * self.decision_repeat * self.dt, "route_s": s}
        return StepResult(self.observe(), float(reward), terminated, truncated, info)

    def outcome(self) -> EpisodeOutcome:
        return classify_outcome(self.trace, self.decision_repeat * self.dt)


# ---------------------------------------------------------------------------
# multi-configuration pool


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s2: np.ndarray
    done: bool
    config_id: str
    truncated: bool = False


@dataclass
class FinishedEpisode:
    config_id: str
    episode_return: float
    outcome: EpisodeOutcome


class EnvPool:
    """Independently seeded environments, one per configuration, stepped in lockstep."""

    def __init__(self, envs: Sequence):
        if not envs:
            raise ValueError("pool needs at least one environment")
        self.envs = list(envs)
        self.obs = [env.reset() for env in self.envs]
        self.returns = [0.0] * len(self.envs)
        self.finished: list[FinishedEpisode] = []

    def __len__(self) -> int:
        return len(self.envs)

    @property
    def observation_dim(self) -> int:
        return self.envs[0].observation_dim

    def step_all(self, actions: np.ndarray) -> list[Transition]:
        out = []
        for k, env in enumerate(self.envs):
            res = env.step(actions[k])
            out.append(Transition(self.obs[k], np.asarray(actions[k], dtype=float), res.reward, res.observation,
                                  res.terminated, env.config_id, res.truncated))
            self.returns[k] += res.reward
            if res.terminated or res.truncated:
                self.finished.append(FinishedEpisode(env.config_id, self.returns[k], env.outcome()))
                self.returns[k] = 0.0
                self.obs[k] = env.reset()
            else:
                self.obs[k] = res.observation
        return out


def pool_collect(pool: EnvPool, policy: Callable[[np.ndarray], np.ndarray], steps_per_env: int) -> list[Transition]:
    """Roll the shared policy ``steps_per_env`` decisions in every environment (interleaved)."""
    out = []
    for _ in range(steps_per_env):
        actions = policy(np.stack(pool.obs))
        out += pool.step_all(actions)
    return out


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    g = 0.0
    for r in reversed(rewards):
        g = r + gamma * g
    return g


def make_env(cfg: EnvConfig, seed: int | None = None, config_id: str = "") -> DrivingEnv:
    return DrivingEnv(cfg, seed=seed, config_id=config_id)


def density_label(density: float) -> str:
    if abs(density - 0.1) < 1e-9:
        return "regular"
    if abs(density - 0.2) < 1e-9:
        return "dense"
    return f"{density:g}"
