"""Evaluation harness: seeded episodes with the deterministic policy, metrics,
JSON-lines trajectory logs, per-episode replay tables and the raycast benchmark."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import RunConfig, ScenarioEntry, make_task_env, task_entries
from .dynamics import VehicleState
from .env import CRASH, OFF_ROAD, SUCCESS, TIMEOUT, EpisodeOutcome, density_label
from .sensing import LidarConfig, beam_angles, ray_distances, vehicle_segments

METRIC_COLUMNS = ("configuration", "density_label", "episodes", "successes", "crashes", "offroad", "timeouts",
                  "success_rate", "completion_time_s")
REPLAY_COLUMNS = ("time", "x", "y", "speed", "action", "reward")
TRAJECTORY_SCHEMA = "junctionrl.trajectory/1"


class EpisodeNotFound(LookupError):
    pass


@dataclass(frozen=True)
class Metrics:
    episodes: int
    successes: int
    crashes: int
    offroad: int
    timeouts: int
    success_rate: float
    completion_time: float | None

    @classmethod
    def from_outcomes(cls, outcomes: Sequence[EpisodeOutcome]) -> "Metrics":
        """Success rate over all episodes; completion time averaged over successes only."""
        labels = [o.classification for o in outcomes]
        n = len(labels)
        done = [o.duration for o in outcomes if o.classification == SUCCESS]
        return cls(n, len(done), labels.count(CRASH), labels.count(OFF_ROAD), labels.count(TIMEOUT),
                   len(done) / n if n else 0.0, float(np.mean(done)) if done else None)


Policy = Callable[[np.ndarray], np.ndarray]


def run_episode(env, policy: Policy, seed: int, episode_id: int = 0, log: list | None = None):
    """Roll one episode; optionally append step and end records to ``log``."""
    obs = env.reset(seed)
    total = 0.0
    step = 0
    while True:
        action = np.asarray(policy(obs), dtype=float).reshape(-1)
        res = env.step(action)
        step += 1
        total += res.reward
        if log is not None:
            e = env.ego
            log.append({"type": "step", "episode_id": episode_id, "step": step, "sim_time": res.info["sim_time"],
                        "x": e.x, "y": e.y, "heading": e.heading, "speed": e.speed, "steering": e.steering,
                        "action": [float(a) for a in action], "reward": res.reward,
                        "flags": {"crashed": bool(res.info["crashed_this_step"]),
                                  "off_road": bool(res.info["off_road_this_step"]),
                                  "arrived": bool(res.info["arrived"])},
                        "checkpoint_index": res.info["checkpoint_index"]})
        if res.terminated or res.truncated:
            break
        obs = res.observation
    out = env.outcome()
    if log is not None:
        log.append({"type": "end", "episode_id": episode_id, "steps": step, "outcome": out.classification,
                    "duration": out.duration, "collided_ever": out.collided_ever, "return": total})
    return out, total


def evaluate(cfg: RunConfig, policy: Policy, *, episodes: int | None = None,
             entries: Iterable[ScenarioEntry] | None = None, log: list | None = None) -> dict[str, Metrics]:
    """``episodes`` seeded runs per configuration; seeds are ``eval_base + i`` for every configuration."""
    n = cfg.eval.episodes if episodes is None else episodes
    results = {}
    episode_id = 0
    for entry in entries if entries is not None else task_entries(cfg):
        env = make_task_env(cfg, entry, "eval", None)
        outcomes = []
        for i in range(n):
            seed = cfg.seeds.eval_base + i
            if log is not None:
                log.append({"type": "episode", "episode_id": episode_id, "configuration": env.config_id,
                            "episode_seed": seed, "task": cfg.task, "kind": entry.kind, "density": entry.density})
            out, _ = run_episode(env, policy, seed, episode_id, log)
            outcomes.append(out)
            episode_id += 1
        results[env.config_id] = Metrics.from_outcomes(outcomes)
    return results


def _fmt(v: float) -> str:
    return repr(float(v))


def metrics_csv(metrics: dict[str, Metrics], densities: dict[str, float] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for name, m in metrics.items():
        label = name.split("@", 1)[1] if "@" in name else density_label((densities or {}).get(name, 0.0))
        w.writerow([name, label, m.episodes, m.successes, m.crashes, m.offroad, m.timeouts, _fmt(m.success_rate),
                    "" if m.completion_time is None else _fmt(m.completion_time)])
    return buf.getvalue()


def trajectory_jsonl(records: Sequence[dict], config_hash: str = "") -> str:
    head = {"type": "header", "schema": TRAJECTORY_SCHEMA, "config_hash": config_hash}
    return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in [head, *records])


def read_trajectory(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def check_log_integrity(records: Sequence[dict]) -> None:
    """Records ordered by (episode_id, step) and every episode closed by exactly one end record."""
    open_ep, last = None, (-1, 0)
    closed = set()
    for r in records:
        t = r.get("type")
        if t == "header":
            continue
        if t == "episode":
            if open_ep is not None:
                raise ValueError(f"episode {open_ep} not closed before {r['episode_id']}")
            open_ep = r["episode_id"]
            last = (open_ep, 0)
        elif t == "step":
            key = (r["episode_id"], r["step"])
            if r["episode_id"] != open_ep or key <= last:
                raise ValueError(f"out-of-order step record {key}")
            last = key
        elif t == "end":
            if r["episode_id"] != open_ep or r["episode_id"] in closed:
                raise ValueError(f"unexpected end record for episode {r['episode_id']}")
            closed.add(open_ep)
            open_ep = None
        else:
            raise ValueError(f"unknown record type {t!r}")
    if open_ep is not None:
        raise ValueError(f"episode {open_ep} has no end record")


def episode_records(records: Sequence[dict], episode_id: int) -> tuple[dict, list[dict], dict]:
    head = next((r for r in records if r.get("type") == "episode" and r["episode_id"] == episode_id), None)
    if head is None:
        raise EpisodeNotFound(f"episode {episode_id} is not in the log")
    steps = [r for r in records if r.get("type") == "step" and r["episode_id"] == episode_id]
    end = next(r for r in records if r.get("type") == "end" and r["episode_id"] == episode_id)
    return head, steps, end


def replay_csv(records: Sequence[dict], episode_id: int) -> str:
    _, steps, _ = episode_records(records, episode_id)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPLAY_COLUMNS)
    for r in steps:
        w.writerow([_fmt(r["sim_time"]), _fmt(r["x"]), _fmt(r["y"]), _fmt(r["speed"]),
                    " ".join(_fmt(a) for a in r["action"]), _fmt(r["reward"])])
    return buf.getvalue()


def resimulate(cfg: RunConfig, records: Sequence[dict], episode_id: int) -> list[tuple[float, float, float]]:
    """Re-run the logged actions from the logged seed; returns the (x, y, heading) after each decision."""
    head, steps, _ = episode_records(records, episode_id)
    entry = ScenarioEntry(head["kind"], head["density"])
    env = make_task_env(cfg, entry, "eval", None)
    env.reset(head["episode_seed"])
    poses = []
    for r in steps:
        env.step(r["action"])
        poses.append((env.ego.x, env.ego.y, env.ego.heading))
    return poses


# ---------------------------------------------------------------------------
# raycast benchmark


@dataclass(frozen=True)
class BenchResult:
    scenes: int
    beam_count: int
    mean_s: float
    p99_s: float
    raycasts_per_s: float
    digest: str


def scene_battery(n: int = 50, vehicles: int = 12, seed: int = 7, empty: bool = False) -> list[tuple[VehicleState, np.ndarray]]:
    """Fixed synthetic scenes: an ego at the origin among randomly posed vehicles."""
    rng = np.random.default_rng(seed)
    scenes = []
    for _ in range(n):
        ego = VehicleState(0.0, 0.0, float(rng.uniform(-math.pi, math.pi)))
        if empty:
            segs = np.empty((0, 4))
        else:
            others = []
            while len(others) < vehicles:
                x, y = rng.uniform(-40, 40, size=2)
                if math.hypot(x, y) > 4.0:
                    others.append(VehicleState(float(x), float(y), float(rng.uniform(-math.pi, math.pi))))
            segs = vehicle_segments(others)
        scenes.append((ego, segs))
    return scenes


def raycast_bench(scenes, lidar: LidarConfig = LidarConfig(), repeats: int = 5) -> BenchResult:
    times = []
    h = hashlib.sha256()
    for ego, segs in scenes:
        angles = beam_angles(ego, lidar)
        for r in range(repeats):
            t0 = time.perf_counter()
            d = ray_distances(ego.x, ego.y, angles, segs, lidar.max_range)
            times.append(time.perf_counter() - t0)
        h.update(np.ascontiguousarray(d).tobytes())
    times = np.array(times) if times else np.array([0.0])
    mean = float(times.mean())
    return BenchResult(len(scenes), lidar.beam_count, mean, float(np.percentile(times, 99)),
                       1.0 / mean if mean > 0 else float("inf"), h.hexdigest()[:16])
