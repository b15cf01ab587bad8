"""Desk-scale experiment drivers shared by the acceptance suite and scripts/."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, ScenarioEntry, build_pool, config_hash, load_config, parse_override
from .evaluate import Metrics, evaluate
from .sac import Trainer, load_policy


@dataclass(frozen=True)
class ToyTrial:
    master_seed: int
    untrained_success: float
    trained_success: float
    updates: int
    seconds: float


def toy_config(master_seed: int, decisions: int = 20_000, *, dtype: str = "float32", extra=()) -> RunConfig:
    """Straight-road goal task with the default SAC settings and a reduced budget."""
    ovs = [parse_override('task="reach_goal"'), parse_override(f"sac.total_steps={decisions}"),
           parse_override(f'sac.dtype="{dtype}"'), parse_override(f"seeds.master={master_seed}")]
    return load_config(None, ovs + [parse_override(e) for e in extra])


def _deterministic(policy):
    return lambda obs: policy.act(obs, deterministic=True)[0]


def toy_trial(master_seed: int, decisions: int = 20_000, episodes: int = 50, *, dtype: str = "float32",
              extra=()) -> ToyTrial:
    cfg = toy_config(master_seed, decisions, dtype=dtype, extra=extra)
    t0 = time.perf_counter()
    trainer = Trainer(build_pool(cfg), cfg.sac, np.random.default_rng(cfg.seeds.master),
                      config_hash=config_hash(cfg))
    before = evaluate(cfg, _deterministic(trainer.agent.policy), episodes=episodes)["reach_goal"]
    trainer.run(decisions)
    after = evaluate(cfg, _deterministic(trainer.agent.policy), episodes=episodes)["reach_goal"]
    return ToyTrial(master_seed, before.success_rate, after.success_rate, trainer.updates,
                    time.perf_counter() - t0)


def fixed_driving_checkpoint(out_dir, decisions: int = 4000, master_seed: int = 0) -> RunConfig:
    """Short deterministic run on the three-scenario pool; the saved policy is the fixed checkpoint.

    The non-reshaped reward is used so the policy drives forward instead of parking.
    """
    cfg = load_config(None, [parse_override('sac.dtype="float32"'), parse_override(f"sac.total_steps={decisions}"),
                             parse_override("reward.reshaped=false"), parse_override(f"seeds.master={master_seed}")])
    trainer = Trainer(build_pool(cfg), cfg.sac, np.random.default_rng(master_seed), config_hash=config_hash(cfg),
                      out_dir=out_dir)
    trainer.run(decisions)
    trainer.save_checkpoint(out_dir)
    return cfg


def density_trend(cfg: RunConfig, checkpoint, kind: str = "t_intersection", episodes: int = 200,
                  densities=(0.1, 0.2)) -> dict[float, Metrics]:
    """Evaluate one checkpoint on the same scenario kind at each traffic density."""
    policy = load_policy(checkpoint)
    return {d: evaluate(cfg, _deterministic(policy), episodes=episodes, entries=[ScenarioEntry(kind, d)])
            [ScenarioEntry(kind, d).config_id] for d in densities}
