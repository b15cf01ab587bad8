"""junctionrl command line: train, eval, replay, raycast-bench.

Exit codes: 0 ok, 1 unexpected failure, 2 configuration/usage, 3 checkpoint or
resume mismatch, 4 missing log entry, 5 training diverged.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path as FsPath

import numpy as np

from .config import (ConfigError, RunConfig, build_pool, config_hash, load_config, make_task_env, parse_override,
                     task_entries, to_dict)
from .evaluate import (EpisodeNotFound, metrics_csv, raycast_bench, read_trajectory, replay_csv, scene_battery,
                       trajectory_jsonl, evaluate)
from .neural import CheckpointError
from .sac import Trainer, TrainingDiverged, load_policy

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CHECKPOINT, EXIT_NOT_FOUND, EXIT_DIVERGED = 0, 1, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int):
        super().__init__(message)
        self.category, self.code = category, code


def _resolve(args) -> RunConfig:
    overrides = [parse_override(s) for s in args.set or ()]
    if getattr(args, "seed", None) is not None:
        overrides.append({"seeds": {"master": args.seed}})
    if getattr(args, "out", None) is not None:
        overrides.append({"out": args.out})
    if getattr(args, "episodes", None) is not None:
        overrides.append({"eval": {"episodes": args.episodes}})
    return load_config(args.config, overrides)


def _write_resolved(cfg: RunConfig, out: FsPath) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = {"config_hash": config_hash(cfg), "config": to_dict(cfg)}
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_train(args) -> int:
    cfg = _resolve(args)
    out = FsPath(cfg.out)
    digest = config_hash(cfg)
    if args.checkpoint:
        ckpt = FsPath(args.checkpoint)
        try:
            manifest = json.loads((ckpt / "manifest.json").read_text())
        except OSError as exc:
            raise CliError("checkpoint", f"cannot read manifest in {ckpt}: {exc}", EXIT_CHECKPOINT)
        if manifest.get("config_hash") != digest:
            raise CliError("checkpoint", f"config hash {digest} differs from checkpoint's "
                           f"{manifest.get('config_hash')}; refusing to resume", EXIT_CHECKPOINT)
        trainer = Trainer.resume(ckpt)
        trainer.out_dir = out
        trainer.cfg = trainer.agent.cfg = cfg.sac
        print(f"resuming at decision {trainer.decisions}")
    else:
        trainer = Trainer(build_pool(cfg), cfg.sac, np.random.default_rng(cfg.seeds.master), config_hash=digest,
                          out_dir=out)
    _write_resolved(cfg, out)
    trainer.run(cfg.sac.total_steps)
    trainer.write_log()
    path = trainer.save_checkpoint()
    print(f"trained {trainer.decisions} decisions, {trainer.updates} updates; checkpoint {path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    out = FsPath(cfg.out)
    try:
        policy = load_policy(args.checkpoint)
    except (OSError, CheckpointError) as exc:
        raise CliError("checkpoint", f"cannot load policy from {args.checkpoint}: {exc}", EXIT_CHECKPOINT)
    obs_dim = make_task_env(cfg, task_entries(cfg)[0], "eval", 0).observation_dim
    if policy.net.spec.input_dim != obs_dim:
        raise CliError("checkpoint", f"policy expects {policy.net.spec.input_dim} inputs, task observation has "
                       f"{obs_dim}", EXIT_CHECKPOINT)
    log = [] if cfg.eval.trajectory_log else None
    metrics = evaluate(cfg, lambda o: policy.act(o, deterministic=True)[0], log=log)
    _write_resolved(cfg, out)
    (out / "metrics.csv").write_text(metrics_csv(metrics))
    if log is not None:
        (out / "trajectories.jsonl").write_text(trajectory_jsonl(log, config_hash(cfg)))
    for name, m in metrics.items():
        ct = "n/a" if m.completion_time is None else f"{m.completion_time:.2f}s"
        print(f"{name}: success {m.success_rate:.3f} ({m.successes}/{m.episodes}), completion {ct}")
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        records = read_trajectory(args.log)
    except OSError as exc:
        raise CliError("not-found", f"cannot read trajectory log {args.log}: {exc}", EXIT_NOT_FOUND)
    try:
        text = replay_csv(records, args.episode)
    except EpisodeNotFound as exc:
        raise CliError("not-found", str(exc), EXIT_NOT_FOUND)
    if args.out:
        FsPath(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_raycast_bench(args) -> int:
    cfg = _resolve(args) if args.config or args.set else RunConfig()
    lidar = replace(cfg.lidar, beam_count=args.beams) if args.beams else cfg.lidar
    res = raycast_bench(scene_battery(args.scenes, empty=args.empty), lidar, repeats=args.repeats)
    print(f"scenes={res.scenes} beams={res.beam_count} mean={res.mean_s * 1e6:.1f}us "
          f"p99={res.p99_s * 1e6:.1f}us throughput={res.raycasts_per_s:.1f}/s digest={res.digest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="junctionrl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML run configuration")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")

    t = sub.add_parser("train", help="train SAC on the configured environment pool")
    common(t)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.add_argument("--checkpoint", help="resume from this checkpoint directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint with the deterministic policy")
    common(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.add_argument("--episodes", type=int)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="per-step CSV for one logged episode")
    r.add_argument("--log", required=True)
    r.add_argument("--episode", type=int, required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_replay)

    b = sub.add_parser("raycast-bench", help="time LiDAR raycasts over a fixed scene battery")
    common(b)
    b.add_argument("--beams", type=int)
    b.add_argument("--scenes", type=int, default=50)
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--empty", action="store_true", help="scenes without obstacles")
    b.set_defaults(func=cmd_raycast_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"error [diverged]: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
