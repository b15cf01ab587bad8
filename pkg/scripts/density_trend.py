#!/usr/bin/env python3
"""Evaluate one fixed checkpoint at regular and dense traffic on each scenario kind."""
import argparse
import sys
from pathlib import Path

from junctionrl.config import load_config
from junctionrl.experiments import density_trend, fixed_driving_checkpoint


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", help="checkpoint directory; built with a short fixed run when omitted")
    ap.add_argument("--config", help="TOML run configuration used for evaluation")
    ap.add_argument("--workdir", default="runs/density_trend")
    ap.add_argument("--episodes", type=int, default=200)
    ap.add_argument("--kinds", nargs="+", default=["t_intersection", "four_way", "roundabout"])
    args = ap.parse_args(argv)

    if args.checkpoint:
        ckpt, cfg = Path(args.checkpoint), load_config(args.config)
    else:
        ckpt = Path(args.workdir) / "ckpt"
        cfg = fixed_driving_checkpoint(ckpt)
        if args.config:
            cfg = load_config(args.config)
    worse = 0
    for kind in args.kinds:
        res = density_trend(cfg, ckpt, kind=kind, episodes=args.episodes)
        reg, dense = res[0.1], res[0.2]
        ok = dense.success_rate <= reg.success_rate + 0.05
        worse += not ok
        print(f"{kind}: regular {reg.success_rate:.3f} (crash {reg.crashes}) | dense {dense.success_rate:.3f} "
              f"(crash {dense.crashes}) | trend {'holds' if ok else 'violated'}", flush=True)
    return 1 if worse else 0


if __name__ == "__main__":
    sys.exit(main())
