#!/usr/bin/env python3
"""Straight-road learning check: train from scratch for each master seed, compare
deterministic success before and after training."""
import argparse
import csv
import sys
import time

from junctionrl.experiments import toy_trial


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(10)))
    ap.add_argument("--decisions", type=int, default=20_000)
    ap.add_argument("--episodes", type=int, default=50)
    ap.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    ap.add_argument("--csv", help="also write the per-seed table here")
    args = ap.parse_args(argv)

    rows = []
    t0 = time.perf_counter()
    for seed in args.seeds:
        t = toy_trial(seed, args.decisions, args.episodes, dtype=args.dtype)
        rows.append(t)
        print(f"seed {seed}: untrained {t.untrained_success:.2f} -> trained {t.trained_success:.2f} "
              f"({t.updates} updates, {t.seconds:.0f}s)", flush=True)
    passed = sum(t.trained_success >= 0.9 and t.untrained_success < 0.1 for t in rows)
    print(f"{passed}/{len(rows)} seeds pass; total {(time.perf_counter() - t0) / 60:.1f} min")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["master_seed", "untrained_success", "trained_success", "updates", "seconds"])
            for t in rows:
                w.writerow([t.master_seed, t.untrained_success, t.trained_success, t.updates, f"{t.seconds:.1f}"])
    return 0 if passed >= 0.9 * len(rows) else 1


if __name__ == "__main__":
    sys.exit(main())
