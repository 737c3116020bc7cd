#!/usr/bin/env python3
"""Sweep the initial randomization level from 0 to 100 percent in steps of
10 and print the retrieval-time trend (median and interquartile range) for
each policy.  Shows how far each policy degrades as the starting
configuration moves away from optimal."""

import argparse
import csv
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from gridstore.config import desk_config
from gridstore.report import run_batch

POLICIES = ("layer_complete", "delayed", "immediate")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5,
                    help="seeds per sweep point (default 5)")
    ap.add_argument("--csv", default=None, help="optional output CSV path")
    args = ap.parse_args()
    seeds = list(range(args.seeds))

    rows = []
    print(f"{'policy':<16} {'rand%':>6} {'median':>8} {'q1':>8} {'q3':>8}")
    for policy in POLICIES:
        for rand in range(0, 101, 10):
            cfg = desk_config(policy=policy, randomization_percent=rand)
            batch = run_batch(cfg, seeds)
            if not batch.bundles:
                print(f"{policy:<16} {rand:>6}  all seeds failed:",
                      batch.failures, file=sys.stderr)
                continue
            med, _ = batch.mean_std("median_retrieval")
            q1 = sum(b.iqr_retrieval[0] for b in batch.bundles) / len(batch.bundles)
            q3 = sum(b.iqr_retrieval[1] for b in batch.bundles) / len(batch.bundles)
            rows.append((policy, rand, med, q1, q3))
            print(f"{policy:<16} {rand:>6} {med:>8.2f} {q1:>8.2f} {q3:>8.2f}")

    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["policy", "randomization_percent",
                        "median_retrieval", "q1", "q3"])
            w.writerows(rows)
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
