#!/usr/bin/env python3
"""Summarize a training-run matrix: final-phase metrics per algorithm.

Reads metrics.csv files produced by `safenav train` from
<root>/<algo>/seed<N> and prints, for each algorithm, the mean over seeds
of return, success rate, episode cost, violation ratio and property count
over the final 10% of training.
"""

import argparse
import csv
import sys
from pathlib import Path
from statistics import mean

COLUMNS = ("return", "success", "episode_cost", "episode_violation",
           "n_properties", "multiplier")


def final_block_means(metrics_path):
    with open(metrics_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"empty metrics file: {metrics_path}")
    cut = 0.9 * int(rows[-1]["step"])
    block = [r for r in rows if int(r["step"]) >= cut]
    return {c: mean(float(r[c]) for r in block) for c in COLUMNS}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("root", nargs="?", default="runs/acceptance")
    args = ap.parse_args(argv)
    root = Path(args.root)
    algo_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not algo_dirs:
        print(f"no runs under {root}", file=sys.stderr)
        return 1
    header = ("algo", "seeds") + COLUMNS
    print(("{:<14}{:>6}" + "{:>14}" * len(COLUMNS)).format(*header))
    for algo_dir in algo_dirs:
        seed_dirs = sorted(algo_dir.glob("seed*/metrics.csv"))
        if not seed_dirs:
            continue
        per_seed = [final_block_means(p) for p in seed_dirs]
        agg = {c: mean(s[c] for s in per_seed) for c in COLUMNS}
        print(("{:<14}{:>6}" + "{:>14.4f}" * len(COLUMNS)).format(
            algo_dir.name, len(per_seed), *(agg[c] for c in COLUMNS)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
