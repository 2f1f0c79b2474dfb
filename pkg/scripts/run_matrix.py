#!/usr/bin/env python3
"""Run the full training matrix used by the long-run acceptance tests.

Trains every algorithm on the fixed layout for each requested seed and
caches the artifacts under --out (default runs/acceptance/<algo>/seed<N>).
Completed runs (marker file `done`) are skipped, so the script can be
re-invoked to resume after an interruption.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from safenav.cli import main as cli_main  # noqa: E402
from safenav.trainers import ALGORITHMS  # noqa: E402


def run_matrix(out_root, algos, seeds, steps, env="fixed"):
    jobs = [(a, s) for a in algos for s in seeds]
    for i, (algo, seed) in enumerate(jobs, 1):
        out = Path(out_root) / algo / f"seed{seed}"
        marker = out / "done"
        if marker.exists():
            print(f"[{i}/{len(jobs)}] {algo} seed={seed}: cached, skipping", flush=True)
            continue
        print(f"[{i}/{len(jobs)}] {algo} seed={seed}: training {steps} steps", flush=True)
        t0 = time.monotonic()
        rc = cli_main([
            "train", "--algo", algo, "--env", env, "--steps", str(steps),
            "--seed", str(seed), "--out", str(out),
        ])
        if rc != 0:
            print(f"  FAILED with exit code {rc}", file=sys.stderr)
            return rc
        marker.write_text("")
        print(f"  done in {time.monotonic() - t0:.0f}s", flush=True)
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/acceptance")
    ap.add_argument("--algos", default=",".join(ALGORITHMS))
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--steps", type=int, default=300_000)
    ap.add_argument("--env", default="fixed")
    args = ap.parse_args(argv)
    algos = [a for a in args.algos.split(",") if a]
    seeds = [int(s) for s in args.seeds.split(",")]
    return run_matrix(args.out, algos, seeds, args.steps, args.env)


if __name__ == "__main__":
    sys.exit(main())
