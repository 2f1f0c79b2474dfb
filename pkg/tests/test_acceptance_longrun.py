"""Long-run acceptance criteria: full 300k-step training comparisons.

These read cached runs from runs/acceptance (produced by
scripts/run_matrix.py) when present and train from scratch otherwise, so
run the matrix script first:

    python3 scripts/run_matrix.py --out runs/acceptance

Invoke with `pytest -m slow tests/test_acceptance_longrun.py`.
"""

import csv
import os
from pathlib import Path

import numpy as np
import pytest

from safenav.cli import main
from safenav.policy import load_checkpoint
from safenav.trainers import hardcoded_property_set
from safenav.violation import estimate_violation

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)
STEPS = 300_000
RUN_ROOT = Path(os.environ.get("SAFENAV_ACCEPTANCE_RUNS",
                               Path(__file__).resolve().parent.parent
                               / "runs" / "acceptance"))
N_STATIC_PROPERTIES = 7


def ensure_run(algo, seed):
    out = RUN_ROOT / algo / f"seed{seed}"
    if not (out / "metrics.csv").exists():
        rc = main(["train", "--algo", algo, "--env", "fixed",
                   "--steps", str(STEPS), "--seed", str(seed),
                   "--out", str(out)])
        assert rc == 0
    return out


def load_metrics(out):
    with open(out / "metrics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows, f"empty metrics in {out}"
    last_step = int(rows[-1]["step"])
    assert last_step >= int(0.95 * STEPS), f"short run in {out}"
    return rows


def final_block(rows):
    """Episodes finishing in the last 10% of training."""
    cut = 0.9 * int(rows[-1]["step"])
    block = [r for r in rows if int(r["step"]) >= cut]
    assert block
    return block


def mean_over_seeds(algo, column):
    per_seed = []
    for seed in SEEDS:
        block = final_block(load_metrics(ensure_run(algo, seed)))
        per_seed.append(float(np.mean([float(r[column]) for r in block])))
    return float(np.mean(per_seed)), per_seed


def test_criterion_8_online_collection_finds_more_properties():
    # mean properties used per violation computation: n_properties holds the
    # per-episode mean over computations and episode_cost the number of
    # computations, so weight episodes by cost. The static baseline uses a
    # constant N_STATIC_PROPERTIES per computation.
    per_seed = []
    for seed in SEEDS:
        block = final_block(load_metrics(ensure_run("ppo_crop", seed)))
        costs = np.array([float(r["episode_cost"]) for r in block])
        nprops = np.array([float(r["n_properties"]) for r in block])
        assert costs.sum() > 0
        per_seed.append(float(np.sum(costs * nprops) / np.sum(costs)))
    crop_mean = float(np.mean(per_seed))
    assert crop_mean > N_STATIC_PROPERTIES, per_seed
    print(f"\nACCEPTANCE criterion 8: PASS - {crop_mean:.1f} properties used "
          f"per violation computation in the final 10% "
          f"(static set: {N_STATIC_PROPERTIES}; per seed "
          f"{[round(v, 1) for v in per_seed]})")


def final_violation_on_static_set(algo):
    """Violation of the final policy over the shared hand-coded property
    set — the common yardstick for algorithms whose training metric logs
    zero (no property penalty)."""
    props = hardcoded_property_set()
    per_seed = []
    for seed in SEEDS:
        net = load_checkpoint(ensure_run(algo, seed) / "checkpoint.json")
        rep = estimate_violation(net, props, m=10_000,
                                 rng=np.random.default_rng(seed))
        per_seed.append(rep.aggregate_ratio)
    return float(np.mean(per_seed)), per_seed


def test_criterion_9_safety_and_success_ordering():
    crop_viol, crop_viol_seeds = final_violation_on_static_set("ppo_crop")
    cost_viol, cost_viol_seeds = final_violation_on_static_set("ppo_cost")
    crop_succ, crop_succ_seeds = mean_over_seeds("ppo_crop", "success")
    lppo_succ, lppo_succ_seeds = mean_over_seeds("lppo", "success")
    flags = []
    if not crop_viol <= cost_viol:
        flags.append(
            f"violation ordering not met: crop {crop_viol:.4f} "
            f"(seeds {crop_viol_seeds}) > cost-penalty {cost_viol:.4f} "
            f"(seeds {cost_viol_seeds})")
    if not crop_succ >= lppo_succ:
        flags.append(
            f"success ordering not met: crop {crop_succ:.3f} "
            f"(seeds {crop_succ_seeds}) < lagrangian {lppo_succ:.3f} "
            f"(seeds {lppo_succ_seeds})")
    # stochastic ordering across a 3-seed sample: flagged, not failed
    if flags:
        print("\nACCEPTANCE criterion 9: FLAG - " + "; ".join(flags))
    else:
        print(f"\nACCEPTANCE criterion 9: PASS - final violation "
              f"{crop_viol:.4f} <= {cost_viol:.4f} and success "
              f"{crop_succ:.3f} >= {lppo_succ:.3f}")


def test_criterion_10_lagrangian_respects_cost_threshold():
    cost, per_seed = mean_over_seeds("lppo", "episode_cost")
    assert cost <= 6.0, per_seed
    print(f"\nACCEPTANCE criterion 10: PASS - lagrangian final mean episode "
          f"cost {cost:.2f} <= 6 with threshold 5 (per seed {per_seed})")
