"""Command-line entry point: train / eval / verify.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Default output root comes from SAFENAV_OUT (falls back to ./runs).

Config files are flat key-value text with sectioned keys, e.g.

    run.algo = ppo_crop
    run.env = fixed
    train.gamma = 0.99
    crop.beta = 0.1

Flags override config-file values. The resolved configuration is snapshotted
into the output directory; replaying `train --config <snapshot>` reproduces
the run.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
import time

import numpy as np

from .envs import ENV_KINDS, make_env
from .policy import act_deterministic, load_checkpoint, save_checkpoint
from .properties import CropConfig, append_properties, load_properties
from .trainers import (
    ALGORITHMS,
    TrainConfig,
    Trainer,
    hardcoded_property_set,
)
from .verifier import DEFAULT_BUDGET, DEFAULT_MIN_WIDTH, verify_property
from .violation import estimate_violation

METRICS_COLUMNS = (
    "step", "episode", "return", "success", "episode_cost",
    "episode_violation", "n_properties", "multiplier", "wall_time",
)

_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
_CROP_KEYS = {"epsilon", "beta"}
_RUN_KEYS = {"algo", "env", "out"}


class ConfigError(Exception):
    pass


def parse_config_file(path) -> dict:
    values = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    with fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#")[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            section, _, name = key.partition(".")
            if section == "train" and name in _TRAIN_KEYS:
                pass
            elif section == "crop" and name in _CROP_KEYS:
                pass
            elif section == "run" and name in _RUN_KEYS:
                pass
            else:
                raise ConfigError(f"{path}:{ln}: unknown config key {key!r}")
            values[key] = raw
    return values


def _coerce(value: str, target_type):
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    return value


def build_configs(file_values: dict, args) -> tuple:
    """Merge config-file values and CLI flags into run settings."""
    train_kwargs = {}
    for key, raw in file_values.items():
        section, _, name = key.partition(".")
        if section == "train":
            ftype = {f.name: f.type for f in dataclasses.fields(TrainConfig)}[name]
            pytype = {"int": int, "float": float}.get(ftype, str)
            train_kwargs[name] = _coerce(raw, pytype)
    crop_kwargs = {
        name: float(file_values[f"crop.{name}"])
        for name in _CROP_KEYS
        if f"crop.{name}" in file_values
    }
    algo = getattr(args, "algo", None) or file_values.get("run.algo")
    env_kind = getattr(args, "env", None) or file_values.get("run.env")
    out = getattr(args, "out", None) or file_values.get("run.out")
    if getattr(args, "steps", None) is not None:
        train_kwargs["total_steps"] = args.steps
    if getattr(args, "seed", None) is not None:
        train_kwargs["seed"] = args.seed
    try:
        train_cfg = TrainConfig(**train_kwargs)
        crop_cfg = CropConfig(**crop_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))
    if algo not in ALGORITHMS:
        raise ConfigError(f"--algo must be one of {ALGORITHMS}, got {algo!r}")
    if env_kind not in ("fixed", "dynamic"):
        raise ConfigError(f"--env must be 'fixed' or 'dynamic', got {env_kind!r}")
    return algo, env_kind, train_cfg, crop_cfg, out


def write_config_snapshot(path, algo, env_kind, train_cfg, crop_cfg):
    with open(path, "w") as fh:
        fh.write(f"run.algo = {algo}\n")
        fh.write(f"run.env = {env_kind}\n")
        for f in dataclasses.fields(TrainConfig):
            fh.write(f"train.{f.name} = {getattr(train_cfg, f.name)}\n")
        fh.write(f"crop.epsilon = {crop_cfg.epsilon}\n")
        fh.write(f"crop.beta = {crop_cfg.beta}\n")


def default_out_root():
    return os.environ.get("SAFENAV_OUT", "runs")


# --- train ------------------------------------------------------------------

def run_single_training(algo, env_kind, train_cfg, crop_cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_config_snapshot(os.path.join(out_dir, "config.txt"),
                          algo, env_kind, train_cfg, crop_cfg)
    env = make_env(env_kind, train_cfg.seed)
    trainer = Trainer(algo, env, train_cfg, crop_cfg=crop_cfg)
    t0 = time.monotonic()

    metrics_path = os.path.join(out_dir, "metrics.csv")
    props_fh = None
    if algo == "ppo_crop":
        props_fh = open(os.path.join(out_dir, "properties.jsonl"), "w")
    with open(metrics_path, "w", newline="") as mfh:
        writer = csv.writer(mfh)
        writer.writerow(METRICS_COLUMNS)

        def on_episode(m, props):
            writer.writerow([
                m.step, m.episode, repr(m.ret), m.success, m.episode_cost,
                repr(m.episode_violation), repr(m.n_properties), repr(m.multiplier),
                f"{time.monotonic() - t0:.3f}",
            ])
            mfh.flush()
            if props_fh is not None:
                append_properties(props_fh, props, m.episode)
                props_fh.flush()

        try:
            trainer.run(on_episode=on_episode)
        finally:
            if props_fh is not None:
                props_fh.close()
    save_checkpoint(trainer.net, os.path.join(out_dir, "checkpoint.json"))
    return 0


def cmd_train(args) -> int:
    file_values = parse_config_file(args.config) if args.config else {}
    seeds = [args.seed] if args.seeds is None else [int(s) for s in args.seeds.split(",")]
    if args.seed is None and args.seeds is None and "train.seed" not in file_values:
        seeds = [0]
    fan_out = args.seeds is not None
    for seed in seeds:
        ns = argparse.Namespace(**vars(args))
        ns.seed = seed
        algo, env_kind, train_cfg, crop_cfg, out = build_configs(file_values, ns)
        if out is None:
            out = os.path.join(default_out_root(),
                               f"{algo}_{env_kind}_seed{train_cfg.seed}")
        elif fan_out:
            out = os.path.join(out, f"seed{train_cfg.seed}")
        run_single_training(algo, env_kind, train_cfg, crop_cfg, out)
        print(f"run complete: {out}")
    return 0


# --- eval -------------------------------------------------------------------

def cmd_eval(args) -> int:
    try:
        net = load_checkpoint(args.checkpoint)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.episodes < 1:
        raise ConfigError("--episodes must be >= 1")
    env = make_env(args.env, args.seed)
    successes = []
    costs = []
    for _ in range(args.episodes):
        obs = env.reset()
        ep_cost = 0
        reached = False
        done = False
        while not done:
            action = act_deterministic(net, obs)
            res = env.step(action)
            ep_cost += res.cost
            done = res.done
            reached = res.info["goal_reached"]
            obs = res.observation
        successes.append(1 if reached else 0)
        costs.append(ep_cost)

    rng = np.random.default_rng(args.seed)
    report = estimate_violation(net, hardcoded_property_set(), m=args.cloud_size,
                                rng=rng)
    # success reported per 10-episode block, matching a 0-10 scale
    blocks = [sum(successes[i:i + 10]) for i in range(0, len(successes), 10)]
    mean_success = float(np.mean(blocks))
    mean_cost = float(np.mean(costs))
    mean_violation = report.aggregate_ratio

    header = f"{'Method':<12} {'Mean Success':>12} {'Mean Cost':>10} {'Mean Violation':>15}"
    row = f"{'policy':<12} {mean_success:>12.2f} {mean_cost:>10.2f} {mean_violation:>15.4f}"
    print(header)
    print(row)
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mean_success", "mean_cost", "mean_violation", "episodes"])
            w.writerow([repr(mean_success), repr(mean_cost),
                        repr(mean_violation), args.episodes])
    return 0


# --- verify -----------------------------------------------------------------

def cmd_verify(args) -> int:
    try:
        net = load_checkpoint(args.checkpoint)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.properties:
        try:
            props = load_properties(args.properties)
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: cannot load properties: {exc}", file=sys.stderr)
            return 1
    else:
        props = hardcoded_property_set()

    rows = []
    for i, p in enumerate(props):
        t0 = time.monotonic()
        cert = verify_property(net, p, min_width=args.min_width, budget=args.budget)
        rows.append([i, cert.lower, cert.upper, cert.unknown_fraction,
                     cert.boxes_explored, time.monotonic() - t0])
    sum_lower = sum(r[1] for r in rows)
    sum_upper = sum(r[2] for r in rows)
    sum_mid = sum(0.5 * (r[1] + r[2]) for r in rows)

    out_fh = open(args.out, "w", newline="") if args.out else None
    writers = [csv.writer(sys.stdout)]
    if out_fh:
        writers.append(csv.writer(out_fh))
    for w in writers:
        w.writerow(["property_id", "lower", "upper", "unknown",
                    "boxes_explored", "seconds"])
        for r in rows:
            w.writerow([r[0], repr(r[1]), repr(r[2]), repr(r[3]), r[4],
                        f"{r[5]:.3f}"])
        w.writerow(["SUM", repr(sum_lower), repr(sum_upper),
                    repr(sum_mid), sum(r[4] for r in rows), ""])
    if out_fh:
        out_fh.close()
    return 0


# --- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safenav",
        description="Safe-RL workbench: online safety properties, penalty-"
                    "shaped PPO trainers, and a sound policy verifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy")
    p_train.add_argument("--algo", choices=ALGORITHMS)
    p_train.add_argument("--env", choices=("fixed", "dynamic"))
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--seeds", help="comma-separated seeds; fans out "
                         "independent runs into per-seed subdirectories")
    p_train.add_argument("--config", help="flat key-value config file")
    p_train.add_argument("--steps", type=int, help="total environment steps")
    p_train.add_argument("--out", help="output directory")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a trained checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--env", choices=ENV_KINDS, default="evaluation")
    p_eval.add_argument("--episodes", type=int, default=10)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--cloud-size", type=int, default=10_000)
    p_eval.add_argument("--out", help="write summary CSV here")
    p_eval.set_defaults(func=cmd_eval)

    p_verify = sub.add_parser("verify", help="certify violation bounds")
    p_verify.add_argument("--checkpoint", required=True)
    p_verify.add_argument("--properties", help="JSONL property file; default "
                          "is the hand-coded navigation set")
    p_verify.add_argument("--min-width", type=float, default=DEFAULT_MIN_WIDTH)
    p_verify.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p_verify.add_argument("--out", help="write CSV here as well as stdout")
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "steps", None) is not None and args.steps <= 0:
        print("error: --steps must be positive", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
