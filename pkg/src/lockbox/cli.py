"""lockbox-bench: run the experiments from the command line.

Exit codes: 0 success, 1 config error, 2 an acceptance check failed (only
with ``--check``).  The default output root is taken from $LOCKBOX_OUT.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import bench
from .core import LockboxError, reference_config, validate

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config (JSON); built-in defaults otherwise")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--out", help=f"output directory (default ${bench.OUT_ENV}/<experiment>)")
    p.add_argument("--trials", type=int, help="trials per cell override")
    p.add_argument("--jobs", type=int, help="worker processes per cell")
    p.add_argument("--check", action="store_true", help="exit 2 if any acceptance check fails")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lockbox-bench", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (
        ("sweep", "success rate and steps across lockbox scales"),
        ("deps", "attention on near- vs far-locking dependency graphs"),
        ("demo", "full kinematic run on the 5-joint lockbox"),
        ("dqn", "train and evaluate the per-scale DQN baseline"),
    ):
        _add_common(sub.add_parser(name, help=text))
    v = sub.add_parser("validate", help="check a lockbox config file or shipped name")
    v.add_argument("lockbox")
    return ap


def _experiment(args) -> bench.ExperimentConfig:
    overrides = {"seed": args.seed, "out": args.out, "trials": args.trials, "jobs": args.jobs}
    if args.config:
        return bench.load_experiment(args.config, **overrides)
    try:
        return replace(bench.DEFAULT_EXPERIMENTS[args.command], **{k: v for k, v in overrides.items() if v is not None})
    except ValueError as exc:
        raise bench.ConfigError(str(exc)) from exc


def _validate(name: str) -> int:
    try:
        spec = reference_config(name)
    except (LockboxError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    problems = validate(spec)
    for p in problems:
        print(f"invalid: {p}")
    if not problems:
        print(f"ok: {spec.name} ({spec.n} joints, {len(spec.edges)} edges, target {spec.target})")
    return EXIT_CONFIG if problems else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return _validate(args.lockbox)
    try:
        cfg = _experiment(args)
        report = bench.RUNNERS[args.command](cfg)
    except bench.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for row in report.summary:
        print(f"{row['config']:>12} scale {row['scale']} {row['variant']:<15} "
              f"solved {row['solved']}/{row['trials']}  mean steps {row['mean_steps']:.2f}")
    for key, value in report.info.items():
        print(f"{key}: {json.dumps(value)}")
    for name, ok in report.checks.items():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    print(f"outputs in {report.out}")
    if args.check and not report.passed:
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
