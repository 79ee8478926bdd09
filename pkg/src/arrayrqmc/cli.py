"""Command line entry point: ``run``, ``table`` and ``selftest``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from .experiments import ConfigError, config_dict, emit_table, load_config, read_any, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _cmd_run(args):
    try:
        cfg = load_config(args.config, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "config.json"), "w") as fh:
        json.dump(config_dict(cfg), fh, indent=1)
    t0 = time.perf_counter()
    try:
        _, cells = run_experiment(cfg, out_dir=args.out, threads=args.threads)
    except Exception as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(emit_table(cells))
    print(f"\n{len(cells)} cells in {time.perf_counter() - t0:.1f}s, written to {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_table(args):
    try:
        cells = read_any(args.inp)
    except (OSError, ValueError, TypeError) as exc:
        print(f"cannot read {args.inp}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(emit_table(cells))
    return EXIT_OK


def _cmd_selftest(args):
    from .selftest import run_selftest

    ok = run_selftest(verbose=not args.quiet)
    return EXIT_OK if ok else EXIT_RUNTIME


def build_parser():
    ap = argparse.ArgumentParser(prog="arrayrqmc", description="Array-RQMC option pricing experiments")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run an experiment grid from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--threads", type=int, default=1, help="worker processes")
    run.set_defaults(fn=_cmd_run)

    tab = sub.add_parser("table", help="print the slope/VRF summary of a cells or replicates CSV")
    tab.add_argument("--in", dest="inp", required=True)
    tab.set_defaults(fn=_cmd_table)

    st = sub.add_parser("selftest", help="fast property checks")
    st.add_argument("--quiet", action="store_true")
    st.set_defaults(fn=_cmd_selftest)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
