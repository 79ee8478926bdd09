#!/usr/bin/env python3
"""Run the bundled experiment grids and print their slope/VRF tables.

    python3 scripts/run_experiments.py                  # desk scale, n up to 2^16, m = 50
    python3 scripts/run_experiments.py --scale full     # n up to 2^20, m = 100 (many hours)
    python3 scripts/run_experiments.py --only vg_asian --threads 4

Each grid writes replicates.csv, cells.csv, table.txt and (for grids with a
Hilbert sort) pilot_logistic.json to <out>/<grid>_<scale>/.
"""

import argparse
import pathlib
import sys
import time

from arrayrqmc.experiments import emit_table, load_config, run_experiment

ROOT = pathlib.Path(__file__).resolve().parent.parent
GRIDS = ["vg_asian", "heston_european", "heston_asian", "ou_european", "ou_asian"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", choices=["desk", "full"], default="desk")
    ap.add_argument("--only", nargs="*", choices=GRIDS, help="subset of grids")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=str(ROOT / "results"))
    args = ap.parse_args()

    for grid in args.only or GRIDS:
        cfg = load_config(ROOT / "configs" / f"{grid}_{args.scale}.json", seed=args.seed)
        out = pathlib.Path(args.out) / f"{grid}_{args.scale}"
        t0 = time.perf_counter()
        _, cells = run_experiment(cfg, out_dir=str(out), threads=args.threads)
        print(f"== {grid} ({args.scale}, m={cfg.m}, {time.perf_counter() - t0:.0f}s) -> {out}")
        print(emit_table(cells), flush=True)
        print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
