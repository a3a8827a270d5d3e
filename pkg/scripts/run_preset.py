#!/usr/bin/env python3
"""Run a shipped preset and print the final-value table.

    python scripts/run_preset.py samplin_xp --runs 10 --jobs 2 --out results/samplin
    python scripts/run_preset.py periodic --only RecurrentStateTS-d4 UCB

Extra ``--set KEY=VAL`` overrides go straight to the configuration.
"""
import argparse
import sys
import time
from pathlib import Path

from banditstream.cli import _print_table, check_config, parse_value
from banditstream.harness import emit, normalize_raw, run_experiment, set_dotted
from banditstream.presets import PRESETS, preset


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("name", choices=list(PRESETS))
    ap.add_argument("--runs", type=int, help="override experiment.n_runs")
    ap.add_argument("--T", type=int, help="override experiment.T")
    ap.add_argument("--only", nargs="+", help="keep only these policy labels")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VAL")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", help="write results.csv, final.csv and manifest.json here")
    args = ap.parse_args()

    raw = normalize_raw(preset(args.name))
    if args.runs:
        raw["experiment"]["n_runs"] = args.runs
    if args.T:
        raw["experiment"]["T"] = args.T
    for item in args.set:
        key, val = item.split("=", 1)
        set_dotted(raw, key, parse_value(val))
    cfg = check_config(raw)
    if args.only:
        cfg.policies = [p for p in cfg.policies if p.display in args.only]
    start = time.perf_counter()
    results = run_experiment(cfg, jobs=args.jobs)
    print(f"{args.name}: {len(results)} runs in {time.perf_counter() - start:.1f}s", file=sys.stderr)
    _print_table(results)
    if args.out:
        emit(results, Path(args.out), cfg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
