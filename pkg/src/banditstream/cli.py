"""Command-line entry point: run, sweep, compare, presets, validate.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from pathlib import Path
from typing import List, Optional

from .environments import MalformedTrace
from .harness import (ConfigError, aggregate, build_env, config_from_dict, emit, gap_se, normalize_raw,
                      run_experiment, set_dotted, sweep_cells)
from .numerics import InvalidParameter, derive_seed
from .policies import make_policy
from .presets import PRESETS, preset

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
SEED_ENV = "BANDITSTREAM_SEED"


def parse_value(text: str):
    """A TOML literal (number, bool, string, array) or, failing that, the raw text."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_raw(path: str) -> dict:
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    if p.suffix == ".json":
        try:
            return json.loads(data)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    try:
        return tomllib.loads(data.decode())
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        if p.suffix != ".toml":
            try:
                return json.loads(data)
            except json.JSONDecodeError:
                pass
        raise ConfigError(f"{path}: {exc}") from None


def resolve_raw(args) -> dict:
    """Config file or preset, then the seed variable, then --set overrides."""
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset")
    if args.config:
        raw = load_raw(args.config)
    elif args.preset:
        try:
            raw = preset(args.preset)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
    else:
        raise ConfigError("a --config or --preset is required")
    raw = normalize_raw(raw)
    seed = os.environ.get(SEED_ENV)
    if seed:
        try:
            raw.setdefault("experiment", {})["base_seed"] = int(seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VAL, got {item!r}")
        key, val = item.split("=", 1)
        set_dotted(raw, key.strip(), parse_value(val.strip()))
    if getattr(args, "dump_truth", False):
        raw.setdefault("experiment", {})["dump_truth"] = True
    return raw


def check_config(raw: dict):
    """Parse, then build the first run's environment and every policy."""
    cfg = config_from_dict(raw)
    try:
        seed = derive_seed(cfg.base_seed, 0)
        env = build_env(cfg.env.kind, cfg.env.params, cfg.obs, derive_seed(seed, 0))
        for spec in cfg.policies:
            params = dict(spec.params)
            make_policy(spec.name, env.K, cfg.k, None, env=env, **params)
    except (InvalidParameter, MalformedTrace, OSError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{type(exc).__name__}: {exc}") from None
    return cfg


def _print_table(results, stream=None) -> None:
    stream = stream or sys.stdout
    aggs = list(aggregate(results).values())
    aggs.sort(key=lambda a: -a.final_reward_mean)
    width = max(len(a.policy) for a in aggs)
    print(f"{'policy':{width}}  {'env':24}  runs  {'reward':>12}  {'regret':>12}  {'regret se':>9}", file=stream)
    for a in aggs:
        se = a.final_regret_std / max(a.runs, 1) ** 0.5
        print(f"{a.policy:{width}}  {a.env:24}  {a.runs:4d}  {a.final_reward_mean:12.3f}  "
              f"{a.final_regret_mean:12.3f}  {se:9.3f}", file=stream)
    if len(aggs) >= 2:
        top, second = aggs[0], aggs[1]
        print(f"best vs runner-up reward gap {top.final_reward_mean - second.final_reward_mean:.3f} "
              f"(pooled se {gap_se(top, second, 'reward'):.3f})", file=stream)


def _execute(cfg, out: Path, jobs: int, quiet: bool = False):
    start = time.perf_counter()
    results = run_experiment(cfg, jobs=jobs)
    paths = emit(results, out, cfg, extra={"wall_time_total": time.perf_counter() - start, "jobs": jobs})
    if not quiet:
        print(f"wrote {paths['results']}", file=sys.stderr)
    return results


def cmd_run(args) -> int:
    cfg = check_config(resolve_raw(args))
    _execute(cfg, Path(args.out), args.jobs)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = check_config(resolve_raw(args))
    if len(cfg.policies) < 2:
        raise ConfigError("compare needs at least two policies")
    results = _execute(cfg, Path(args.out), args.jobs)
    _print_table(results)
    return EXIT_OK


def cmd_sweep(args) -> int:
    raw = resolve_raw(args)
    grid = dict(raw.get("sweep", {}))
    for item in args.grid or []:
        if "=" not in item:
            raise ConfigError(f"--grid expects KEY=V1,V2,..., got {item!r}")
        key, vals = item.split("=", 1)
        grid[key.strip()] = [parse_value(v.strip()) for v in vals.split(",") if v.strip()]
    raw.pop("sweep", None)
    cells = sweep_cells(raw, grid)
    checked = [(name, check_config(cell)) for name, cell in cells]
    out = Path(args.out)
    for name, cfg in checked:
        _execute(cfg, out / name if name else out, args.jobs)
    return EXIT_OK


def cmd_validate(args) -> int:
    check_config(resolve_raw(args))
    print("ok")
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.action == "list":
        for name in PRESETS:
            print(name)
        return EXIT_OK
    if not args.name:
        raise ConfigError("presets show needs a preset name")
    try:
        print(json.dumps(preset(args.name), indent=2))
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="banditstream", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, outputs: bool = True):
        p.add_argument("--config", help="experiment file (TOML or JSON)")
        p.add_argument("--preset", help="use a shipped preset instead of a file")
        p.add_argument("--set", action="append", metavar="KEY=VAL", help="override a dotted key")
        if outputs:
            p.add_argument("--out", default="results", help="output directory")
            p.add_argument("--jobs", type=int, default=1, help="worker processes")
            p.add_argument("--dump-truth", action="store_true", help="write realized ground truth")

    p = sub.add_parser("run", help="run every policy on the environment")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("compare", help="run and print a final-value table")
    common(p)
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("sweep", help="run the Cartesian product of a parameter grid")
    common(p)
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2", help="grid axis (repeatable)")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("validate", help="check a configuration without running it")
    common(p, outputs=False)
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("presets", help="list or show shipped presets")
    p.add_argument("action", choices=["list", "show"])
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
