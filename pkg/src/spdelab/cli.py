"""Command line entry point: ``spdelab <experiment> --config FILE``."""
from __future__ import annotations

import argparse
import os
import sys

from .config import EXPERIMENTS, ConfigError, load
from .harness import run_experiment

EXIT_CODES = {"pass": 0, "fail": 2, "floor": 3, "inconclusive": 3}
EXIT_CONFIG = 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spdelab", description="Run one numerical experiment and persist its RunRecord.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--seed", type=lambda s: int(s, 0), default=None, help="override master_seed")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: logical cores)")
    p.add_argument("--out", default=None, help="output directory (SPDELAB_OUT takes precedence)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key; may be repeated")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            print(f"spdelab: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_CONFIG
        k, v = item.split("=", 1)
        overrides[k.strip().lower()] = v.strip()
    if args.seed is not None:
        overrides["master_seed"] = str(args.seed)
    try:
        cfg = load(args.config, args.experiment, overrides)
    except (OSError, ConfigError) as exc:
        print(f"spdelab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = os.environ.get("SPDELAB_OUT") or args.out or cfg["output_dir"]
    if args.workers is not None and args.workers < 1:
        print("spdelab: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        record = run_experiment(cfg, args.workers, out)
    except ConfigError as exc:
        print(f"spdelab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{record.experiment} {record.status} hash={record.config_hash} seed={record.seed} "
          f"wall={record.wall_time:.1f}s out={out}")
    for name, e in record.exponents.items():
        print(f"  {name} = {e['value']:.4g} (se {e['se']:.2g}, ci [{e['ci'][0]:.4g}, {e['ci'][1]:.4g}])")
    return EXIT_CODES[record.status]


if __name__ == "__main__":
    raise SystemExit(main())
