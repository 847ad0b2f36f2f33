"""Command-line front end.

    tilted-sim <command> --config <path> --out <dir> [--workers N] [--seed-offset K]
    tilted-sim plot-data --records <path> --x <field> --y <metric>
                         [--group f1,f2] [--log] --out <csv>

Commands: exponents | recover | scaling | ridge | value-gap | coverage |
admissible | verify-all. Records are JSON-lines, one file per command.
"""
from __future__ import annotations

import argparse
import sys

from .commands import COMMANDS, run_experiment
from .config import ConfigError, load_config
from .plotdata import PlotDataError, PlotSpec, emit_plot_data


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tilted-sim",
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="worker pool size (default: TILTED_SIM_WORKERS or 1)")
        p.add_argument("--seed-offset", type=int, default=0,
                       help="shift every configured seed by this amount")
    plot = sub.add_parser("plot-data")
    plot.add_argument("--records", required=True, help="JSON-lines records file")
    plot.add_argument("--x", required=True, help="metadata field used as x")
    plot.add_argument("--y", required=True, help="metric name used as y")
    plot.add_argument("--group", default="", help="comma-separated group fields")
    plot.add_argument("--log", action="store_true", help="log-transform y")
    plot.add_argument("--out", required=True, help="output CSV path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plot-data":
        groups = tuple(g for g in args.group.split(",") if g)
        spec = PlotSpec(x=args.x, y=args.y, groups=groups,
                        transform="log" if args.log else "none")
        try:
            dropped = emit_plot_data(args.records, spec, args.out)
        except (PlotDataError, FileNotFoundError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        if dropped:
            print(f"warning: dropped {dropped} nonpositive rows under log transform",
                  file=sys.stderr)
        return 0
    try:
        cfg = load_config(args.config).with_seed_offset(args.seed_offset)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        _, status = run_experiment(cfg, args.command, args.out, workers=args.workers)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return status


if __name__ == "__main__":
    raise SystemExit(main())
