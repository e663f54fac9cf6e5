"""figures <kind> <input.csv> -o <out.png>: render solver CSV outputs."""

from __future__ import annotations

import argparse
import sys

from .readers import SchemaError
from .render import render_scaling, render_snapshot, render_timeseries


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render membrane-solver CSV files to images")
    parser.add_argument("kind", choices=("snapshot", "timeseries", "scaling"))
    parser.add_argument("input", help="CSV file produced by the solver CLI")
    parser.add_argument("-o", "--output", required=True, metavar="IMAGE")
    parser.add_argument("--log", action="store_true",
                        help="log-scale the diagnostic panels (timeseries)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.kind == "snapshot":
            render_snapshot(args.input, args.output)
        elif args.kind == "timeseries":
            render_timeseries(args.input, args.output, log_scale=args.log)
        else:
            render_scaling(args.input, args.output)
    except SchemaError as exc:
        print(f"figures: {exc}", file=sys.stderr)
        return 2
    return 0


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
