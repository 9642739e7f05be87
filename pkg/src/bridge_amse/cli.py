"""Command-line entry point: ``bridge-amse <command> --config FILE``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .experiments import ConfigError, ExperimentConfig, all_ok, read_csv, run, write_csv

COMMANDS = {
    "phase": "phase",
    "amse": "amse_curve",
    "expand": "expansion_check",
    "simulate": "finite_sample",
    "amp-trace": "amp_trace",
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--out", default="results", help="output directory (default: results)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--workers", type=int, default=1, help="worker processes (default: 1)")
    p.add_argument("--quad-order", type=int, default=None,
                   help="Gauss-Hermite order for smooth Gaussian integrals (default: 61)")
    p.add_argument("--no-figures", action="store_true", help="write the CSV only")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bridge-amse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in COMMANDS.items():
        _common(sub.add_parser(name, help=f"run a '{kind}' experiment"))
    fig = sub.add_parser("figure", help="render SVG figures from CSV files")
    fig.add_argument("csv", nargs="+", help="CSV files written by another command")
    fig.add_argument("--out", default=None, help="figure directory (default: <csv dir>/figures)")
    return parser


def _figures(csv_path: str, out_dir: str) -> list:
    from .plotting import emit_figures

    return emit_figures(csv_path, out_dir)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "figure":
        status = 0
        for path in args.csv:
            out = args.out or os.path.join(os.path.dirname(os.path.abspath(path)), "figures")
            for svg in _figures(path, out):
                print(svg)
            _, rows = read_csv(path)
            if not all_ok(rows):
                status = 1
        return status

    try:
        config = ExperimentConfig.load(args.config, COMMANDS[args.command])
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        config = ExperimentConfig(**{**config.__dict__, "seed": args.seed})

    records = run(config, workers=args.workers, quad_order=args.quad_order)
    csv_path = write_csv(records, config.kind, os.path.join(args.out, f"{config.name}.csv"))
    print(csv_path)
    if not args.no_figures:
        for svg in _figures(csv_path, os.path.join(args.out, "figures")):
            print(svg)
    bad = [r for r in records if r["status"] != "ok"]
    for r in bad[:10]:
        print(f"record failed: {r['status']}", file=sys.stderr)
    if bad:
        print(f"{len(bad)} of {len(records)} records failed", file=sys.stderr)
    return 0 if not bad else 1


if __name__ == "__main__":
    sys.exit(main())
