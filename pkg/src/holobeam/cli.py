"""Command-line entry point: ``holobeam run|pattern|maps``."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import HolobeamError
from .harness import load_config, maps_from_report, parse_experiment, run_experiment, run_single_eu_study


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="holobeam", description="Holographic data-and-energy transfer experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a sweep and append to results.csv")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--profile", choices=["desk", "full"])
    run.add_argument("--schemes", help="comma-separated scheme list")
    run.add_argument("--seed", type=int)

    pat = sub.add_parser("pattern", help="single-EU focusing study")
    pat.add_argument("config")
    pat.add_argument("--out")

    maps = sub.add_parser("maps", help="current maps from a solve report")
    maps.add_argument("report")
    maps.add_argument("--out")

    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "run":
            schemes = [s.strip() for s in args.schemes.split(",") if s.strip()] if args.schemes else None
            exp = parse_experiment(load_config(args.config), args.profile, schemes, args.seed, args.out)
            print(run_experiment(exp))
        elif args.cmd == "pattern":
            for name, path in run_single_eu_study(load_config(args.config), args.out).items():
                print(name, path)
        else:
            for path in maps_from_report(args.report, args.out):
                print(path)
    except (HolobeamError, OSError) as exc:
        print(f"holobeam: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
