"""Command-line entry point ``ritzlab``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .experiments import run_all, run_green, run_pointwise, run_stability
from .mesh import named_polygon, refine_to_level, write_mesh
from .ritz import SolverError

EXIT_OK, EXIT_VIOLATION, EXIT_ERROR = 0, 1, 2

RUNNERS = {
    "pointwise": lambda c: [run_pointwise(c)],
    "stability": lambda c: [run_stability(c)],
    "green": lambda c: [run_green(c)],
    "all": run_all,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ritzlab", description="Ritz projection stability experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        s = sub.add_parser(name, help=f"run the {name} experiment" if name != "all" else "run every experiment")
        s.add_argument("--config", required=True, help="JSON experiment configuration")
        s.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    m = sub.add_parser("mesh", help="export a uniformly refined mesh")
    m.add_argument("--polygon", default="square")
    m.add_argument("--levels", type=int, default=4)
    m.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "mesh":
            write_mesh(refine_to_level(named_polygon(args.polygon), args.levels), args.out)
            print(args.out)
            return EXIT_OK
        config = load_config(args.config)
        reports = RUNNERS[args.command](config)
    except (ConfigError, KeyError, ValueError, SolverError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    out = args.out or config.output_dir
    violations = []
    for rep in reports:
        print(rep.write(out))
        violations += rep.violations
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
    return EXIT_VIOLATION if violations else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
