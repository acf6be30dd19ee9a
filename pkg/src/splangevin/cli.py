"""Command line entry point: ``splangevin <experiment> [options]``."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import EXPERIMENTS, ConfigError, parse_config
from .experiments import EXIT_CONFIG, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splangevin",
        description="Run a stochastic proximal Langevin experiment and write CSV diagnostics.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", metavar="FILE", help="key = value settings file; flags take precedence")
    parser.add_argument("--algo", dest="algorithms", metavar="A,B", help="comma list of spla, ssla, proxla, la")
    parser.add_argument("--gamma", help="step size")
    parser.add_argument("--iters", dest="iterations", help="number of iterations")
    parser.add_argument("--seed")
    parser.add_argument("--chains", help="number of chains advanced together")
    parser.add_argument("--x0", help="common starting value of every coordinate")
    parser.add_argument("--thinning", help="record every THINNING-th iterate")
    where = parser.add_mutually_exclusive_group()
    where.add_argument("--graph", metavar="PATH", help="SNAP-style edge list")
    where.add_argument("--grid", metavar="RxC", help="synthetic grid graph")
    parser.add_argument("--lam", help="TV weight (default: balanced against the data term)")
    parser.add_argument("--sigma", help="noise level of the observation")
    parser.add_argument("--n-batch", dest="n_batch", help="edges per stochastic batch")
    parser.add_argument("--inpaint", action="store_const", const=True, help="zero half of the observation")
    parser.add_argument("--replicates", help="chains used per entropy estimate")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


_OVERRIDES = (
    "algorithms", "gamma", "iterations", "seed", "chains", "x0", "thinning",
    "graph", "grid", "lam", "sigma", "n_batch", "inpaint", "replicates", "out",
)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {key: getattr(args, key) for key in _OVERRIDES}
    overrides["experiment"] = args.experiment
    try:
        cfg = parse_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"splangevin: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_experiment(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
