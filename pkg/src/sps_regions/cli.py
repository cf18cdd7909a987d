"""Command-line entry point: ``sps-regions <subcommand> [options]``.

Exit status: 0 on success, 1 if any property/concentration check fails,
2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .bounds import BoundError, BoundInputs, bound_curve
from .data import DataModelError
from .experiments import (
    DEFAULT_EPS_GRID,
    ExperimentConfig,
    ExperimentError,
    bound_csv,
    checks_csv,
    coverage_csv,
    figure1_csv,
    parse_grid,
    run_concentration_check,
    run_coverage,
    run_figure1,
    run_property_suite,
)


class _UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sps-regions", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(name: str, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON experiment config (see README for the schema)")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--out", help="CSV output path (default: config output_path, else stdout)")
        p.add_argument("--threads", type=int, help="worker threads (default: $SPS_THREADS or 1)")
        return p

    p = experiment("coverage", "empirical coverage of the true parameter")
    p.add_argument("--trials", type=int, help="number of trials (default: config trajectories)")
    p.add_argument("--m", type=int)
    p.add_argument("--q", type=int)

    p = experiment("figure1", "empirical quantile diameters next to the diameter bound")
    p.add_argument("--trajectories", type=int)
    p.add_argument("--grid", help="sample sizes, e.g. 250..2000:50")

    p = experiment("properties", "randomized checks of the certificate identities")
    p.add_argument("--instances", type=int, default=100)

    p = experiment("concentration", "empirical tails against the concentration bounds")
    p.add_argument("--n", type=int, default=500, help="sample size per trajectory")
    p.add_argument("--trials", type=int, help="number of trajectories (default: config trajectories)")
    p.add_argument("--eps", type=_float_list, help="comma-separated epsilon grid")

    p = sub.add_parser("bound", help="evaluate the diameter bound over a range of n")
    p.add_argument("--n", required=True, help="sample sizes, e.g. 36..2000 or 36..2000:10")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--sigma", type=float, default=3 ** -0.5)
    p.add_argument("--lambda0", type=float, required=True)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--out")
    return parser


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    for key in ("m", "q", "trajectories"):
        if getattr(args, key, None) is not None:
            changes[key] = getattr(args, key)
    if getattr(args, "grid", None):
        changes["grid"] = parse_grid(args.grid)
    return dataclasses.replace(config, **changes) if changes else config


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(args) -> int:
    if args.command == "bound":
        ns = parse_grid(args.n)
        base = BoundInputs(
            sigma=args.sigma, lambda0=args.lambda0, kappa=args.kappa, rho=args.rho,
            delta=args.delta, d=args.d, n=max(ns[0], args.d), m=args.m, q=args.q,
        )
        _emit(bound_csv(bound_curve(base, ns)), args.out)
        return 0

    config = _load_config(args)
    out = args.out or config.output_path
    threads = args.threads
    if args.command == "coverage":
        _emit(coverage_csv(run_coverage(config, args.trials, threads)), out)
        return 0
    if args.command == "figure1":
        _emit(figure1_csv(run_figure1(config, threads)), out)
        return 0
    if args.command == "properties":
        results = run_property_suite(config.master_seed, args.instances)
    else:
        results = run_concentration_check(
            config, args.eps or DEFAULT_EPS_GRID, n=args.n, trials=args.trials, threads=threads
        )
    _emit(checks_csv(results), out)
    return 0 if all(r.passed for r in results) else 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return run(args)
    except (ExperimentError, DataModelError, BoundError, OSError, ValueError, KeyError) as exc:
        print(f"sps-regions: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
