"""Command-line entry point.

    fractalcomp run --experiment fig4 --out results --trials 100000 --seed 7 --engines mc,analytic
    fractalcomp compare results/fig4_mc_rate_power.csv results/fig4_analytic_rate_power.csv

Flags given without a subcommand are treated as ``run``. Exit status is 0 when
every comparison, truncation and table check passed, 1 when one failed, 2 for
an invalid scenario and 3 for an unwritable output directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ENGINES, EXPERIMENTS, load_spec
from .model import ConfigError
from .runner import GridMismatchError, compare, run

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _engines(text: str) -> str:
    names = [e.strip() for e in text.split(",") if e.strip()]
    bad = [e for e in names if e not in ENGINES]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"engines must be a comma list drawn from {ENGINES}")
    return ",".join(names)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fractalcomp", description="Cooperation-strategy sweeps for small-cell networks.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment preset or a custom sweep")
    r.add_argument("--experiment", choices=EXPERIMENTS, help="preset name (default: from config, else custom)")
    r.add_argument("--config", help="YAML or JSON scenario file; a previous run summary also works")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--trials", type=int, help="Monte Carlo trials per sweep point")
    r.add_argument("--seed", type=_u64, help="64-bit base seed")
    r.add_argument("--engines", type=_engines, help="comma list from: mc,analytic")
    r.add_argument("--truncation-check", action="store_true", default=None,
                   help="rerun the simulator with twice the window radius and require stable estimates")

    c = sub.add_parser("compare", help="compare an MC result file with an analytic one")
    c.add_argument("mc_csv")
    c.add_argument("analytic_csv")
    c.add_argument("--sigmas", type=float, default=3.0, help="MC standard errors allowed (default 3)")
    c.add_argument("--json", dest="json_out", help="also write the report here")
    return parser


def _cmd_run(args) -> int:
    try:
        spec = load_spec(args.config, name=args.experiment, engines=args.engines, n_trials=args.trials,
                         seed=args.seed, output_dir=args.out, truncation_check=args.truncation_check)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run(spec)
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    for msg in result.failures:
        print(f"check failed: {msg}", file=sys.stderr)
    print(f"{spec.name}: {'all checks passed' if result.passed else f'{len(result.failures)} check(s) failed'}; "
          f"results in {spec.output_dir}")
    return EXIT_OK if result.passed else EXIT_FAILED


def _cmd_compare(args) -> int:
    try:
        report = compare(args.mc_csv, args.analytic_csv, args.sigmas)
    except GridMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in report["points"]:
        verdict = "pass" if p["passed"] else "FAIL"
        print(f"{verdict} {p['metric']} {p['param_name']}={p['param_value']}: mc={p['mc']:.6g} "
              f"analytic={p['analytic']:.6g} gap={p['gap']:.3g} allowed={p['allowed']:.3g}")
    print(f"{report['n_passed']}/{report['n_points']} points passed")
    if args.json_out:
        with open(args.json_out, "w") as fh:
            json.dump(report, fh, indent=2)
    return EXIT_OK if report["n_passed"] == report["n_points"] else EXIT_FAILED


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0].startswith("-") and argv[0] not in ("-h", "--help", "-v", "--verbose"):
        argv.insert(0, "run")
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_compare(args)


if __name__ == "__main__":
    sys.exit(main())
