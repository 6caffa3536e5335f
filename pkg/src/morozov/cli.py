"""Command-line front end for the experiment runner.

Exit status: 0 when the run's postconditions verified, 1 when the run
failed them (inadmissible data, a decreasing curve, a solver check),
2 for configuration errors.
"""

import argparse
import sys
from dataclasses import replace

from .experiment import ExperimentConfig, run_curve, run_error_vs_eps, \
    run_mesh_dump, run_project, run_solve, run_sweep


def build_parser():
    parser = argparse.ArgumentParser(
        prog="morozov",
        description="Morozov-principle data assimilation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("curve", "discrepancy vs eps on a log grid"),
        ("solve", "one Morozov-regularized solve with a full report"),
        ("sweep", "repeat a solve over alpha, delta_r or projector"),
        ("error-vs-eps", "reconstruction error along the eps grid"),
        ("mesh-dump", "write the configured mesh as plain text"),
        ("project", "range-complement projection of the data"),
    ]
    for name, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="key = value file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        if name == "sweep":
            p.add_argument("--threads", type=int, default=1,
                           help="parallel rows (order in the CSV is fixed)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.from_file(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed).validate()
    except (OSError, ValueError, TypeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2

    try:
        if args.command == "curve":
            paths, ok, msg = run_curve(cfg, args.out)
        elif args.command == "solve":
            paths, ok, msg, report = run_solve(cfg, args.out)
            for name in report.csv_fields:
                print(f"{name}: {getattr(report, name)}")
            print(f"wall_seconds: {report.wall_seconds:.3f}")
        elif args.command == "sweep":
            paths, ok, msg, reports = run_sweep(cfg, args.out,
                                                threads=args.threads)
            for rr in reports:
                print(f"{rr.status}: eps={rr.epsilon} h1_rel={rr.h1_rel} "
                      f"({rr.wall_seconds:.3f}s)")
        elif args.command == "error-vs-eps":
            paths, ok, msg = run_error_vs_eps(cfg, args.out)
        elif args.command == "mesh-dump":
            paths, ok, msg = run_mesh_dump(cfg, args.out)
        else:
            paths, ok, msg = run_project(cfg, args.out)
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2

    for path in paths:
        print(f"wrote {path}")
    if not ok:
        print(f"failed: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
