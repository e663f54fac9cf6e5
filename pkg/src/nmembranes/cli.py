"""Command line driver.

Exit codes: 0 success, 1 config error, 2 solver non-convergence,
3 verification failure.
"""

from __future__ import annotations

import argparse
import sys

from . import experiments
from .config import ConfigError, load_config
from .evolution import SolverFailure


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nmembranes",
        description="Solvers and verification experiments for the "
                    "constrained membrane system")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, metavar="FILE")
        cmd.add_argument("--out", required=True, metavar="DIR")
        return cmd

    add("solve", "march the penalized evolution, write snapshots/timeseries")
    add("stationary", "solve the stationary constrained system")
    cmp_cmd = add("oracle-compare",
                  "penalized vs projected solutions across epsilon levels")
    cmp_cmd.add_argument("--eps-list", default=None, metavar="E1,E2,...",
                         help="epsilon levels (default: eps, eps/2, eps/4)")
    cmp_cmd.add_argument("--jobs", type=int, default=1)
    add("verify", "structural verification of one run (exit 3 on failure)")
    pert = add("perturb", "continuous-dependence scaling table")
    pert.add_argument("--delta", type=float, default=0.4)
    pert.add_argument("--halvings", type=int, default=2)
    pert.add_argument("--jobs", type=int, default=1)
    asym = add("asymptotic", "stabilization toward the stationary state")
    asym.add_argument("--check-interval", type=float, default=0.5)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 1

    for warning in config.warnings:
        print(f"warning: {warning}")

    try:
        if args.command == "solve":
            result = experiments.run_solve(config, args.out)
            for warning in result.warnings:
                print(f"warning: {warning}")
            print(f"solved {result.final_state.step_index} steps to "
                  f"t = {result.final_state.t:g}")
        elif args.command == "stationary":
            experiments.run_stationary(config, args.out)
            print("stationary solve complete")
        elif args.command == "oracle-compare":
            if args.eps_list:
                eps_list = [float(e) for e in args.eps_list.split(",") if e]
            else:
                eps_list = [config.epsilon, config.epsilon / 2,
                            config.epsilon / 4]
            rows = experiments.run_oracle_compare(config, eps_list, args.out,
                                                  jobs=args.jobs)
            for row in rows:
                print(f"eps={row['eps']:.3e}  max|diff|={row['max_norm_dist']:.3e}"
                      f"  gradp={row['gradp_dist']:.3e}")
        elif args.command == "verify":
            bundle = experiments.run_verify(config, args.out)
            checks = [("lattice bounds", bundle.ls.passed),
                      ("reaction identity", bundle.identity_passed),
                      ("ordering defect", bundle.ordering_passed),
                      ("T-monotonicity", bundle.t_monotone_passed)]
            for name, ok in checks:
                print(f"{'PASS' if ok else 'FAIL'}  {name}")
            if not bundle.passed:
                return 3
        elif args.command == "perturb":
            rows = experiments.run_perturb(config, args.delta, args.halvings,
                                           args.out, jobs=args.jobs)
            for row in rows:
                print(f"delta={row['delta']:.3e}  E={row['energy']:.3e}  "
                      f"eps*={row['eps_star']:.3e}  ratio={row['ratio']:.3e}")
        elif args.command == "asymptotic":
            report = experiments.run_asymptotic(config, args.out,
                                                args.check_interval)
            print(report.message)
            print(f"final distance to stationary: {report.final_distance:.3e}")
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    return 0


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
