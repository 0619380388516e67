"""Command line entry point.

Exit codes: 0 success, 1 a check failed, 2 configuration or input error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, ConvergenceError, DiameterLearningError, InvalidInput
from .experiment import ExperimentConfig, run_experiment
from .mdp import diameter, load_mdp, solve_gain_bias
from .validation import counterexample_lower_bound, counterexample_mc, exact_expected_z, validate

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    summary = run_experiment(cfg, args.out)
    print(json.dumps({k: summary[k] for k in ("agent", "T", "mean_final_regret", "mean_curve_slope")}))
    return EXIT_OK


def _cmd_validate(args) -> int:
    report = validate(args.suite, args.seed)
    for line in report.lines():
        print(line)
    print(f"suite {report.suite}: {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _cmd_counterexample(args) -> int:
    res = counterexample_mc(args.states, args.draws, args.trials, args.seed)
    print(f"mean Z        {res.mean:.6f}")
    print(f"std error     {res.std_error:.6f}")
    print(f"claimed bound {res.claimed_bound:.6f}")
    print(f"exact E[Z]    {exact_expected_z(args.states, args.draws):.6f}")
    print(f"lower bound   {counterexample_lower_bound(args.states, args.draws):.6f}")
    return EXIT_OK if res.mean > res.claimed_bound else EXIT_CHECK_FAILED


def _cmd_solve(args) -> int:
    try:
        mdp = load_mdp(args.mdp)
    except OSError as exc:
        raise ConfigError(f"cannot read MDP file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"MDP file is not valid JSON: {exc}") from None
    gb = solve_gain_bias(mdp)
    print(f"rho* = {gb.gain!r}")
    print(f"h*   = {[float(x) for x in gb.bias]}")
    print(f"sp   = {gb.span!r}")
    try:
        print(f"D    = {diameter(mdp)!r}")
    except ConvergenceError:
        print("D    = inf")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ebflab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="run a validation suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("counterexample", help="multinomial deviation counterexample")
    p.add_argument("--states", type=int, default=5000)
    p.add_argument("--draws", type=int, default=50)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_counterexample)

    p = sub.add_parser("solve", help="exact gain, bias and diameter of an MDP file")
    p.add_argument("--mdp", required=True)
    p.set_defaults(func=_cmd_solve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, InvalidInput, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DiameterLearningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
