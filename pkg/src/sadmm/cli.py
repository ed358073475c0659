"""Command-line entry point ``sadmm``.

Exit codes: 0 success, 2 configuration error, 3 a run diverged,
4 a diagnostic check failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .diagnostics import ReferenceError, rate_slope
from .harness import ConfigError, ExperimentConfig, run, run_checks
from .solvers import SOLVERS
from .trace import CSV_COLUMNS, MetricTrace

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CHECK = 0, 2, 3, 4


def _load(args):
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "paper_lipschitz", False):
        cfg = dataclasses.replace(cfg, paper_lipschitz=True)
    return cfg


def _cmd_run(args):
    cfg = _load(args)
    results = run(cfg, solver=args.solver, seed=args.seed, out_dir=args.out)
    code = EXIT_OK
    for r in results:
        if r.seed is None:
            print(f"{r.solver:5s} mean  -> {r.csv_path}")
            continue
        where = r.csv_path if r.status == "ok" else r.error
        print(f"{r.solver:5s} seed {r.seed}: {r.status} {where}")
        if r.status == "diverged":
            code = EXIT_DIVERGED
        elif r.status != "ok" and code == EXIT_OK:
            code = EXIT_CONFIG
    return code


def _cmd_check(args):
    cfg = _load(args)
    report = run_checks(cfg, seed=args.seed)
    print(report.to_json() if args.json else report.to_text())
    return EXIT_OK if report.passed else EXIT_CHECK


def _cmd_slope(args):
    trace = MetricTrace.from_csv(args.csv)
    values = trace.column(args.column)
    S = [r.epoch + 1 for r in trace]
    if args.epochs:
        wanted = set(args.epochs)
        pairs = [(s, v) for s, v in zip(S, values) if s in wanted]
        S, values = [p[0] for p in pairs], [p[1] for p in pairs]
    if any(v is None for v in values):
        raise ConfigError(f"column {args.column} has empty entries")
    print(f"{rate_slope(S, values):.6f}")
    return EXIT_OK


def _epochs(text):
    return [int(t) for t in text.split(",") if t]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sadmm", description="Run stochastic ADMM experiments and their diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every (solver, seed) pair of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--solver", choices=sorted(SOLVERS))
    p.add_argument("--seed", type=int)
    p.add_argument("--paper-lipschitz", action="store_true",
                   help="use max ||a_i||^2 as the squared-loss Lipschitz constant")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("check", help="run the diagnostics suite on a config's problem")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--paper-lipschitz", action="store_true")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("slope", help="log-log slope of a metric column against epochs")
    p.add_argument("--csv", required=True)
    p.add_argument("--column", default="constraint_violation",
                   choices=[c for c in CSV_COLUMNS if c not in ("epoch", "grad_evals")])
    p.add_argument("--epochs", type=_epochs, help="comma-separated epoch counts to fit")
    p.set_defaults(func=_cmd_slope)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ReferenceError, OSError, ValueError) as exc:
        print(f"sadmm: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
