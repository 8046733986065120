"""Command-line interface: ``pamlab <command> [flags]``.

Exit status is 0 when every check passes, 1 when a check fails and 2 on a
usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from pamlab.errors import InfeasibleError, InvalidArgument, UsageError
from pamlab.harness.experiments import DEFAULT_SUITE, EXPERIMENTS, ExperimentSpec, run_experiment
from pamlab.harness.report import SuiteReport, export
from pamlab.mc import default_threads

COMMANDS = {
    "verify": DEFAULT_SUITE,
    "moments": ["moments"],
    "spectrum": ["sandwich", "eigen-identities", "solver-crosscheck"],
    "tails": ["tauberian", "conditional-tail"],
    "intermittency": ["intermittency-mass", "peak-census"],
    "ageing": ["ageing-scan"],
    "corr": ["correlation-identity"],
}

# flag name -> experiment parameter
FLAGS = {"gamma": "gamma", "dim": "d", "kappa": "kappa", "radius": "R", "t": "t", "p": "p", "a": "a", "c": "c",
         "samples": "samples", "seed": "seed", "bc": "bc", "tol_scale": "tol_scale"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(suppress=False):
    # on subcommands unset flags must not overwrite values given before the command
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS if suppress else None)
    p.add_argument("--gamma", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--radius", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--bc", choices=["free", "zero"])
    p.add_argument("--tol-scale", dest="tol_scale", type=float, help="multiplier on every check tolerance")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=["json", "csv"], **({} if suppress else {"default": "json"}))
    p.add_argument("--threads", type=int, help="worker threads (default: $PAMLAB_THREADS or 1)")
    p.add_argument("--config", metavar="FILE", help="JSON file with experiment parameters")
    p.add_argument("--quiet", action="store_true", **({} if suppress else {"default": False}))
    return p


def build_parser():
    parser = _Parser(prog="pamlab", description="Parabolic Anderson model laboratory", parents=[_common()])
    common = _common(suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, exps in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=f"run {', '.join(exps)}")
    run = sub.add_parser("run", parents=[common], help="run a single named experiment")
    run.add_argument("experiment", choices=sorted(EXPERIMENTS))
    return parser


def _load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    params = cfg.get("params", cfg)
    return cfg.get("name"), {k: v for k, v in params.items() if k != "name"}


def _params_for(name, base):
    keys = EXPERIMENTS[name].keys
    return {k: v for k, v in base.items() if k in keys}


def main(argv=None):
    try:
        return _main(argv)
    except UsageError as exc:
        print(f"pamlab: usage error: {exc}", file=sys.stderr)
        return 2
    except (InfeasibleError, InvalidArgument) as exc:
        print(f"pamlab: {exc}", file=sys.stderr)
        return 2


def _main(argv):
    args = build_parser().parse_args(argv)
    params = {}
    names = COMMANDS.get(args.command)
    if args.config:
        cfg_name, params = _load_config(args.config)
        if args.command == "run" and cfg_name and cfg_name != args.experiment:
            raise UsageError(f"config names {cfg_name!r} but {args.experiment!r} was requested")
    for flag, key in FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            params[key] = value
    if params.get("tol_scale", 1.0) < 0:
        raise UsageError("--tol-scale must be nonnegative")
    if args.threads is not None and args.threads < 1:
        raise UsageError("--threads must be positive")
    if args.command == "run":
        names = [args.experiment]
    accepted = set().union(*(EXPERIMENTS[n].keys for n in names))
    stray = set(params) - accepted
    if stray:
        raise UsageError(f"{args.command} does not use {sorted(stray)}")
    threads = args.threads if args.threads is not None else default_threads()
    reports = [run_experiment(ExperimentSpec(n, _params_for(n, params)), threads) for n in names]
    suite = SuiteReport(int(params.get("seed", reports[0].seed)), reports)
    if not args.quiet:
        for r in reports:
            for c in r.checks:
                print(f"{'PASS' if c.passed else 'FAIL'}  {r.experiment}/{c.name}  lhs={c.lhs:.6g} rhs={c.rhs:.6g} "
                      f"tol={c.tol:.3g}")
        print(f"{sum(c.passed for _, c in suite.checks)}/{len(suite.checks)} checks passed")
    if args.out:
        try:
            export(reports[0] if len(reports) == 1 else suite, args.format, args.out)
        except OSError as exc:
            print(f"pamlab: cannot write {args.out}: {exc}", file=sys.stderr)
            return 1
    return 0 if suite.passed else 1


if __name__ == "__main__":
    sys.exit(main())
