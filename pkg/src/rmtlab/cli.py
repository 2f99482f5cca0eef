"""Command-line entry point.

Exit codes: 0 success, 2 invalid configuration, 3 capacity guard,
4 output I/O failure, 5 malformed input record.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ExperimentConfig
from .errors import ConfigError, MalformedRecordError, RmtLabError
from .report import FORMATS, emit_report, read_record, refit_slope
from .rng import worker_count
from .runner import record_to_csv, run_experiment, write_record

EXPERIMENT_COMMANDS = {
    "estimate-tail": "tail",
    "estimate-smallball": "smallball",
    "verify-moments": "moments",
    "verify-identity": "identity",
    "density-check": "density",
    "hs-compare": "hs_comparison",
    "perturbation-scan": "perturbation_scan",
}


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--t-grid", type=_floats)
    p.add_argument("--s-grid", type=_floats)
    p.add_argument("--trials", type=int)
    p.add_argument("--inner-trials", type=int)
    p.add_argument("--outer-trials", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dist", default="gaussian", help="gaussian, rademacher or uniform_unit_variance")
    p.add_argument("--statistic")
    p.add_argument("--taus", type=_floats)
    p.add_argument("--i", type=int)
    p.add_argument("--j", type=int)
    p.add_argument("--symmetrize", action="store_true")
    p.add_argument("--threshold-c", type=float)
    p.add_argument("--out", help="output base path; writes <out>.json and <out>.csv")
    p.add_argument("--overwrite", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rmtlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in EXPERIMENT_COMMANDS:
        _common(sub.add_parser(name))

    run = sub.add_parser("run", help="run an experiment from a JSON config file")
    run.add_argument("config")
    run.add_argument("--out")
    run.add_argument("--overwrite", action="store_true")

    fit = sub.add_parser("fit-slope", help="fit the log-log slope of a stored tail record")
    fit.add_argument("record")
    fit.add_argument("--out", required=True)
    fit.add_argument("--overwrite", action="store_true")

    plot = sub.add_parser("plot", help="re-emit a record as csv, json or svg")
    plot.add_argument("record")
    plot.add_argument("--format", default="svg")
    plot.add_argument("--out")
    plot.add_argument("--overwrite", action="store_true")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    fields = dict(experiment=EXPERIMENT_COMMANDS[args.command], n=args.n, k=args.k, m=args.m,
                  t_grid=args.t_grid, s_grid=args.s_grid, trials=args.trials,
                  inner_trials=args.inner_trials, outer_trials=args.outer_trials,
                  entry_dist=args.dist, seed=args.seed, output_path=args.out,
                  statistic=args.statistic, taus=args.taus, i=args.i, j=args.j,
                  symmetrize=args.symmetrize, threshold_c=args.threshold_c)
    return ExperimentConfig(**fields)


def _load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def _execute(cfg: ExperimentConfig, out, overwrite: bool):
    try:
        worker_count()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    record = run_experiment(cfg)
    target = out or cfg.output_path
    if target:
        paths = write_record(record, target, overwrite)
        print(f"wrote {paths[0]} and {paths[1]} ({record.wall_time_seconds:.2f}s)", file=sys.stderr)
    else:
        sys.stdout.write(record_to_csv(record))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in EXPERIMENT_COMMANDS:
            _execute(_config_from_args(args), args.out, args.overwrite)
        elif args.command == "run":
            _execute(_load_config(args.config), args.out, args.overwrite)
        elif args.command == "fit-slope":
            record = refit_slope(read_record(args.record))
            write_record(record, args.out, args.overwrite)
        elif args.command == "plot":
            if args.format not in FORMATS:
                raise ConfigError(f"unknown format {args.format!r}")
            emit_report(args.record, args.format, args.out, args.overwrite)
    except MalformedRecordError as exc:
        print(f"rmtlab: malformed record: {exc}", file=sys.stderr)
        return exc.exit_code
    except RmtLabError as exc:
        print(f"rmtlab: {exc}", file=sys.stderr)
        return exc.exit_code
    except (TypeError, ValueError) as exc:
        print(f"rmtlab: invalid configuration: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
