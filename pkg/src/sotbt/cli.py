"""Command line entry point.

Subcommands:
  run <scenario>    simulate a scenario (optionally repeated trials)
  validate <scenario>   parse and check a scenario file
  list-scenarios    print the names of the bundled scenarios

Exit status: 0 when the mission (or every trial of a batch) succeeds,
1 on failure outcomes, 2 on usage, parse, or validation errors.
"""

import argparse
import sys
from pathlib import Path

from .errors import SotBtError
from . import scenario as sim


def _parse_rates(text):
    try:
        dt_str, ratio_str = text.split(",")
        dt = float(dt_str)
        ratio = int(ratio_str)
        if dt <= 0 or ratio < 1:
            raise ValueError
        return dt, ratio
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected 'dt,R' with dt > 0 and integer R >= 1, got {text!r}")


def _load(ref):
    """Accept a filesystem path or the name of a bundled scenario."""
    path = Path(ref)
    if path.exists():
        return sim.load_scenario(path)
    if ref in sim.bundled_scenario_names():
        return sim.load_bundled_scenario(ref)
    raise SotBtError(f"no such scenario file or bundled scenario: {ref!r}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sotbt",
        description="Behavior-tree driven stack-of-tasks simulation runner.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario")
    p_run.add_argument("scenario", help="scenario file or bundled scenario name")
    p_run.add_argument("--trials", type=int, default=None,
                       help="repeat with randomized starts and report a table")
    p_run.add_argument("--seed", type=int, default=None, help="random seed")
    p_run.add_argument("--out", type=Path, default=None,
                       help="directory for exported artifacts")
    p_run.add_argument("--export", action="append", default=None,
                       choices=("csv", "summary", "plotdata"),
                       help="artifact kinds to write (repeatable)")
    p_run.add_argument("--rates", type=_parse_rates, default=None, metavar="dt,R",
                       help="control step dt and control steps per tick")
    p_run.add_argument("--concurrent", action="store_true",
                       help="run BT and control loops as two threads")
    p_run.add_argument("--backend", choices=("python", "cython"), default=None,
                       help="QP kernel backend (default: best available)")

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("scenario", help="scenario file or bundled scenario name")

    sub.add_parser("list-scenarios", help="list bundled scenarios")
    return parser


def _cmd_run(args):
    scenario = _load(args.scenario)

    if args.trials is not None:
        if args.concurrent:
            raise SotBtError("--trials and --concurrent are mutually exclusive")
        report = sim.run_batch(scenario, trials=args.trials,
                               seed=0 if args.seed is None else args.seed,
                               rates=args.rates)
        print(report.table())
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "report.txt").write_text(report.table() + "\n")
            print(f"wrote {args.out / 'report.txt'}")
        return 0 if report.all_succeeded else 1

    if args.concurrent:
        result = sim.run_concurrent(scenario, seed=args.seed, rates=args.rates,
                                    backend=args.backend)
    else:
        result = sim.run(scenario, seed=args.seed, rates=args.rates,
                         backend=args.backend)
    print(sim.summary_text(result))
    if args.out is not None:
        formats = tuple(args.export) if args.export else ("csv", "summary")
        written = sim.export(result, scenario, args.out, formats=formats)
        for name in written:
            print(f"wrote {args.out / name}")
    return 0 if result.succeeded else 1


def _cmd_validate(args):
    scenario = _load(args.scenario)
    n_tasks = len(scenario.tasks)
    print(f"{scenario.name}: OK ({scenario.model.n} joints, {n_tasks} tasks)")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "validate":
            return _cmd_validate(args)
        for name in sim.bundled_scenario_names():
            print(name)
        return 0
    except SotBtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
