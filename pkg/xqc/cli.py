"""Command line entry point: `xqc train|matrix|scaling|report|verify`.

Example usage:
    xqc train --task pendulum --arch bn,wn,ce --steps 30000 --seed 0 \
        --out runs/
    xqc matrix --plan experiments/plans/matrix.cfg
    xqc scaling --axis utd --values 1,2,4 --out runs/scaling
    xqc report runs/
    xqc verify
"""
import argparse
import sys
from pathlib import Path

import gymnasium

from xqc.agents.xqc.config import TrainerConfig
from xqc.agents.xqc.training import train
from xqc.environments import TASKS, make
from xqc.experiments.matrix import resolve_workers, run_matrix
from xqc.experiments.plan import (
    PRESETS,
    even_schedule,
    load_plan,
    plan_from_config,
)
from xqc.experiments.scaling import AXES, parse_values, run_scaling
from xqc.experiments.verify import CHECKS, run_checks
from xqc.utils.exceptions import ConfigurationError, XQCError
from xqc.utils.netlib.config import ArchitectureConfig
from xqc.utils.post_processing.render import render_reports
from xqc.utils.post_processing.run_io import (
    config_overrides,
    parse_config,
    read_config,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _settings(args):
    """Key=value settings from `--config` files and `--set` flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(read_config(args.config))
    for item in getattr(args, "set", None) or []:
        values.update(parse_config(item))
    return values


def _schedule(args, total_steps):
    if args.probe_steps:
        return parse_values(args.probe_steps)
    if args.probes:
        return even_schedule(total_steps, args.probes)
    return ()


def cmd_train(args):
    values = _settings(args)
    architecture = ArchitectureConfig.from_cell(
        args.arch, **config_overrides(ArchitectureConfig, values, "arch.")
    )
    config = TrainerConfig(
        **config_overrides(TrainerConfig, values, "trainer.")
    )
    out_dir = None
    if args.out:
        out_dir = Path(args.out) / args.task / architecture.cell
        out_dir = out_dir / f"seed_{args.seed}"
    env = make(args.task)
    try:
        artifacts = train(
            env,
            config=config,
            architecture=architecture,
            total_steps=args.steps,
            seed=args.seed,
            probe_schedule=_schedule(args, args.steps),
            out_dir=out_dir,
            workers=resolve_workers(args.workers),
            progress=args.progress,
        )
    finally:
        env.close()
    if artifacts.evals:
        last = artifacts.evals[-1]
        gymnasium.logger.info(
            f"Final evaluation: return {last['eval_return']:.3f}, "
            f"normalized {last['normalized_return']:.3f}"
        )
    if out_dir is not None:
        print(f"Saved run to {out_dir}.")
    return EXIT_OK


def _plan(args):
    if args.plan:
        return load_plan(args.plan, out_dir=args.out)
    values = _settings(args)
    values.setdefault("task", args.task)
    values.setdefault("seeds", args.seeds)
    values.setdefault("total_steps", str(args.steps))
    if args.probes:
        values.setdefault("num_probes", str(args.probes))
    if getattr(args, "arch", None):
        values.setdefault("cells", args.arch)
    elif getattr(args, "preset", None):
        values.setdefault("preset", args.preset)
    return plan_from_config(values, out_dir=args.out)


def cmd_matrix(args):
    plan = _plan(args)
    report = run_matrix(
        plan, workers=resolve_workers(args.workers), progress=args.progress
    )
    print(report.summary.to_string(index=False))
    for failure in report.failures:
        gymnasium.logger.error(
            f"{failure.label} seed {failure.seed}: {failure.error}"
        )
    return EXIT_OK if report.ok else EXIT_FAILED


def cmd_scaling(args):
    plan = _plan(args)
    report = run_scaling(
        plan,
        args.axis,
        parse_values(args.values),
        workers=resolve_workers(args.workers),
        progress=args.progress,
    )
    print(report.summary.to_string(index=False))
    return EXIT_OK if report.ok else EXIT_FAILED


def cmd_report(args):
    written = render_reports(args.directory)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_verify(args):
    results = run_checks(args.check, progress=args.progress)
    for result in results:
        status = "ok" if result.passed else "FAILED"
        print(
            f"{result.name:<24} {status:<6} {result.seconds:7.2f}s  "
            f"{result.detail}"
        )
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def _add_run_arguments(parser, steps):
    parser.add_argument(
        "--task", choices=sorted(TASKS), default="pendulum", help="Toy task"
    )
    parser.add_argument(
        "--steps", type=int, default=steps, help="Environment steps per run"
    )
    parser.add_argument(
        "--probes",
        type=int,
        help="Number of evenly spaced Hessian spectrum probes",
    )
    parser.add_argument(
        "--out", type=str, help="Directory to write run artifacts to"
    )
    parser.add_argument(
        "--config", type=str, help="key=value file with arch./trainer. keys"
    )
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="Override one setting, e.g. trainer.utd=4 (repeatable)",
    )
    parser.add_argument(
        "--workers", type=int, default=1, help="Worker processes or threads"
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="xqc",
        description="Train and diagnose XQC agents on toy control tasks.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument(
        "-v", "--verbose", action="store_true", help="Log info messages"
    )
    verbosity.add_argument(
        "-q",
        "--quiet",
        action="store_true",
        help="Only log errors and hide progress bars",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    train_parser = commands.add_parser("train", help="Train a single run")
    _add_run_arguments(train_parser, steps=30_000)
    train_parser.add_argument(
        "--arch", default="bn,wn,ce", help="Cell, e.g. bn,wn,ce or ln,nown,mse"
    )
    train_parser.add_argument("--seed", type=int, default=0, help="Seed")
    train_parser.add_argument(
        "--probe-steps",
        type=str,
        help="Comma separated probe steps (overrides --probes)",
    )
    train_parser.set_defaults(func=cmd_train)

    matrix_parser = commands.add_parser(
        "matrix", help="Run every (cell, seed) pair of a plan"
    )
    _add_run_arguments(matrix_parser, steps=30_000)
    matrix_parser.add_argument("--plan", type=str, help="Plan file")
    matrix_parser.add_argument(
        "--preset", choices=PRESETS, default="ablations", help="Cell preset"
    )
    matrix_parser.add_argument(
        "--seeds", default="0,1,2,3,4", help="Comma separated seeds"
    )
    matrix_parser.set_defaults(func=cmd_matrix)

    scaling_parser = commands.add_parser(
        "scaling", help="Sweep UTD, critic width or critic depth"
    )
    _add_run_arguments(scaling_parser, steps=30_000)
    scaling_parser.add_argument("--plan", type=str, help="Plan file")
    scaling_parser.add_argument(
        "--axis", choices=AXES, required=True, help="Axis to sweep"
    )
    scaling_parser.add_argument(
        "--values", required=True, help="Comma separated sorted values"
    )
    scaling_parser.add_argument(
        "--arch", default="bn,wn,ce", help="Base cell"
    )
    scaling_parser.add_argument(
        "--seeds", default="0,1,2,3,4", help="Comma separated seeds"
    )
    scaling_parser.set_defaults(func=cmd_scaling)

    report_parser = commands.add_parser(
        "report", help="Render SVG figures from run CSVs"
    )
    report_parser.add_argument("directory", type=str, help="Report root")
    report_parser.set_defaults(func=cmd_report)

    verify_parser = commands.add_parser(
        "verify", help="Run the certificate suite"
    )
    verify_parser.add_argument(
        "--check",
        action="append",
        choices=sorted(CHECKS),
        help="Run only this check (repeatable)",
    )
    verify_parser.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    """Parses arguments, runs a subcommand and returns its exit code."""
    args = build_parser().parse_args(argv)
    if args.verbose:
        gymnasium.logger.set_level(gymnasium.logger.INFO)
    elif args.quiet:
        gymnasium.logger.set_level(gymnasium.logger.ERROR)
    args.progress = not args.quiet
    try:
        return args.func(args)
    except ConfigurationError as error:
        gymnasium.logger.error(f"Invalid configuration: {error}")
        return EXIT_USAGE
    except XQCError as error:
        gymnasium.logger.error(f"{type(error).__name__}: {error}")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
