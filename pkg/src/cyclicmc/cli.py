"""Command-line harness: ``cyclicmc run | validate | plot-data``.

``run`` executes a config file end to end; repeated ``--set key=value``
flags override file values (last one wins). ``validate`` dry-runs the
config and lists every violation. ``plot-data`` turns a finished run
directory into plot tables and figures. The default output directory can
be set with the ``CYCLICMC_OUTPUT_DIR`` environment variable.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, apply_overrides, load_config, validate_config
from .experiments import (DatasetMissingError, IncompleteRunError,
                          emit_plot_data, run_experiment)
from .samplers import DivergedChainError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyclicmc",
        description="Cyclical stochastic-gradient MCMC experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a config file")
    run_p.add_argument("config", help="path to a YAML config")
    run_p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override a config value (repeatable, last wins)")
    run_p.add_argument("--output-dir", default=None,
                       help="base output directory (overrides config and env)")

    val_p = sub.add_parser("validate", help="validate a config without running")
    val_p.add_argument("config", help="path to a YAML config")

    plot_p = sub.add_parser("plot-data",
                            help="emit plot tables and figures for a run")
    plot_p.add_argument("run_dir", help="a completed run directory")
    return parser


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, args.overrides)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    violations = validate_config(cfg)
    if violations:
        for v in violations:
            print(f"invalid config: {v}", file=sys.stderr)
        return 2
    try:
        run_dir = run_experiment(cfg, output_dir=args.output_dir)
    except DatasetMissingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DivergedChainError as exc:
        print(f"error: chain diverged: {exc}", file=sys.stderr)
        return 1
    print(run_dir)
    return 0


def _cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        for v in exc.violations:
            print(f"invalid config: {v}", file=sys.stderr)
        return 1
    violations = validate_config(cfg)
    if violations:
        for v in violations:
            print(f"invalid config: {v}", file=sys.stderr)
        return 1
    print("config ok")
    return 0


def _cmd_plot_data(args) -> int:
    try:
        plot_dir = emit_plot_data(args.run_dir)
    except IncompleteRunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(plot_dir)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return {"run": _cmd_run,
            "validate": _cmd_validate,
            "plot-data": _cmd_plot_data}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
