"""Command line interface for the experiment harness.

Usage::

    focusedeig <experiment> --config cfg.json [--seed S] [--out PATH]
               [--format csv|jsonl] [--threads K]

where ``<experiment>`` is one of eig, sweep, convergence, scaling, or
diagnostics. Flags override the corresponding keys of the config file.
Exit codes: 0 on success, 2 on configuration errors, 1 on runtime errors.
"""

import argparse
import json
import sys

from .harness import (
    ConfigError,
    EXPERIMENT_KINDS,
    emit,
    load_config,
    load_config_file,
    run_experiment,
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="focusedeig",
        description="Expected information gain experiments",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run a '{kind}' experiment")
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the root seed")
        p.add_argument("--out", default=None, help="override the output path")
        p.add_argument("--format", choices=("csv", "jsonl"), default=None,
                       help="override the output format")
        p.add_argument("--threads", type=int, default=None,
                       help="override the worker thread count")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        raw = load_config_file(args.config)
        raw["experiment"] = args.experiment
        for key in ("seed", "out", "format", "threads"):
            value = getattr(args, key)
            if value is not None:
                raw[key] = value
        config = load_config(raw)
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        rows, summary = run_experiment(config)
        if config.out:
            emit(rows, config.format, config.out)
            summary["rows_written"] = len(rows)
            summary["out"] = config.out
        print(json.dumps({"experiment": config.kind, "summary": summary},
                         default=str, indent=2))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
