"""Command-line interface.

    pfspanel <stage> --config run.yaml [--out DIR] [--seed N]
                     [--threshold-mode MODE] [--format csv|json]
                     [--log-level LEVEL]

Stages: synth, ingest, estimate, calibrate, dynamics, report, validate.

Exit codes: 0 success, 1 usage or configuration problem, 2 data problem,
3 numerical failure, 4 validation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .errors import EXIT_USAGE, PipelineError, UsageError
from .pipeline import SUBCOMMANDS, run

log = logging.getLogger("pfspanel")


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so errors map to exit 1."""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pfspanel", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", metavar="stage")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", help="override the run output directory")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument(
            "--threshold-mode",
            choices=("anchored", "snap-model", "p5", "p20"),
            help="override the cutoff calibration mode",
        )
        p.add_argument(
            "--format", choices=("csv", "json"), dest="table_format",
            help="report table serialization (tables only; figures stay SVG)",
        )
        p.add_argument(
            "--log-level",
            default="INFO",
            choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.subcommand:
            raise UsageError("a stage is required; see --help")
        logging.basicConfig(
            level=getattr(logging, args.log_level),
            format="%(levelname)s %(name)s: %(message)s",
        )
        config = load_config(args.config).with_overrides(
            out=args.out,
            seed=args.seed,
            threshold_mode=args.threshold_mode,
            report_format=args.table_format,
        )
        bundle = run(args.subcommand, config)
    except PipelineError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except UsageError as exc:  # pragma: no cover - PipelineError subclass
        log.error("%s", exc)
        return EXIT_USAGE
    print(f"{args.subcommand}: {len(bundle.files)} files -> {bundle.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
