#!/usr/bin/env python3
import argparse
import logging
import sys
import traceback
from typing import List, Optional

from nonlocalreg import exceptions, setup_run
from nonlocalreg.command_handlers import HANDLERS
from nonlocalreg.kinds import ReportFormat

import utils

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration, or `example` for resources/example.cfg")
    common.add_argument("--out-dir", default="out", help="directory for reports and data files")
    common.add_argument("--format", choices=[f.value for f in ReportFormat], default=ReportFormat.JSON.value,
                        help="check report format")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized sample sweeps")
    common.add_argument("--tolerance-scale", type=float, default=1.0,
                        help="multiplies the quadrature tolerances")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(
        prog="nonlocalreg",
        description="Numerical certificates and solvers for inhomogeneous nonlocal operators.",
    )
    commands = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name, handler in HANDLERS.items():
        commands.add_parser(name, parents=[common], help=(handler.__doc__ or name).strip().splitlines()[0])
    return parser


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def run_command(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; 0 if every check passed, 1 on a failed check, 2 on usage errors."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    configure_logging(args.verbose)

    handler = None
    try:
        settings = setup_run.load_settings(utils.resolve_config(args.config))
        settings.tolerance_scale = args.tolerance_scale
        engine = setup_run.new_run(settings, utils.ensure_dir(args.out_dir), args.command,
                                   seed=args.seed, fmt=ReportFormat(args.format))
        handler = HANDLERS[args.command](engine)
        handler.handle_command()
    except exceptions.CheckFailed as exc:
        handler.on_render(sys.stdout, only_failures=args.verbose == 0)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (exceptions.ConfigError, exceptions.PreconditionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except exceptions.Impossible as exc:
        # numerical failure: the check could not be established
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except Exception:
        traceback.print_exc()
        return EXIT_USAGE

    handler.on_render(sys.stdout, only_failures=args.verbose == 0)
    return EXIT_OK


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
