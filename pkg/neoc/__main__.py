import argparse
import logging
import sys

from neoc.config import settings
from neoc.errors import BasisError, ExprError, NeocError, ProblemError, UsageError
from neoc.handlers import register_all_handlers
from neoc.handlers.common import build_config

# flags whose values often start with '-' ("-5*x1", "-0.2 0.2")
VALUE_FLAGS = ("--u0", "--delta", "--deltas")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def attach_values(argv: list[str]) -> list[str]:
    out, i = [], 0
    while i < len(argv):
        token = argv[i]
        if token in VALUE_FLAGS and i + 1 < len(argv):
            out.append(f"{token}={argv[i + 1]}")
            i += 2
            continue
        out.append(token)
        i += 1
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neoc", description="Closed-loop NEOC solver toolkit")
    parser.add_argument("--log-level", default=None, help="override NEOC_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", required=True)
    register_all_handlers(subparsers)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(attach_values(sys.argv[1:] if argv is None else list(argv)))
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )
    try:
        if getattr(args, "standalone", False):
            return args.handler()
        return args.handler(build_config(args))
    except (UsageError, ProblemError, BasisError, ExprError) as e:
        logging.error("%s", e)
        return EXIT_USAGE
    except NeocError as e:
        logging.error("%s", e)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
