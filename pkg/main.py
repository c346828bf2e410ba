"""
offgrid CLI entrypoint.

Runs the flow for one verb with the shared store initialized from defaults and CLI args.
"""

import argparse
import logging
import os
import sys

from dotenv import load_dotenv

from shared_schema import default_shared_store

load_dotenv()
from flow import FLOW_FACTORIES, create_flow  # noqa: E402
from offgrid.errors import ConfigError, DomainError, InputError, NumericalViolation, StructuralError  # noqa: E402
from utils.dir_helpers import resolve_output_dir  # noqa: E402

logger = logging.getLogger("offgrid")

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse CLI arguments: a verb, then scenario options."""
    p = argparse.ArgumentParser(
        prog="offgrid",
        description="Off-the-grid mixture estimation and goodness-of-fit tests on continuous dictionaries.",
    )
    p.add_argument("command", choices=sorted(FLOW_FACTORIES), help="What to run.")
    p.add_argument(
        "--config",
        type=str,
        default=None,
        help="YAML scenario file (default: built-in defaults).",
    )
    p.add_argument(
        "--output-dir",
        type=str,
        default=None,
        help="Directory for outputs (default: $OFFGRID_OUTPUT_DIR or output).",
    )
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a scenario key, e.g. --set dictionary.T=512 (repeatable).",
    )
    p.add_argument("--seed", type=int, default=None, help="Replace the scenario seed.")
    p.add_argument(
        "--threads",
        type=_positive_int,
        default=None,
        metavar="N",
        help="Worker threads (default: $OFFGRID_THREADS, mc.threads or 1).",
    )
    args = p.parse_args(argv)
    if args.seed is not None and args.seed < 0:
        p.error("--seed must be nonnegative.")
    return args


def _threads(cli_value: int | None) -> int | None:
    if cli_value is not None:
        return cli_value
    env = os.environ.get("OFFGRID_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"OFFGRID_THREADS must be an integer, got {env!r}") from None
    return None


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, DomainError, StructuralError, InputError)):
        return EXIT_CONFIG
    if isinstance(exc, NumericalViolation):
        return EXIT_NUMERICAL
    if isinstance(exc, OSError):
        return EXIT_IO
    return 1


def main(argv: list[str] | None = None) -> int:
    """Parse args, populate shared store, run flow. Returns 0 on success, non-zero on failure."""
    logging.basicConfig(
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        args = parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0  # argparse error -> 2

    shared = default_shared_store()
    shared["command"] = args.command
    shared["config_path"] = args.config.strip() if args.config else None
    shared["overrides"] = list(args.overrides)
    shared["seed"] = args.seed

    try:
        shared["output_dir"] = str(resolve_output_dir(args.output_dir))
        # None lets LoadScenario fall back to mc.threads
        shared["threads"] = _threads(args.threads)
        flow = create_flow(args.command)
        logger.info("Starting %s: config=%s, output=%s", args.command, shared["config_path"] or "<defaults>", shared["output_dir"])
        flow.run(shared)
    except Exception as e:
        code = exit_code_for(e)
        if code == 1:
            logger.exception("Pipeline failed: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return code

    for key, value in shared.get("summary", {}).items():
        print(f"{key}: {value}")
    print("Outputs written to:", shared["output_dir"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
