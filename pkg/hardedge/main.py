"""Command-line entrypoint for the hard-edge toolkit."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from hardedge import __version__
from hardedge.cli.commands import COMMANDS
from hardedge.config import LOG_LEVEL
from hardedge.errors import ConfigError, HardEdgeError
from hardedge.schemas import RunConfig
from hardedge.utils.text import parse_config_file

logger = logging.getLogger("hardedge")

# Keys consumed by the front end itself; everything else is a RunConfig field.
FRONT_END_KEYS = ("config", "verbose", "quiet")


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps unset flags out of the namespace so config files can fill them.
    # No prefix matching: --t would otherwise collide with --tol and --timings.
    parent = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS, allow_abbrev=False)
    parent.add_argument("--d", type=float, help="process dimension (d >= 2)")
    parent.add_argument("--seed", type=int, help="RNG seed")
    parent.add_argument("--out", help="output file (stdout when omitted)")
    parent.add_argument("--tol", type=float, help="series tail tolerance")
    parent.add_argument("--max-terms", dest="max_terms", type=int, help="series term cap")
    parent.add_argument("--quad-points", dest="quad_points", type=int, help="Gauss-Legendre panels on [0, 1]")
    parent.add_argument("--workers", type=int, help="worker threads for batch work")
    parent.add_argument("--timings", action="store_true", help="keep runtimes in verification reports")
    parent.add_argument("--config", help="key = value file; flags override it")
    parent.add_argument("-v", "--verbose", action="count", help="more logging (-vv for debug)")
    parent.add_argument("-q", "--quiet", action="store_true", help="errors only")
    return parent


def create_parser() -> argparse.ArgumentParser:
    """Create the argument parser with the zeros, density, sample and verify subcommands.

    Returns:
        Configured parser.
    """

    parent = _global_flags()
    parser = argparse.ArgumentParser(
        prog="hardedge",
        description="Spectral kernels, samplers and verification for the Bessel process conditioned below 1.",
        parents=[parent],
        allow_abbrev=False,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common: Dict[str, Any] = {"parents": [parent], "argument_default": argparse.SUPPRESS, "allow_abbrev": False}

    zeros = sub.add_parser("zeros", help="certified zeros of J_alpha, alpha = (d - 2)/2", **common)
    zeros.add_argument("--count", type=int, help="number of zeros")

    density = sub.add_parser("density", help="tabulate a transition density", **common)
    density.add_argument("--kind", choices=("killed", "limit", "free", "conditioned", "stationary"))
    density.add_argument("--x", type=float, help="start point")
    density.add_argument("--t", type=float, help="time")
    density.add_argument("--n", type=float, help="conditioning horizon")
    density.add_argument("--points", type=int, help="grid points in y")

    sample = sub.add_parser("sample", help="draw sample paths or marginals", **common)
    sample.add_argument("--sampler", choices=("free", "exact", "rejection", "limit"))
    sample.add_argument("--mode", choices=("path", "marginal"))
    sample.add_argument("--x0", type=float, help="start point")
    sample.add_argument("--t-max", dest="t_max", type=float, help="last grid time")
    sample.add_argument("--step", type=float, help="grid step")
    sample.add_argument("--n", type=float, help="conditioning horizon (exact, rejection)")
    sample.add_argument("--paths", type=int, help="number of paths")

    verify = sub.add_parser("verify", help="run a verification suite", **common)
    verify.add_argument("--suite", choices=("none", "fast", "d3-oracle", "montecarlo", "full"))
    return parser


def _validation_message(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        field = ".".join(str(item) for item in error["loc"]) or "config"
        parts.append(f"{field}: {error['msg']}")
    return "; ".join(parts)


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge flags over the config file over environment defaults and validate.

    Raises:
        ConfigError: the config file is unreadable or the merged values are invalid.
    """

    flags: Dict[str, Any] = {key: value for key, value in vars(args).items() if key not in FRONT_END_KEYS}
    merged: Dict[str, Any] = {}
    config_path = getattr(args, "config", None)
    if config_path:
        merged.update(parse_config_file(Path(config_path)))
        merged.pop("command", None)
    merged.update(flags)
    try:
        return RunConfig(**merged)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {_validation_message(exc)}") from exc


def configure_logging(verbose: int = 0, quiet: bool = False) -> None:
    """Send log records to stderr at a level chosen by flags or HARDEDGE_LOG_LEVEL."""

    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = getattr(logging, LOG_LEVEL, logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit code."""

    args = create_parser().parse_args(argv)
    configure_logging(getattr(args, "verbose", 0) or 0, getattr(args, "quiet", False))
    try:
        config = build_config(args)
        logger.debug("Effective configuration: %s", config.model_dump_json())
        return COMMANDS[config.command](config)
    except HardEdgeError as exc:
        logger.debug("Failure context: %s", exc.to_dict())
        print(f"error: {exc.detail}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
