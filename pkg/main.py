import argparse
import sys

from models.run_config import RunConfig
from services.run_service import RunService
from utils.exceptions import BlowupError, CbfError, ConfigError
from utils.logger import get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_BLOWUP = 3

COMMANDS = ("verify", "simulate", "optimize", "assimilate")


def build_parser():
    parser = argparse.ArgumentParser(prog="cbf", description="CBF solver, adjoint optimal control and assimilation")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", help="YAML run document (defaults when omitted)")
        sub.add_argument("--out", help="output directory")
        sub.add_argument("--seed", type=int, help="random seed")
    return parser


def run_cli(argv=None):
    """Run one subcommand; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK

    try:
        cfg = RunConfig.from_yaml(args.config) if args.config else RunConfig.from_dict({})
        if args.seed is not None:
            cfg.override("run", "seed", args.seed)
        if args.out:
            cfg.override("output", "dir", args.out)
    except ConfigError as e:
        logger.error("Invalid run configuration:")
        for line in e.diagnostics:
            logger.error(f"  {line}")
        return EXIT_CONFIG

    # Buyruqni bajarish
    try:
        ok = getattr(RunService(cfg), args.command)()
    except BlowupError as e:
        logger.error(f"Numerical blow-up at step {e.step}: {str(e)}")
        return EXIT_BLOWUP
    except CbfError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_FAILED
    return EXIT_OK if ok else EXIT_FAILED


def main():
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
