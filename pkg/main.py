import argparse
import logging
import os
import sys

from dotenv import load_dotenv

from experiments import EXPERIMENTS
from superres.config import Experiment, load_config
from superres.errors import ConfigError, SuperResError

LOG_FORMAT = '%(asctime)s [%(levelname)s]: %(message)s'

SUBCOMMANDS = {
    "levels": Experiment.LEVELS,
    "rce": Experiment.RCE_GRID,
    "ratio": Experiment.RATIO_SWEEP,
    "aging": Experiment.AGING_SWEEP,
    "noise": Experiment.NOISE_SWEEP,
    "wire": Experiment.WIRE_TABLE,
    "nn": Experiment.NN_GRID,
    "mapdump": Experiment.MAPDUMP,
}

DEFAULT_OUTPUT = "results/{name}.csv"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise ValueError(text)
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise ValueError(text)
    return value


def parse_arguments(argv=None):
    parser = _ArgumentParser(prog="superres", description="Super-resolution memristor crossbar experiments")
    parser.add_argument("experiment", choices=list(SUBCOMMANDS), help="Experiment to run.")
    parser.add_argument("--config", required=True, help="Experiment config file (INI).")
    parser.add_argument("--seed", type=_u64, help="Master seed, overrides the config and SUPERRES_SEED.")
    parser.add_argument("--out", help="Output CSV path, '-' for standard output.")
    parser.add_argument("--trials", type=_positive, help="Trials per cell, overrides the config.")
    parser.add_argument("--workers", type=_positive, help="Worker processes.")
    parser.add_argument("--quiet", action="store_true", help="Warnings and errors only, no progress bars.")
    return parser.parse_args(argv)


def configure_logging(quiet=False):
    level = logging.WARNING if quiet else os.getenv("SUPERRES_LOG_LEVEL", "INFO").upper()
    handlers = [logging.StreamHandler(sys.stderr)]
    log_file = os.getenv("SUPERRES_LOG_FILE")
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    try:
        logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)
    except ValueError:
        logging.basicConfig(level=logging.INFO, format=LOG_FORMAT, handlers=handlers, force=True)
        logging.warning(f"Unknown SUPERRES_LOG_LEVEL {level!r}, using INFO")


def cli_main(argv=None):
    load_dotenv()
    try:
        args = parse_arguments(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as e:  # --help
        return int(e.code or 0)

    configure_logging(args.quiet)
    overrides = {"seed": args.seed, "trials": args.trials, "workers": args.workers}
    try:
        cfg = load_config(args.config, SUBCOMMANDS[args.experiment], overrides)
        out = args.out or cfg.output or DEFAULT_OUTPUT.format(name=args.experiment)
        EXPERIMENTS[cfg.experiment](cfg, progress=not args.quiet).run(out)
    except ConfigError as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (SuperResError, OSError) as e:
        logging.error(f"Error running {args.experiment}: {e}")
        return EXIT_RUNTIME

    logging.info(f"{args.experiment} completed successfully.")
    return EXIT_OK


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
