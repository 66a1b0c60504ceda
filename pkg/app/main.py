import argparse
import logging
import sys
from typing import List, Optional

from app import __version__
from app.api.commands import compare, config_from_args, oracle, prep_ghz, scan, sweep
from app.core.config import settings
from app.core.exceptions import SimulationError
from app.core.metrics import write_metrics

logger = logging.getLogger("app")

LOG_FORMAT = "%(levelname)-5.5s [%(name)s] %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gsr",
        description="Ground-state energy estimation by adiabatic state preparation and Ramsey interferometry",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in (sweep, compare, scan, oracle, prep_ghz):
        command.register(subparsers)
    return parser


def configure_logging(level: Optional[str]) -> None:
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    try:
        config = config_from_args(args)
        written = args.handler(config)
        if settings.metrics_enabled:
            metrics_path = f"{config.out_dir}/metrics.prom"
            write_metrics(metrics_path)
            written.append(metrics_path)
    except SimulationError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        return 3

    for path in written:
        logger.info(f"Wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
