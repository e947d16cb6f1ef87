"""
Command-line entry point for the normal-form engine.
Runs one scenario (a YAML file or a built-in) through constants, normalization and verification.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

# Add project root to path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from loguru import logger

from config import get_settings
from models.scenario import list_builtins
from services.scenario_service import EXIT_VALIDATION, MODES, ScenarioService


def configure_logging() -> None:
    """stderr plus a rotating log file, both at the configured level."""
    settings = get_settings()
    logger.remove()
    logger.add(sys.stderr, level=settings.LOG_LEVEL)
    logger.add(settings.LOG_FILE, rotation="1 day", retention="7 days", level=settings.LOG_LEVEL)


def parse_values(raw: Optional[str]) -> List[float]:
    if not raw:
        return []
    try:
        return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"--sweep-values must be a comma-separated list of numbers: {e}")


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Normal forms for Hamiltonians with aperiodically decaying perturbations",
    )
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--config", type=Path, help="Scenario YAML file")
    source.add_argument("--builtin", choices=list_builtins() or None, help="Built-in scenario name")
    parser.add_argument("--out", type=Path, default=None, help="Root directory for run artifacts")
    parser.add_argument("--mode", choices=MODES, default="verify", help="Pipeline stage to run up to")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="Patch a scenario field, e.g. algorithm.r=3 (repeatable)")
    parser.add_argument("--sweep-param", choices=("epsilon", "a"), default="epsilon")
    parser.add_argument("--sweep-values", type=parse_values, default=[],
                        help="Comma-separated grid for --mode sweep")
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one scenario and return its exit status."""
    args = parse_args(argv)
    configure_logging()
    if args.config is None and args.builtin is None:
        logger.error("Either --config or --builtin is required")
        return EXIT_VALIDATION
    with ScenarioService() as service:
        summary = service.run_scenario(
            config_path=args.config, mode=args.mode, out=args.out, overrides=args.override,
            builtin=args.builtin, sweep_param=args.sweep_param, sweep_values=args.sweep_values,
        )
    if summary.output_dir:
        logger.info(f"Artifacts written to {summary.output_dir}")
    for failure in summary.hard_failures:
        print(failure, file=sys.stderr)
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())
