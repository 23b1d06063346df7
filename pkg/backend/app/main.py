"""
Command-Line Entry Point - Novelty-Aware Monopoly Testbed

Subcommands:
- pretrain        Train the KG and vanilla agents against the heuristic
- novelty-trial   Inject a novelty, detect it, update knowledge and retrain
- eval            Evaluate saved checkpoints on the fixed evaluation set
- clone-eval      Learn the rule graph from a replay and trace its accuracy
- detect-suite    Detection statistics over a suite of novelty specs
- record-replay   Record heuristic self-play replays for clone-eval

Every subcommand takes --config, --seeds and --output. Exit status is 0 on
success, 2 on an invariant violation and 1 on any other testbed error.

Run with:
    python main.py <subcommand> [options]
Or:
    python -m backend.app.main <subcommand> [options]
"""

import argparse
import sys
from typing import Optional, Sequence

from .commands import clone_eval, detect_suite, eval as eval_command, novelty_trial, pretrain, record_replay
from .config import settings
from .utils.exceptions import InvariantViolation, TestbedError
from .utils.logger import logger, set_level

COMMANDS = (pretrain, novelty_trial, eval_command, clone_eval, detect_suite, record_replay)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="testbed", description=settings.project_name)
    parser.add_argument("--log-level", default=settings.log_level, help="Logging level (default from LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    set_level(args.log_level)
    logger.info(f"{settings.project_name} {settings.project_version}: {args.command}")
    try:
        return args.handler(args)
    except InvariantViolation as e:
        logger.error(f"Invariant violated during {args.command}: {e}", exc_info=True)
        return 2
    except TestbedError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
