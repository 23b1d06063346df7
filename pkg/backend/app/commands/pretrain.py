"""pretrain: train every configured agent against the heuristic and save checkpoints."""

import argparse
from pathlib import Path

from ..services.harness import ExperimentHarness
from ..utils.logger import logger
from . import add_common_arguments, load_experiment, run_seeds


def run(args: argparse.Namespace) -> int:
    experiment = load_experiment(args)
    seeds = run_seeds(args, experiment)
    harness = ExperimentHarness(experiment, Path(args.output), progress=not args.no_progress)
    runs = harness.run_pretrain(seeds)
    for artifacts in runs:
        logger.info(f"seed {artifacts.seed}: checkpoints in {harness.output_dir / f'seed_{artifacts.seed}'}")
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("pretrain", help="Pretrain agents on the unmodified game")
    add_common_arguments(parser)
    parser.set_defaults(handler=run)
