"""eval: greedy win rates of saved checkpoints on the fixed evaluation set."""

import argparse
from pathlib import Path

from ..services.harness import ExperimentHarness
from . import add_common_arguments, load_experiment, load_novelty, run_seeds


def run(args: argparse.Namespace) -> int:
    experiment = load_experiment(args)
    seeds = run_seeds(args, experiment)
    novelty = load_novelty(args.novelty, experiment) if args.novelty else None
    harness = ExperimentHarness(experiment, Path(args.output), progress=not args.no_progress)
    harness.evaluate_checkpoints(seeds, Path(args.checkpoints), novelty)
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval", help="Evaluate saved checkpoints")
    add_common_arguments(parser)
    parser.add_argument("--checkpoints", required=True, help="Directory holding seed_<n>/ artifacts")
    parser.add_argument("--novelty", default=None, help="Evaluate in the game modified by this novelty spec")
    parser.set_defaults(handler=run)
