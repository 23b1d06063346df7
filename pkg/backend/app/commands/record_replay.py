"""record-replay: heuristic self-play written as replay files for clone-eval."""

import argparse
from pathlib import Path

from ..services.harness import record_replay
from . import add_common_arguments, load_experiment, load_novelty, run_seeds


def run(args: argparse.Namespace) -> int:
    experiment = load_experiment(args)
    novelty = load_novelty(args.novelty, experiment) if args.novelty else None
    output = Path(args.output)
    for seed in run_seeds(args, experiment):
        record_replay(experiment.game, seed, args.turns, output / f"replay_seed_{seed}.jsonl", novelty)
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("record-replay", help="Record heuristic self-play replays")
    add_common_arguments(parser)
    parser.add_argument("--turns", type=int, default=200, help="Turns to record per game")
    parser.add_argument("--novelty", default=None, help="Record the game modified by this novelty spec")
    parser.set_defaults(handler=run)
