"""clone-eval: learn the rule graph from a replay and trace the prediction-distance curve."""

import argparse
from pathlib import Path

from ..services.harness import run_clone_eval
from . import add_common_arguments, load_experiment, run_seeds


def run(args: argparse.Namespace) -> int:
    experiment = load_experiment(args)
    seed = run_seeds(args, experiment)[0]
    epsilon = args.epsilon if args.epsilon is not None else experiment.epsilon
    budget = args.search_budget if args.search_budget is not None else experiment.search_budget
    run_clone_eval(
        Path(args.replay),
        Path(args.validation) if args.validation else None,
        Path(args.output),
        epsilon,
        budget,
        seed=seed,
        progress=not args.no_progress,
    )
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("clone-eval", help="Game-cloning curve from a recorded replay")
    add_common_arguments(parser)
    parser.add_argument("--replay", required=True, help="Training replay (JSONL)")
    parser.add_argument("--validation", default=None, help="Validation replay (default: the training replay)")
    parser.add_argument("--epsilon", type=float, default=None, help="Rule-update threshold")
    parser.add_argument("--search-budget", type=int, default=None, help="Rule-search expansion budget")
    parser.set_defaults(handler=run)
