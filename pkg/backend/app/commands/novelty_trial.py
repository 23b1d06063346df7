"""
novelty-trial: frozen play in the modified game until detection, then
knowledge updates and retraining for both agents.
"""

import argparse
from pathlib import Path

from ..models.schemas import load_experiment_config
from ..services.harness import ExperimentHarness
from ..utils.logger import logger
from . import add_common_arguments, load_experiment, load_novelty, run_seeds


def run(args: argparse.Namespace) -> int:
    experiment = load_experiment(args)
    overrides = {}
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.imagination_budget is not None:
        overrides["imagination_budget"] = args.imagination_budget
    if overrides:
        experiment = load_experiment_config({**experiment.model_dump(), **overrides})
    seeds = run_seeds(args, experiment)
    novelty = None if args.control else load_novelty(args.novelty, experiment)
    if novelty is None:
        logger.info("No novelty given: running a control trial on the unmodified game")

    harness = ExperimentHarness(experiment, Path(args.output), progress=not args.no_progress)
    checkpoints = Path(args.checkpoints) if args.checkpoints else None
    results = harness.run_trials(seeds, novelty, checkpoints)
    detected = sum(r.detected for r in results)
    logger.info(f"novelty-trial finished: detected in {detected}/{len(results)} seeds")
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("novelty-trial", help="Inject a novelty, detect it and retrain")
    add_common_arguments(parser)
    parser.add_argument("--novelty", default=None, help="Novelty spec (JSON); default: the experiment's")
    parser.add_argument("--control", action="store_true", help="Run without any novelty")
    parser.add_argument(
        "--checkpoints",
        default=None,
        help="Directory of pretrained seed_<n>/ artifacts; seeds without one are pretrained first",
    )
    parser.add_argument("--mode", choices=["offline", "online"], default=None, help="Retraining mode")
    parser.add_argument(
        "--imagination-budget", type=int, default=None, help="Imagined episodes per retraining update"
    )
    parser.set_defaults(handler=run)
