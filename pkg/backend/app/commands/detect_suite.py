"""detect-suite: seeded detection trials over a novelty suite plus clean control games."""

import argparse
import json
from pathlib import Path

from ..services.harness import detect_suite
from ..services.rule_graph import RuleGraph
from ..utils.exceptions import IngestionError
from ..utils.logger import logger
from . import add_common_arguments, load_experiment, load_novelty_suite


def run(args: argparse.Namespace) -> int:
    experiment = load_experiment(args)
    novelties = load_novelty_suite(Path(args.novelties))
    rules, converged = None, False
    if args.rules:
        directory = Path(args.rules)
        try:
            rules = RuleGraph.from_jsonl((directory / "rules.jsonl").read_text(encoding="utf-8"))
            monitors = json.loads((directory / "monitors.json").read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise IngestionError(f"cannot load learned rules from {directory}: {e}")
        converged = bool(monitors.get("rules_converged"))
        logger.info(f"Loaded {len(rules)} rules (converged={converged}) from {directory}")

    summary = detect_suite(
        experiment,
        novelties,
        Path(args.output),
        trials=args.trials,
        games_per_trial=args.games_per_trial,
        clean_games=args.clean_games,
        rules=rules,
        rules_converged=converged,
        progress=not args.no_progress,
    )
    for row in summary["novelties"]:
        logger.info(f"{row['novelty']}: detected {row['detected']}/{row['trials']} via {row['channels']}")
    logger.info(f"clean games: {summary['clean']['reports']} reports, "
                f"dice alarm rate {summary['clean']['dice_alarm_rate']:.4f}")
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("detect-suite", help="Detection statistics over a novelty suite")
    add_common_arguments(parser)
    parser.add_argument("--novelties", default="configs/novelties", help="Directory of novelty specs (JSON)")
    parser.add_argument("--trials", type=int, default=100, help="Seeded trials per novelty")
    parser.add_argument("--games-per-trial", type=int, default=5, help="Games per trial before giving up")
    parser.add_argument("--clean-games", type=int, default=1000, help="Unmodified games for the false-positive check")
    parser.add_argument("--rules", default=None, help="A seed_<n>/ directory whose learned rules enable the rule channel")
    parser.set_defaults(handler=run)
