"""
Commands Package

One module per CLI subcommand. Each module exposes ``register(subparsers)``,
which adds its parser and sets ``handler`` to a function taking the parsed
arguments and returning an exit status.
"""

import argparse
from pathlib import Path
from typing import List, Optional, Sequence

from ..config import settings
from ..models.schemas import ExperimentConfig, NoveltySpec, load_experiment_config, load_novelty_spec
from ..utils.exceptions import ConfigurationError


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """--config, --seeds and --output, shared by every subcommand."""
    parser.add_argument(
        "--config",
        default=settings.default_experiment_config,
        help="Experiment config (JSON); the game config may be inlined or referenced by path",
    )
    parser.add_argument(
        "--seeds",
        type=int,
        nargs="+",
        default=None,
        help="Run seeds (default: the experiment's seeds)",
    )
    parser.add_argument("--output", default=settings.output_dir, help="Output directory")
    parser.add_argument("--no-progress", action="store_true", help="Hide progress bars")


def load_experiment(args: argparse.Namespace) -> ExperimentConfig:
    return load_experiment_config(args.config)


def run_seeds(args: argparse.Namespace, experiment: ExperimentConfig) -> List[int]:
    seeds = list(args.seeds) if args.seeds else list(experiment.seeds)
    if any(s < 0 for s in seeds):
        raise ConfigurationError(f"seeds must be non-negative, got {seeds}")
    if seeds != list(experiment.seeds):
        # re-validate the seed ranges against the evaluation set
        load_experiment_config({**experiment.model_dump(), "seeds": seeds})
    return seeds


def load_novelty(path: Optional[str], experiment: ExperimentConfig) -> Optional[NoveltySpec]:
    if path is None:
        return experiment.novelty
    return load_novelty_spec(Path(path))


def load_novelty_suite(directory: Path) -> Sequence[NoveltySpec]:
    """Every *.json novelty spec in a directory, in file-name order."""
    paths = sorted(Path(directory).glob("*.json"))
    if not paths:
        raise ConfigurationError(f"no novelty specs found in {directory}")
    return [load_novelty_spec(p) for p in paths]
