"""Shared fixtures: boards, recorded play and the --run-slow switch."""

from typing import List

import pytest

from backend.app.models.schemas import ExperimentConfig, GameConfig, MonitorSettings, default_game_config, load_game_config
from backend.app.services.game_engine import Transition, heuristic_policy, play_game


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="run statistical acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


MINI_BOARD = {
    "board_size": 8,
    "properties": [
        {"name": "Alder", "color": "brown", "price": 60, "rent": 10, "position": 1},
        {"name": "Birch", "color": "brown", "price": 80, "rent": 12, "position": 2},
        {"name": "Cedar", "color": "red", "price": 100, "rent": 20, "position": 5},
        {"name": "Dogwood", "color": "red", "price": 120, "rent": 24, "position": 7},
    ],
    "dice": {"count": 1, "sides": 2},
    "starting_cash": 300,
    "go_salary": 50,
    "jail_rules": {"fine": 20, "max_turns": 2},
    "max_turns": 20,
    "jail_position": 3,
    "go_to_jail_position": 6,
    "tax_position": 4,
    "tax_amount": 30,
}

SOLO_BOARD = {
    "board_size": 6,
    "properties": [
        {"name": "Alder", "color": "brown", "price": 40, "rent": 10, "position": 1},
        {"name": "Birch", "color": "brown", "price": 60, "rent": 10, "position": 2},
    ],
    "dice": {"count": 1, "sides": 2},
    "starting_cash": 200,
    "go_salary": 20,
    "max_turns": 40,
    "num_players": 1,
    "jail_position": 3,
    "go_to_jail_position": 4,
    "tax_position": None,
}


@pytest.fixture
def default_config() -> GameConfig:
    return default_game_config()


@pytest.fixture
def mini_config() -> GameConfig:
    """Eight squares, four properties, one two-sided die, twenty turns."""
    return load_game_config(MINI_BOARD)


@pytest.fixture
def solo_config() -> GameConfig:
    """One player, two properties: small enough for exhaustive rule search."""
    return load_game_config(SOLO_BOARD)


@pytest.fixture
def mini_transitions(mini_config) -> List[Transition]:
    _, transitions = play_game(mini_config, 7, [heuristic_policy] * mini_config.num_players)
    return transitions


@pytest.fixture
def fast_monitor() -> MonitorSettings:
    return MonitorSettings(window=50, min_window=30, calibration_windows=2000)


@pytest.fixture
def mini_experiment(mini_config, fast_monitor) -> ExperimentConfig:
    return ExperimentConfig(
        game=mini_config,
        seeds=(0,),
        pretrain_updates=4,
        rule_learning_games=2,
        eval_games=2,
        eval_cadence=2,
        retrain_updates=2,
        detection_games=2,
        imagination_budget=1,
        search_budget=60,
        monitor=fast_monitor,
        gat={"heads": 1, "hidden": 4, "output": 8, "hops": 1, "max_lookahead": 8},
        a2c={"hidden": 8},
    )
