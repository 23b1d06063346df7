"""Statistical acceptance runs on the default board. Minutes each; run with --run-slow."""

from pathlib import Path

import pytest

from backend.app.commands import load_novelty_suite
from backend.app.models.schemas import ExperimentConfig, NoveltyKind
from backend.app.services.harness import clone_eval, detect_suite, record_replay, validation_transitions

NOVELTY_DIR = Path(__file__).resolve().parents[1] / "configs" / "novelties"


@pytest.mark.slow
def test_novelty_suite_detection(default_config, tmp_path):
    novelties = load_novelty_suite(NOVELTY_DIR)
    assert len(novelties) >= 10
    experiment = ExperimentConfig(game=default_config)
    summary = detect_suite(experiment, novelties, tmp_path, trials=100, games_per_trial=5, clean_games=1000,
                           progress=False)

    assert summary["clean"]["reports"] == 0
    assert summary["clean"]["dice_alarm_rate"] <= 0.01
    # static novelties late to report raise inside detect_suite
    for row in summary["novelties"]:
        if row["kind"] == NoveltyKind.CHANGE_DICE.value:
            assert row["within_3_windows_rate"] >= 0.95, row["novelty"]


@pytest.mark.slow
def test_cloning_curve_beats_random_baseline(default_config, tmp_path):
    training = record_replay(default_config, 11, 200, tmp_path / "train.jsonl")
    validation = validation_transitions(default_config)
    frame = clone_eval(training, validation, default_config, epsilon=4.0, search_budget=400, progress=False)

    baseline = frame["random_baseline"].iloc[0]
    tail = frame["moving_average"].iloc[-20:]
    assert (tail < baseline).all()
    assert (frame["mean_distance"] > 0).all()
