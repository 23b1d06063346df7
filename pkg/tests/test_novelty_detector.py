import json

import numpy as np
import pytest

from backend.app.models.schemas import DiceSpec, NoveltyKind, NoveltySpec, TargetSelector, default_game_config
from backend.app.services.game_engine import BUY, ROLL, Transition, heuristic_policy, inject_novelty, new_game, observe, play_game, step
from backend.app.services.knowledge_graph import GraphDiff, static_triples
from backend.app.services.novelty_detector import (
    Channel,
    DistributionMonitor,
    NoveltyDetector,
    NoveltyReport,
    calibrate_threshold,
    check_structural,
    fit_dice,
)
from backend.app.services.rule_graph import RuleGraph


@pytest.fixture
def ones_config():
    return default_game_config(dice={"count": 1, "sides": 1})


@pytest.fixture
def repriced_roll(ones_config):
    """First roll of a game where Mediterranean now costs 999."""
    spec = NoveltySpec(kind=NoveltyKind.SET_PRICE, targets=TargetSelector(names=("Mediterranean",)), new_value=999)
    state = new_game(inject_novelty(ones_config, spec), 0)
    next_state, _, events = step(state, ROLL)
    return Transition(state, ROLL, next_state, events)


def two_dice_monitor(settings):
    return DistributionMonitor.for_dice(DiceSpec(count=2, sides=6), settings)


def test_structural_check_sees_only_exposed_entities(ones_config, repriced_roll):
    observation = observe(repriced_roll.next_state, repriced_roll.events, repriced_roll.state)
    delta = check_structural(static_triples(ones_config), observation)
    assert delta.relinked == {("Mediterranean", "has_price", 60, 999)}
    assert check_structural(static_triples(ones_config), observe(repriced_roll.state)) is None


def test_static_novelty_reported_on_first_exposure(ones_config, repriced_roll):
    detector = NoveltyDetector(static_triples(ones_config), ones_config)
    report = detector.observe(repriced_roll)
    assert report.detected and report.channel == Channel.STATIC_GRAPH
    assert report.step_index == 0
    assert detector.detected
    assert json.loads(report.to_json())["channel"] == "static_graph"

    # the changed price is learned, so the same observation is quiet afterwards
    assert detector.observe(repriced_roll) is None
    assert detector.detected
    assert detector.first_report is report


def test_clean_games_raise_no_static_reports(default_config):
    detector = NoveltyDetector(static_triples(default_config), default_config, channels=(Channel.STATIC_GRAPH,))
    for seed in range(3):
        _, transitions = play_game(default_config, seed, [heuristic_policy] * 2)
        for t in transitions:
            assert detector.observe(t) is None
    assert not detector.detected


def test_rule_channel_waits_for_convergence(ones_config):
    state = step(new_game(ones_config, 0), ROLL).state
    next_state, _, events = step(state, BUY)
    bought = Transition(state, BUY, next_state, events)

    waiting = NoveltyDetector(static_triples(ones_config), ones_config, epsilon=4.0, rules=RuleGraph(),
                              rules_converged=False, channels=(Channel.RULE_PREDICTION,))
    assert waiting.observe(bought) is None

    armed = NoveltyDetector(static_triples(ones_config), ones_config, epsilon=4.0, rules=RuleGraph(),
                            rules_converged=True, channels=(Channel.RULE_PREDICTION,))
    report = armed.observe(bought)
    assert report.channel == Channel.RULE_PREDICTION
    assert report.evidence.distance >= 4.0


def test_positive_report_needs_evidence():
    with pytest.raises(ValueError):
        NoveltyReport(True, Channel.STATIC_GRAPH, None, 0)
    with pytest.raises(ValueError):
        NoveltyReport(True, Channel.STATIC_GRAPH, GraphDiff(), 0)
    assert not NoveltyReport(False, None, None, 3).detected


def test_threshold_calibration_is_seeded():
    probabilities = tuple(DiceSpec(count=2, sides=6).total_distribution().values())
    first = calibrate_threshold(probabilities, 50, 0.999, 2000, 0)
    assert first == calibrate_threshold(probabilities, 50, 0.999, 2000, 0)
    assert first > 0


def test_impossible_total_alarms_at_once(fast_monitor):
    monitor = two_dice_monitor(fast_monitor)
    alarm = monitor.check(13)
    assert alarm is not None and alarm.out_of_support == 13
    assert monitor.alarms == 1


def test_reference_must_be_a_distribution(fast_monitor):
    with pytest.raises(ValueError):
        DistributionMonitor({2: 0.5, 3: 0.4}, fast_monitor)


def test_unchanged_dice_rarely_alarm(fast_monitor):
    monitor = two_dice_monitor(fast_monitor)
    rng = np.random.default_rng(11)
    for _ in range(2000):
        monitor.check(int(rng.integers(1, 7, size=2).sum()))
    assert monitor.windows_tested == 2000 // fast_monitor.window
    assert monitor.alarms <= 1


def test_smaller_dice_are_caught_and_estimated(fast_monitor):
    monitor = two_dice_monitor(fast_monitor)
    rng = np.random.default_rng(5)
    alarm = None
    for n in range(10 * fast_monitor.window):
        alarm = monitor.check(int(rng.integers(1, 5, size=2).sum()))
        if alarm is not None:
            break
    assert alarm is not None
    assert n < 3 * fast_monitor.window
    estimate = fit_dice(monitor.alarm_window, DiceSpec(count=2, sides=6), fast_monitor.min_window)
    assert estimate == DiceSpec(count=2, sides=4)


def test_detector_learns_new_dice(default_config, fast_monitor):
    smaller = default_game_config(dice={"count": 2, "sides": 4})
    detector = NoveltyDetector(static_triples(default_config), default_config, monitor_settings=fast_monitor,
                               channels=(Channel.DISTRIBUTION,))
    _, transitions = play_game(smaller, 3, [heuristic_policy] * 2)
    report = None
    for t in transitions:
        report = detector.observe(t)
        if report is not None:
            break
    assert report is not None and report.channel == Channel.DISTRIBUTION
    assert detector.dice == DiceSpec(count=2, sides=4)
    assert detector.to_dict()["believed_dice"]["sides"] == 4


LOADED_SIX = DiceSpec(count=2, sides=6, weights=(0.1, 0.1, 0.1, 0.1, 0.1, 0.5))


def roll_totals(dice: DiceSpec, n: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    faces = rng.choice(np.arange(1, dice.sides + 1), size=(n, dice.count), p=dice.face_probabilities())
    return [int(t) for t in faces.sum(axis=1)]


def test_single_die_replacing_a_pair_is_estimated(default_config, fast_monitor):
    detector = NoveltyDetector(static_triples(default_config), default_config, monitor_settings=fast_monitor,
                               channels=(Channel.DISTRIBUTION,))
    alarms = [detector.track_dice(t) for t in roll_totals(DiceSpec(count=1, sides=12), 600, 17)]

    assert detector.dice == DiceSpec(count=1, sides=12)
    assert 1 <= sum(a is not None for a in alarms) <= 3
    assert len(detector.dice_evidence) > 500


def test_one_low_total_keeps_the_believed_range():
    # too few totals for a shape fit: the count must drop, the largest total stays 12
    assert fit_dice([1], DiceSpec(count=2, sides=6), 30) == DiceSpec(count=1, sides=12)
    assert fit_dice([], DiceSpec(count=2, sides=6), 30) == DiceSpec(count=2, sides=6)


def test_loaded_dice_weights_are_fitted():
    dice = fit_dice(roll_totals(LOADED_SIX, 2000, 23), DiceSpec(count=2, sides=6), 30)
    assert (dice.count, dice.sides) == (2, 6)
    assert int(np.argmax(dice.weights)) == 5
    assert dice.weights[5] > 0.4
    assert max(dice.weights[:5]) < 0.2


def test_uniform_totals_keep_uniform_dice():
    assert fit_dice(roll_totals(DiceSpec(count=2, sides=6), 2000, 29), DiceSpec(count=2, sides=6), 30) \
        == DiceSpec(count=2, sides=6)


def test_loaded_dice_stop_alarming_once_learned(default_config, fast_monitor):
    detector = NoveltyDetector(static_triples(default_config), default_config, monitor_settings=fast_monitor,
                               channels=(Channel.DISTRIBUTION,))
    alarms = [detector.track_dice(t) for t in roll_totals(LOADED_SIX, 1200, 31)]

    assert any(a is not None for a in alarms[:300])
    assert sum(a is not None for a in alarms[700:]) <= 1
    assert (detector.dice.count, detector.dice.sides) == (2, 6)
    assert int(np.argmax(detector.dice.weights)) == 5
