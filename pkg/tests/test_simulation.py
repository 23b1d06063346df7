from dataclasses import replace

import numpy as np
import pytest

from backend.app.models.schemas import A2CSettings, GatSettings, NoveltyKind, NoveltySpec
from backend.app.services.agents import Agent
from backend.app.services.distance_metric import StateSchema
from backend.app.services.game_engine import ROLL, new_game
from backend.app.services.knowledge_graph import KnowledgeGraph, static_triples
from backend.app.services.rule_graph import RuleGraph, sample_distance
from backend.app.services.simulation import (
    MAX_ACTIONS_PER_TURN,
    EngineEnvironment,
    ImaginedEnvironment,
    evaluate,
    imagination_retrain,
    imagination_seed,
    run_episode,
    train_episode,
)
from backend.app.utils.exceptions import TerminalStateError

SMALL_GAT = GatSettings(heads=1, hidden=3, output=4, hops=1, max_lookahead=4)
SMALL_A2C = A2CSettings(hidden=6)


def make_agent(config, kind="kg", seed=3):
    return Agent(config, kind, seed=seed, a2c=SMALL_A2C, gat=SMALL_GAT)


def same_parameters(a, b):
    left, right = a.parameters(), b.parameters()
    return left.keys() == right.keys() and all(np.array_equal(left[k], right[k]) for k in left)


def test_trajectory_holds_only_real_decisions(mini_config):
    agent = make_agent(mini_config)
    episode = run_episode(EngineEnvironment(mini_config), agent, 0, 5)
    assert episode.final_state.done
    assert len(episode.trajectory) > 0
    assert all(int(step.legal.sum()) >= 2 for step in episode.trajectory.steps)
    assert episode.trajectory.steps[-1].reward in (-1.0, 0.0, 1.0)
    assert all(step.reward == 0.0 for step in episode.trajectory.steps[:-1])


def test_step_cap_truncates_with_a_bootstrap(mini_config):
    agent = make_agent(mini_config)
    episode = run_episode(EngineEnvironment(mini_config), agent, 0, 5, max_steps=6)
    assert episode.truncated
    assert len(episode.transitions) == 6
    assert all(step.reward == 0.0 for step in episode.trajectory.steps)
    assert MAX_ACTIONS_PER_TURN == 64


def test_engine_episodes_are_reproducible(mini_config):
    first = run_episode(EngineEnvironment(mini_config), make_agent(mini_config), 1, 9)
    second = run_episode(EngineEnvironment(mini_config), make_agent(mini_config), 1, 9)
    assert first.final_state == second.final_state
    assert [t.action for t in first.transitions] == [t.action for t in second.transitions]


def test_novelty_switches_on_at_its_turn(mini_config):
    novelty = NoveltySpec(kind=NoveltyKind.CHANGE_GO_SALARY, new_value=5, activation_turn=4)
    episode = run_episode(EngineEnvironment(mini_config, novelty), make_agent(mini_config), 0, 2)
    for t in episode.transitions:
        assert t.state.config.go_salary == (5 if t.state.turn >= 4 else 50)


def test_imagination_matches_the_engine_under_a_perfect_rule_graph(mini_config):
    """One imagined update under an exact rule graph equals one engine update, bit for bit."""
    static = static_triples(mini_config)
    seed = 0
    episode_seed = imagination_seed(seed, 0)

    probe = run_episode(EngineEnvironment(mini_config), make_agent(mini_config), 0, episode_seed)
    rules = RuleGraph.from_transitions(probe.transitions, static)
    kg, schema = KnowledgeGraph(static=static), StateSchema.from_config(mini_config)
    assert all(sample_distance(rules, kg, t, schema) == 0.0 for t in probe.transitions)

    on_engine = make_agent(mini_config)
    train_episode(EngineEnvironment(mini_config), on_engine, 0, episode_seed)

    imagined = make_agent(mini_config)
    imagination_retrain(imagined, rules, static, mini_config, budget=1, seed=seed)

    assert on_engine.updates == imagined.updates == 1
    assert same_parameters(on_engine, imagined)


def test_imagined_episode_replays_engine_states(mini_config):
    static = static_triples(mini_config)
    probe = run_episode(EngineEnvironment(mini_config), make_agent(mini_config), 1, 17)
    rules = RuleGraph.from_transitions(probe.transitions, static)
    replay = run_episode(ImaginedEnvironment(rules, static, mini_config), make_agent(mini_config), 1, 17)
    assert [t.next_state for t in replay.transitions] == [t.next_state for t in probe.transitions]


def test_imagined_step_from_a_finished_game(mini_config):
    environment = ImaginedEnvironment(RuleGraph(), static_triples(mini_config), mini_config)
    finished = replace(new_game(mini_config, 1), done=True, winner=0)
    with pytest.raises(TerminalStateError):
        environment.step(finished, ROLL)


def test_imagination_budget_must_be_positive(mini_config):
    with pytest.raises(ValueError):
        imagination_retrain(make_agent(mini_config), RuleGraph(), static_triples(mini_config), mini_config, 0, 0)


def test_imagination_can_start_from_stored_states(mini_config, mini_transitions):
    agent = make_agent(mini_config)
    focus = [t.state for t in mini_transitions[10:15]]
    returned = imagination_retrain(agent, RuleGraph.from_transitions(mini_transitions, static_triples(mini_config)),
                                   static_triples(mini_config), mini_config, budget=3, seed=1, focus_states=focus)
    assert returned is agent
    assert agent.updates <= 3


def test_evaluation_is_greedy_and_deterministic(mini_config):
    agent = make_agent(mini_config, "vanilla")
    seeds = [2_000_000_000 + j for j in range(4)]
    first = evaluate(agent, mini_config, seeds)
    assert first == evaluate(agent, mini_config, seeds)
    assert first == evaluate(agent, mini_config, seeds, workers=2)
    assert 0.0 <= first <= 1.0
    with pytest.raises(ValueError):
        evaluate(agent, mini_config, [])
