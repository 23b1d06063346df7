"""
Simulation Service - Episodes on the Engine or in Imagination

One episode runner drives both environments:
- EngineEnvironment: the real game engine (optionally switching to a novel
  rule set at the novelty's activation turn)
- ImaginedEnvironment: next states and game end come from the learned rule
  graph and the believed static knowledge; the engine never steps or settles them

The learning agent occupies one seat; every other seat plays the heuristic
model. Because the runner, the agent inputs and the dice stream are shared, an
imagined episode under a perfect rule graph is the same episode as on the engine.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..models.schemas import SEED_STRIDE, DiceSpec, GameConfig, NoveltySpec
from ..utils.logger import logger
from .agents import Agent, Trajectory
from .game_engine import (
    Action,
    EventTag,
    GameState,
    Policy,
    RngCursor,
    Transition,
    apply_novelty,
    heuristic_policy,
    new_game,
    outcome_reward,
    step,
)
from .knowledge_graph import KnowledgeGraph, Triple
from .rule_graph import RuleGraph, imagine_step

MAX_ACTIONS_PER_TURN = 64


class EngineEnvironment:
    """The real game. ``novelty`` switches on at its activation turn."""

    imagined = False

    def __init__(self, config: GameConfig, novelty: Optional[NoveltySpec] = None):
        self.config = config
        self.novelty = novelty

    def reset(self, seed: int, start: Optional[GameState] = None) -> GameState:
        state = new_game(self.config, seed) if start is None else replace(start, rng_cursor=RngCursor(seed, 0))
        return self._maybe_inject(state)

    def _maybe_inject(self, state: GameState) -> GameState:
        if self.novelty is not None and state.turn >= self.novelty.activation_turn and state.config == self.config:
            return apply_novelty(state, self.novelty)
        return state

    def step(self, state: GameState, action: Action) -> Tuple[GameState, Tuple[EventTag, ...]]:
        next_state, _, events = step(state, action)
        return self._maybe_inject(next_state), events


class ImaginedEnvironment:
    """
    Predictions of a rule graph over the believed rules. Episodes start from the
    believed initial state or from a stored real state.
    """

    imagined = True

    def __init__(self, rules: RuleGraph, static: Iterable[Triple], config: GameConfig,
                 dice: Optional[DiceSpec] = None):
        self.rules = rules
        self.kg = KnowledgeGraph(static=frozenset(static))
        self.config = config
        self.dice = dice or config.dice

    def reset(self, seed: int, start: Optional[GameState] = None) -> GameState:
        if start is None:
            return new_game(self.config, seed)
        return replace(start, rng_cursor=RngCursor(seed, 0), config=self.config)

    def step(self, state: GameState, action: Action) -> Tuple[GameState, Tuple[EventTag, ...]]:
        return imagine_step(self.rules, self.kg, state, action, self.dice), ()


@dataclass
class Episode:
    final_state: GameState
    trajectory: Trajectory
    transitions: List[Transition] = field(default_factory=list)
    truncated: bool = False
    seat: int = 0

    @property
    def won(self) -> bool:
        return self.final_state.done and self.final_state.winner == self.seat


def run_episode(
    environment,
    agent: Agent,
    seat: int,
    seed: int,
    greedy: bool = False,
    start: Optional[GameState] = None,
    opponent: Policy = heuristic_policy,
    max_steps: Optional[int] = None,
    on_step: Optional[Callable[[Transition], None]] = None,
    between_moves: Optional[Callable[[GameState], None]] = None,
) -> Episode:
    """
    Play one episode with ``agent`` in ``seat`` and the opponent policy elsewhere.

    Only the agent's non-forced decisions enter the trajectory. The final recorded
    decision receives the terminal reward; an episode cut short keeps a bootstrap
    input instead.
    """
    state = environment.reset(seed, start)
    trajectory = Trajectory(agent.a2c.discount)
    transitions: List[Transition] = []
    previous: Optional[GameState] = None
    limit = max_steps if max_steps is not None else state.config.max_turns * len(state.players) * MAX_ACTIONS_PER_TURN
    streak = 0
    truncated = False

    while not state.done:
        if len(transitions) >= limit or streak >= MAX_ACTIONS_PER_TURN:
            truncated = True
            break
        mover = state.current_player
        if mover == seat:
            if between_moves is not None:
                between_moves(state)
            action, record = agent.decide(state, previous, greedy)
            if record is not None:
                trajectory.append(record)
        else:
            action = opponent(state)
        next_state, events = environment.step(state, action)
        transition = Transition(state, action, next_state, events)
        transitions.append(transition)
        if on_step is not None:
            on_step(transition)
        streak = streak + 1 if next_state.current_player == mover and next_state.turn == state.turn else 0
        previous, state = state, next_state

    if truncated and not state.done:
        if trajectory.steps and state.current_player == seat:
            trajectory.bootstrap = agent.inputs(state, previous)
        logger.debug(f"episode seed {seed} truncated after {len(transitions)} steps")
    else:
        trajectory.set_final_reward(outcome_reward(state, seat))
    return Episode(state, trajectory, transitions, truncated, seat)


def train_episode(environment, agent: Agent, seat: int, seed: int, **kwargs) -> Episode:
    """Run an episode in sampling mode and apply one actor-critic update."""
    episode = run_episode(environment, agent, seat, seed, greedy=False, **kwargs)
    agent.update(episode.trajectory)
    return episode


def imagination_seed(seed: int, index: int) -> int:
    return seed * SEED_STRIDE + index


def imagination_retrain(
    agent: Agent,
    rules: RuleGraph,
    static: Iterable[Triple],
    config: GameConfig,
    budget: int,
    seed: int,
    focus_states: Sequence[GameState] = (),
    dice: Optional[DiceSpec] = None,
    first_index: int = 0,
) -> Agent:
    """
    Retrain on ``budget`` episodes simulated by the rule graph.

    Half of the episodes (by a seeded coin) start from ``focus_states`` (real states
    whose transitions fired recently updated rules), the rest from the initial
    state. Seats alternate by episode. Episode seeds continue from ``first_index``.
    """
    if budget < 1:
        raise ValueError(f"imagination budget must be >= 1, got {budget}")
    environment = ImaginedEnvironment(rules, static, config, dice)
    coin = np.random.default_rng([seed, first_index])
    for index in range(budget):
        start = None
        if focus_states and coin.random() < 0.5:
            start = focus_states[int(coin.integers(len(focus_states)))]
        seat = (first_index + index) % config.num_players
        train_episode(environment, agent, seat, imagination_seed(seed, first_index + index), start=start)
    logger.debug(f"imagination retraining: {budget} episodes for the {agent.kind} agent")
    return agent


def evaluate(
    agent: Agent,
    config: GameConfig,
    seeds: Sequence[int],
    novelty: Optional[NoveltySpec] = None,
    workers: int = 1,
) -> float:
    """
    Greedy win rate against the heuristic over fixed game seeds; the agent's seat
    alternates per game.
    """
    if not seeds:
        raise ValueError("evaluation needs at least one game seed")
    environment = EngineEnvironment(config, novelty)

    def play(item: Tuple[int, int]) -> bool:
        j, seed = item
        return run_episode(environment, agent, j % config.num_players, seed, greedy=True).won

    items = list(enumerate(seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            wins = list(pool.map(play, items))
    else:
        wins = [play(item) for item in items]
    return sum(wins) / len(wins)

