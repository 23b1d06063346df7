"""
Game Engine - Deterministic Monopoly-like Environment

This service is the ground-truth environment for every experiment: a small,
seed-reproducible Monopoly variant with a novelty-injection API that mutates the
rules mid-run.

Key Features:
- 24-square default board: Go, Jail, Go-To-Jail, one tax square, 20 properties
- Buy / rent / mortgage / house / jail mechanics, no cards, auctions or trades
- Closed, enumerable action space with phase-based legality
- Bit-exact determinism: dice come from a (seed, draw counter) cursor
- Novelty injection: returns a new, re-validated GameConfig
- Heuristic opponent that buys with a cash reserve and builds on full color groups

Turn structure:
- pre_roll:  RollAndMove (plus PayJailFine when jailed and affordable)
- purchase:  Buy (when affordable) or Skip, after landing on an unowned property
- post_roll: EndTurn plus any legal Mortgage / Unmortgage / BuildHouse

A GameState carries the GameConfig it is played under, so legality and dynamics
are pure functions of the state.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from ..models.schemas import (
    DiceSpec,
    GameConfig,
    NoveltyKind,
    NoveltySpec,
    PROPERTY_NOVELTIES,
    TargetSelector,
)
from ..utils.exceptions import (
    ConfigurationError,
    EmptySelectorError,
    IllegalActionError,
    TerminalStateError,
)
from ..utils.logger import logger


class Phase(str, Enum):
    PRE_ROLL = "pre_roll"
    PURCHASE = "purchase"
    POST_ROLL = "post_roll"


class ActionKind(str, Enum):
    ROLL_AND_MOVE = "roll_and_move"
    BUY = "buy"
    SKIP = "skip"
    PAY_JAIL_FINE = "pay_jail_fine"
    END_TURN = "end_turn"
    MORTGAGE = "mortgage"
    UNMORTGAGE = "unmortgage"
    BUILD_HOUSE = "build_house"


SIMPLE_KINDS = (
    ActionKind.ROLL_AND_MOVE,
    ActionKind.BUY,
    ActionKind.SKIP,
    ActionKind.PAY_JAIL_FINE,
    ActionKind.END_TURN,
)
PROPERTY_KINDS = (ActionKind.MORTGAGE, ActionKind.UNMORTGAGE, ActionKind.BUILD_HOUSE)


@dataclass(frozen=True)
class Action:
    """One action variant; property actions carry the property index."""

    kind: ActionKind
    target: Optional[int] = None

    def __post_init__(self):
        if (self.kind in PROPERTY_KINDS) != (self.target is not None):
            raise ValueError(f"{self.kind.value} {'needs' if self.kind in PROPERTY_KINDS else 'takes no'} target")

    @property
    def stochastic(self) -> bool:
        return self.kind == ActionKind.ROLL_AND_MOVE

    def __str__(self) -> str:
        return self.kind.value if self.target is None else f"{self.kind.value}({self.target})"

    def to_dict(self) -> Dict:
        return {"kind": self.kind.value, "target": self.target}

    @classmethod
    def from_dict(cls, data: Dict) -> "Action":
        return cls(ActionKind(data["kind"]), data.get("target"))


ROLL = Action(ActionKind.ROLL_AND_MOVE)
BUY = Action(ActionKind.BUY)
SKIP = Action(ActionKind.SKIP)
PAY_JAIL_FINE = Action(ActionKind.PAY_JAIL_FINE)
END_TURN = Action(ActionKind.END_TURN)


def action_space(config: GameConfig) -> Tuple[Action, ...]:
    """All action variants for a config, in canonical order."""
    simple = tuple(Action(kind) for kind in SIMPLE_KINDS)
    targeted = tuple(Action(kind, j) for kind in PROPERTY_KINDS for j in range(len(config.properties)))
    return simple + targeted


def action_index(config: GameConfig, action: Action) -> int:
    if action.target is None:
        return SIMPLE_KINDS.index(action.kind)
    return len(SIMPLE_KINDS) + PROPERTY_KINDS.index(action.kind) * len(config.properties) + action.target


class EventTag(str, Enum):
    MOVED = "moved"
    PASSED_GO = "passed_go"
    RENT_PAID = "rent_paid"
    PROPERTY_BOUGHT = "property_bought"
    PURCHASE_DECLINED = "purchase_declined"
    TAX_PAID = "tax_paid"
    JAILED = "jailed"
    JAIL_FINE_PAID = "jail_fine_paid"
    LEFT_JAIL = "left_jail"
    MORTGAGED = "mortgaged"
    UNMORTGAGED = "unmortgaged"
    HOUSE_BUILT = "house_built"
    HOUSE_SOLD = "house_sold"
    BANKRUPT = "bankrupt"
    TURN_ENDED = "turn_ended"
    GAME_OVER = "game_over"


@dataclass(frozen=True)
class PlayerState:
    cash: int
    position: int = 0
    in_jail: bool = False
    jail_turns: int = 0
    bankrupt: bool = False


@dataclass(frozen=True)
class PropertyState:
    owner: Optional[int] = None
    mortgaged: bool = False
    houses: int = 0


@dataclass(frozen=True)
class RngCursor:
    """Deterministic dice stream position: roll n uses default_rng([seed, n])."""

    seed: int
    draws: int = 0


@dataclass(frozen=True)
class GameState:
    """Complete world snapshot. ``config`` is the rule set in force (not compared)."""

    turn: int
    current_player: int
    phase: Phase
    players: Tuple[PlayerState, ...]
    properties: Tuple[PropertyState, ...]
    rng_cursor: RngCursor
    last_roll: Tuple[int, ...] = ()
    done: bool = False
    winner: Optional[int] = None
    config: Optional[GameConfig] = field(default=None, compare=False, repr=False)

    @property
    def actor(self) -> PlayerState:
        return self.players[self.current_player]

    def to_dict(self) -> Dict:
        return {
            "turn": self.turn,
            "current_player": self.current_player,
            "phase": self.phase.value,
            "players": [
                {"cash": p.cash, "position": p.position, "in_jail": p.in_jail,
                 "jail_turns": p.jail_turns, "bankrupt": p.bankrupt}
                for p in self.players
            ],
            "properties": [
                {"owner": q.owner, "mortgaged": q.mortgaged, "houses": q.houses} for q in self.properties
            ],
            "rng": [self.rng_cursor.seed, self.rng_cursor.draws],
            "last_roll": list(self.last_roll),
            "done": self.done,
            "winner": self.winner,
        }

    @classmethod
    def from_dict(cls, data: Dict, config: GameConfig) -> "GameState":
        return cls(
            turn=int(data["turn"]),
            current_player=int(data["current_player"]),
            phase=Phase(data["phase"]),
            players=tuple(PlayerState(**p) for p in data["players"]),
            properties=tuple(PropertyState(**q) for q in data["properties"]),
            rng_cursor=RngCursor(*data["rng"]),
            last_roll=tuple(data.get("last_roll", ())),
            done=bool(data.get("done", False)),
            winner=data.get("winner"),
            config=config,
        )


class StepResult(NamedTuple):
    state: GameState
    reward: float
    events: Tuple[EventTag, ...]


@dataclass(frozen=True)
class Transition:
    """One (s, a, s') sample as recorded in replay logs."""

    state: GameState
    action: Action
    next_state: GameState
    events: Tuple[EventTag, ...] = ()

    @property
    def player(self) -> int:
        return self.state.current_player

    @property
    def dice_total(self) -> Optional[int]:
        if not self.action.stochastic or not self.next_state.last_roll:
            return None
        return sum(self.next_state.last_roll)


Policy = Callable[[GameState], Action]


# --- dice ---


def roll_dice(dice: DiceSpec, cursor: RngCursor) -> Tuple[Tuple[int, ...], RngCursor]:
    """Roll every die once from the cursor position and advance the cursor."""
    rng = np.random.default_rng([cursor.seed, cursor.draws])
    faces = rng.choice(dice.sides, size=dice.count, p=dice.face_probabilities()) + 1
    return tuple(int(f) for f in faces), RngCursor(cursor.seed, cursor.draws + 1)


# --- money helpers ---


def mortgage_value(config: GameConfig, index: int) -> int:
    return int(config.properties[index].price * config.mortgage_fraction)


def unmortgage_cost(config: GameConfig, index: int) -> int:
    value = mortgage_value(config, index)
    # at least one dollar of interest, so mortgage/unmortgage cycles always cost money
    return value + max(1, int(value * config.unmortgage_premium))


def owns_color_group(state: GameState, player: int, color: str) -> bool:
    group = state.config.color_group(color)
    return bool(group) and all(state.properties[j].owner == player for j in group)


def rent_due(state: GameState, index: int) -> int:
    config = state.config
    spec = config.properties[index]
    prop = state.properties[index]
    if prop.owner is None or prop.mortgaged:
        return 0
    if prop.houses > 0:
        return spec.rent * config.house_rent_multipliers[prop.houses]
    if owns_color_group(state, prop.owner, spec.color):
        return spec.rent * config.monopoly_rent_multiplier
    return spec.rent


def net_worth(state: GameState, player: int) -> int:
    config = state.config
    worth = state.players[player].cash
    for j, prop in enumerate(state.properties):
        if prop.owner != player:
            continue
        spec = config.properties[j]
        worth += spec.price - (mortgage_value(config, j) if prop.mortgaged else 0)
        worth += prop.houses * spec.building_cost
    return worth


# --- game lifecycle ---


def new_game(config: GameConfig, seed: int) -> GameState:
    """
    Create the initial state: every player on Go with the starting cash.

    Args:
        config: Validated game configuration
        seed: Non-negative dice seed

    Returns:
        GameState: turn 0, player 0 to move
    """
    config.check()
    if seed < 0:
        raise ConfigurationError(f"seed must be non-negative, got {seed}")
    players = tuple(PlayerState(cash=config.starting_cash, position=config.go_position)
                    for _ in range(config.num_players))
    properties = tuple(PropertyState() for _ in config.properties)
    return GameState(
        turn=0,
        current_player=0,
        phase=Phase.PRE_ROLL,
        players=players,
        properties=properties,
        rng_cursor=RngCursor(seed, 0),
        config=config,
    )


def legal_actions(state: GameState) -> List[Action]:
    """
    Legal actions for the player to move, in canonical action-space order.

    Raises:
        TerminalStateError: if the game is over
    """
    if state.done:
        raise TerminalStateError("no legal actions: the game is over")
    config = state.config
    me = state.current_player
    player = state.players[me]

    if state.phase == Phase.PRE_ROLL:
        actions = [ROLL]
        if player.in_jail and player.cash >= config.jail_rules.fine:
            actions.append(PAY_JAIL_FINE)
        return actions

    if state.phase == Phase.PURCHASE:
        index = config.property_at(player.position)
        actions = []
        if index is not None and state.properties[index].owner is None \
                and player.cash >= config.properties[index].price:
            actions.append(BUY)
        actions.append(SKIP)
        return actions

    actions = [END_TURN]
    owned = [j for j, prop in enumerate(state.properties) if prop.owner == me]
    for j in owned:
        prop = state.properties[j]
        if not prop.mortgaged and prop.houses == 0:
            actions.append(Action(ActionKind.MORTGAGE, j))
    for j in owned:
        prop = state.properties[j]
        if prop.mortgaged and player.cash >= unmortgage_cost(config, j):
            actions.append(Action(ActionKind.UNMORTGAGE, j))
    for j in owned:
        prop = state.properties[j]
        spec = config.properties[j]
        if (not prop.mortgaged and prop.houses < 5 and player.cash >= spec.building_cost
                and owns_color_group(state, me, spec.color)
                and not any(state.properties[k].mortgaged for k in config.color_group(spec.color))):
            actions.append(Action(ActionKind.BUILD_HOUSE, j))
    return actions


class _Table:
    """Mutable scratch copy of a state used while resolving one step."""

    def __init__(self, state: GameState):
        self.config = state.config
        self.players: List[PlayerState] = list(state.players)
        self.properties: List[PropertyState] = list(state.properties)
        self.turn = state.turn
        self.current = state.current_player
        self.phase = state.phase
        self.cursor = state.rng_cursor
        self.last_roll = state.last_roll
        self.events: List[EventTag] = []

    def set_player(self, i: int, **changes) -> None:
        self.players[i] = replace(self.players[i], **changes)

    def set_property(self, j: int, **changes) -> None:
        self.properties[j] = replace(self.properties[j], **changes)

    def credit(self, i: int, amount: int) -> None:
        self.set_player(i, cash=self.players[i].cash + amount)

    def liquidate(self, i: int, needed: int) -> None:
        """Sell houses, then mortgage the cheapest properties, until cash covers ``needed``."""
        config = self.config
        while self.players[i].cash < needed:
            built = [j for j, p in enumerate(self.properties) if p.owner == i and p.houses > 0]
            if built:
                j = max(built, key=lambda k: (self.properties[k].houses, -k))
                self.set_property(j, houses=self.properties[j].houses - 1)
                self.credit(i, config.properties[j].building_cost // 2)
                self.events.append(EventTag.HOUSE_SOLD)
                continue
            free = [j for j, p in enumerate(self.properties) if p.owner == i and not p.mortgaged]
            if not free:
                return
            j = min(free, key=lambda k: (config.properties[k].price, k))
            self.set_property(j, mortgaged=True)
            self.credit(i, mortgage_value(config, j))
            self.events.append(EventTag.MORTGAGED)

    def charge(self, payer: int, amount: int, creditor: Optional[int], tag: EventTag) -> bool:
        """
        Compulsory payment. Returns False when the payer goes bankrupt.

        Assets of a bankrupt payer go to the creditor player, or back to the bank.
        """
        if self.players[payer].cash < amount:
            self.liquidate(payer, amount)
        if self.players[payer].cash >= amount:
            self.credit(payer, -amount)
            if creditor is not None:
                self.credit(creditor, amount)
            self.events.append(tag)
            return True

        remaining = self.players[payer].cash
        if creditor is not None:
            self.credit(creditor, remaining)
        for j, prop in enumerate(self.properties):
            if prop.owner != payer:
                continue
            if creditor is not None:
                self.set_property(j, owner=creditor, houses=0)
            else:
                self.set_property(j, owner=None, mortgaged=False, houses=0)
        self.set_player(payer, cash=0, bankrupt=True, in_jail=False, jail_turns=0)
        self.events.append(EventTag.BANKRUPT)
        logger.debug(f"player {payer} bankrupt owing {amount} (creditor={creditor})")
        return False

    def end_turn(self) -> None:
        n = len(self.players)
        nxt = self.current
        for offset in range(1, n + 1):
            candidate = (self.current + offset) % n
            if not self.players[candidate].bankrupt:
                nxt = candidate
                break
        self.current = nxt
        self.turn += 1
        self.phase = Phase.PRE_ROLL
        self.events.append(EventTag.TURN_ENDED)

    def freeze(self) -> GameState:
        return GameState(
            turn=self.turn,
            current_player=self.current,
            phase=self.phase,
            players=tuple(self.players),
            properties=tuple(self.properties),
            rng_cursor=self.cursor,
            last_roll=self.last_roll,
            config=self.config,
        )


def _move(table: _Table, me: int, total: int) -> None:
    config = table.config
    start = table.players[me].position
    target = (start + total) % config.board_size
    table.set_player(me, position=target)
    table.events.append(EventTag.MOVED)
    if start + total >= config.board_size:
        table.credit(me, config.go_salary)
        table.events.append(EventTag.PASSED_GO)

    if target == config.go_to_jail_position:
        table.set_player(me, position=config.jail_position, in_jail=True, jail_turns=0)
        table.events.append(EventTag.JAILED)
        table.phase = Phase.POST_ROLL
        return
    if config.tax_position is not None and target == config.tax_position:
        if table.charge(me, config.tax_amount, None, EventTag.TAX_PAID):
            table.phase = Phase.POST_ROLL
        else:
            table.end_turn()
        return

    index = config.property_at(target)
    if index is None:
        table.phase = Phase.POST_ROLL
        return
    prop = table.properties[index]
    if prop.owner is None:
        table.phase = Phase.PURCHASE
        return
    if prop.owner != me and not table.players[prop.owner].bankrupt:
        rent = rent_due(table.freeze(), index)
        if rent > 0 and not table.charge(me, rent, prop.owner, EventTag.RENT_PAID):
            table.end_turn()
            return
    table.phase = Phase.POST_ROLL


def _roll(table: _Table, me: int) -> None:
    config = table.config
    faces, table.cursor = roll_dice(config.dice, table.cursor)
    table.last_roll = faces
    total = sum(faces)
    player = table.players[me]
    if player.in_jail:
        held = player.jail_turns + 1
        if held < config.jail_rules.max_turns:
            table.set_player(me, jail_turns=held)
            table.phase = Phase.POST_ROLL
            return
        # served the maximum: the fine becomes compulsory and the roll is used to move
        if not table.charge(me, config.jail_rules.fine, None, EventTag.JAIL_FINE_PAID):
            table.end_turn()
            return
        table.set_player(me, in_jail=False, jail_turns=0)
        table.events.append(EventTag.LEFT_JAIL)
    _move(table, me, total)


def settle(state: GameState) -> GameState:
    """Recompute ``done`` and ``winner`` from the players and the turn cap."""
    config = state.config
    alive = [i for i, p in enumerate(state.players) if not p.bankrupt]
    by_bankruptcy = (len(state.players) >= 2 and len(alive) <= 1) or not alive
    by_turn_cap = state.turn >= config.max_turns
    if not (by_bankruptcy or by_turn_cap):
        return replace(state, done=False, winner=None)
    if not alive:
        winner = None
    elif len(alive) == 1:
        winner = alive[0]
    else:
        # highest net worth, ties to the lowest seat
        winner = max(alive, key=lambda i: (net_worth(state, i), -i))
    return replace(state, done=True, winner=winner)


def outcome_reward(state: GameState, player: int) -> float:
    """Terminal-only reward for ``player`` in ``state``."""
    if state.players[player].bankrupt:
        return -1.0
    if not state.done or state.winner is None:
        return 0.0
    alive = sum(1 for p in state.players if not p.bankrupt)
    if alive > 1 and state.config.turn_cap_reward == "none":
        return 0.0
    return 1.0 if state.winner == player else -1.0


def step(state: GameState, action: Action) -> StepResult:
    """
    Apply one legal action.

    Args:
        state: Current state (not terminal)
        action: A member of legal_actions(state)

    Returns:
        StepResult: (next state, reward for the acting player, events)

    Raises:
        TerminalStateError: if the game is already over
        IllegalActionError: if the action is not legal (never remapped)
    """
    legal = legal_actions(state)
    if action not in legal:
        raise IllegalActionError(
            f"{action} is not legal for player {state.current_player} in phase {state.phase.value}; "
            f"legal: {[str(a) for a in legal]}"
        )

    config = state.config
    me = state.current_player
    table = _Table(state)
    kind = action.kind

    if kind == ActionKind.ROLL_AND_MOVE:
        _roll(table, me)
    elif kind == ActionKind.BUY:
        index = config.property_at(table.players[me].position)
        table.credit(me, -config.properties[index].price)
        table.set_property(index, owner=me)
        table.events.append(EventTag.PROPERTY_BOUGHT)
        table.phase = Phase.POST_ROLL
    elif kind == ActionKind.SKIP:
        table.events.append(EventTag.PURCHASE_DECLINED)
        table.phase = Phase.POST_ROLL
    elif kind == ActionKind.PAY_JAIL_FINE:
        table.credit(me, -config.jail_rules.fine)
        table.set_player(me, in_jail=False, jail_turns=0)
        table.events.extend([EventTag.JAIL_FINE_PAID, EventTag.LEFT_JAIL])
    elif kind == ActionKind.MORTGAGE:
        table.set_property(action.target, mortgaged=True)
        table.credit(me, mortgage_value(config, action.target))
        table.events.append(EventTag.MORTGAGED)
    elif kind == ActionKind.UNMORTGAGE:
        table.credit(me, -unmortgage_cost(config, action.target))
        table.set_property(action.target, mortgaged=False)
        table.events.append(EventTag.UNMORTGAGED)
    elif kind == ActionKind.BUILD_HOUSE:
        table.credit(me, -config.properties[action.target].building_cost)
        table.set_property(action.target, houses=table.properties[action.target].houses + 1)
        table.events.append(EventTag.HOUSE_BUILT)
    elif kind == ActionKind.END_TURN:
        table.end_turn()

    next_state = settle(table.freeze())
    if next_state.done:
        table.events.append(EventTag.GAME_OVER)
    newly_bankrupt = next_state.players[me].bankrupt and not state.players[me].bankrupt
    reward = outcome_reward(next_state, me) if (next_state.done or newly_bankrupt) else 0.0
    return StepResult(next_state, reward, tuple(table.events))


# --- novelty injection ---


def select_targets(config: GameConfig, selector: TargetSelector) -> List[int]:
    """Resolve a selector to sorted property indices."""
    if selector.names is not None:
        indices = sorted({config.property_index(n) for n in selector.names} - {None})
    else:
        count = int(round(selector.fraction * len(config.properties)))
        rng = np.random.default_rng(selector.seed)
        indices = sorted(int(j) for j in rng.choice(len(config.properties), size=count, replace=False)) if count else []
    if not indices:
        raise EmptySelectorError(f"target selector {selector.model_dump()} matches no property")
    return indices


def inject_novelty(config: GameConfig, spec: NoveltySpec) -> GameConfig:
    """
    Return a new config with the novelty applied; the input config is untouched.

    Raises:
        EmptySelectorError: if a property selector matches nothing
        ConfigurationError: if the mutated config violates an invariant
    """
    data = config.model_dump()
    if spec.kind in PROPERTY_NOVELTIES:
        targets = select_targets(config, spec.targets)
        if spec.kind == NoveltyKind.SET_PRICE:
            for j in targets:
                data["properties"][j]["price"] = spec.new_value
        elif spec.kind == NoveltyKind.SET_RENT:
            for j in targets:
                data["properties"][j]["rent"] = spec.new_value
        else:
            if len(targets) < 2:
                raise EmptySelectorError("rewire_board_order needs at least two target properties")
            positions = [config.properties[j].position for j in targets]
            for j, position in zip(targets, positions[1:] + positions[:1]):
                data["properties"][j]["position"] = position
    elif spec.kind == NoveltyKind.CHANGE_DICE:
        data["dice"] = spec.new_value.model_dump()
    elif spec.kind == NoveltyKind.CHANGE_GO_SALARY:
        data["go_salary"] = spec.new_value
    elif spec.kind == NoveltyKind.CHANGE_JAIL_FINE:
        data["jail_rules"]["fine"] = spec.new_value

    try:
        mutated = GameConfig.model_validate(data)
    except ValidationError as e:
        logger.error(f"Novelty {spec.name} produced an invalid config: {e}")
        raise ConfigurationError(f"novelty {spec.name} violates config invariants: {e}")
    logger.info(f"Injected novelty {spec.name} (kind={spec.kind.value})")
    return mutated


def apply_novelty(state: GameState, spec: NoveltySpec) -> GameState:
    """Switch a running game to the mutated rules without touching its dynamic state."""
    return replace(state, config=inject_novelty(state.config, spec))


# --- heuristic opponent ---


def heuristic_policy(state: GameState) -> Action:
    """
    Deterministic rule-based player.

    Buys any affordable property while keeping a cash reserve, builds houses on
    completed color groups, pays the jail fine when it can, mortgages its cheapest
    property when cash runs low, and unmortgages when comfortably rich.
    """
    legal = legal_actions(state)
    config = state.config
    me = state.actor
    reserve = config.reserve

    if state.phase == Phase.PRE_ROLL:
        return PAY_JAIL_FINE if PAY_JAIL_FINE in legal else ROLL

    if state.phase == Phase.PURCHASE:
        index = config.property_at(me.position)
        if BUY in legal and me.cash >= config.properties[index].price + reserve:
            return BUY
        return SKIP

    by_kind: Dict[ActionKind, List[Action]] = {}
    for action in legal:
        by_kind.setdefault(action.kind, []).append(action)

    if me.cash < reserve // 3 and ActionKind.MORTGAGE in by_kind:
        return min(by_kind[ActionKind.MORTGAGE],
                   key=lambda a: (config.properties[a.target].price, a.target))
    builds = [a for a in by_kind.get(ActionKind.BUILD_HOUSE, [])
              if me.cash >= config.properties[a.target].building_cost + reserve]
    if builds:
        return min(builds, key=lambda a: (state.properties[a.target].houses, a.target))
    unmortgages = [a for a in by_kind.get(ActionKind.UNMORTGAGE, [])
                   if me.cash >= unmortgage_cost(config, a.target) + 2 * reserve]
    if unmortgages:
        return min(unmortgages, key=lambda a: (config.properties[a.target].price, a.target))
    return END_TURN


def random_policy(seed: int) -> Policy:
    """Uniformly random legal actions from a seeded stream (used for fixtures and baselines)."""
    rng = np.random.default_rng(seed)

    def choose(state: GameState) -> Action:
        legal = legal_actions(state)
        return legal[int(rng.integers(len(legal)))]

    return choose


def play_game(
    config: GameConfig,
    seed: int,
    policies: Sequence[Policy],
    max_steps: Optional[int] = None,
    novelty: Optional[NoveltySpec] = None,
) -> Tuple[GameState, List[Transition]]:
    """
    Play one game to the end (or ``max_steps``) and return every transition.

    Args:
        config: Game configuration
        seed: Dice seed
        policies: One action source per seat
        max_steps: Optional step cap
        novelty: Optional novelty switched on at its activation turn

    Returns:
        Tuple of the final state and the list of transitions
    """
    if len(policies) != config.num_players:
        raise ConfigurationError(f"expected {config.num_players} policies, got {len(policies)}")
    state = new_game(config, seed)
    transitions: List[Transition] = []
    injected = novelty is None
    while not state.done and (max_steps is None or len(transitions) < max_steps):
        if not injected and state.turn >= novelty.activation_turn:
            state = apply_novelty(state, novelty)
            injected = True
        action = policies[state.current_player](state)
        next_state, _, events = step(state, action)
        transitions.append(Transition(state, action, next_state, events))
        state = next_state
    return state, transitions


# --- observations ---


VECTOR_EVENT_FLAGS = ("moved", "rent_paid", "property_bought", "jailed")
EXPOSING_EVENTS = {
    EventTag.PASSED_GO: "go",
    EventTag.JAIL_FINE_PAID: "jail",
    EventTag.TAX_PAID: "tax",
}


@dataclass(frozen=True)
class Observation:
    """
    What one player sees after a step.

    Static attributes are only visible when exposed: a property while some player
    stands on its square, the Go salary / jail fine / tax amount on the step they
    are paid. ``previous`` is the state before the step (None at game start).
    """

    player: int
    state: GameState
    events: Tuple[EventTag, ...] = ()
    previous: Optional[GameState] = field(default=None, compare=False, repr=False)

    @property
    def last_roll(self) -> Tuple[int, ...]:
        return self.state.last_roll

    @property
    def exposed_properties(self) -> Tuple[int, ...]:
        config = self.state.config
        squares = {p.position for p in self.state.players if not p.bankrupt}
        return tuple(sorted(j for j in (config.property_at(s) for s in squares) if j is not None))

    @property
    def exposed_specials(self) -> Tuple[str, ...]:
        return tuple(sorted({EXPOSING_EVENTS[e] for e in self.events if e in EXPOSING_EVENTS}))

    def event_flags(self) -> Tuple[bool, ...]:
        """Event flags derived from the (previous, current) state pair."""
        if self.previous is None:
            return (False,) * len(VECTOR_EVENT_FLAGS)
        before, after = self.previous, self.state
        mover = before.current_player
        moved = before.players[mover].position != after.players[mover].position
        paid = before.players[mover].cash - after.players[mover].cash
        rent_paid = paid > 0 and any(
            after.players[i].cash - before.players[i].cash == paid
            for i in range(len(after.players)) if i != mover
        )
        bought = any(b.owner is None and a.owner == mover
                     for b, a in zip(before.properties, after.properties))
        jailed = after.players[mover].in_jail and not before.players[mover].in_jail
        return (moved, rent_paid, bought, jailed)

    @property
    def vector(self) -> np.ndarray:
        return observation_vector(self)


def observe(
    state: GameState,
    events: Sequence[EventTag] = (),
    previous: Optional[GameState] = None,
    player: Optional[int] = None,
) -> Observation:
    """Build the observation for ``player`` (default: the player to move)."""
    return Observation(
        player=state.current_player if player is None else player,
        state=state,
        events=tuple(events),
        previous=previous,
    )


def observation_size(config: GameConfig) -> int:
    n, m = config.num_players, len(config.properties)
    return 5 * n + m * (n + 6) + len(Phase) + 3 + len(VECTOR_EVENT_FLAGS)


def observation_vector(observation: Observation) -> np.ndarray:
    """
    Fixed-length float64 view from the observing player's seat.

    Layout: players (self first) x [cash, position, in_jail, jail_turns, bankrupt];
    properties x [owner one-hot (none, self, next...), mortgaged, houses, exposed,
    price, rent]; phase one-hot; [is my turn, last roll total, turn]; event flags.
    Price and rent are zero unless the property is exposed.
    """
    state = observation.state
    config = state.config
    n = len(state.players)
    me = observation.player
    values: List[float] = []

    for offset in range(n):
        p = state.players[(me + offset) % n]
        values.extend([
            p.cash / max(config.starting_cash, 1),
            p.position / config.board_size,
            float(p.in_jail),
            p.jail_turns / config.jail_rules.max_turns,
            float(p.bankrupt),
        ])

    exposed = set(observation.exposed_properties)
    for j, prop in enumerate(state.properties):
        owner = [0.0] * (n + 1)
        owner[0 if prop.owner is None else 1 + (prop.owner - me) % n] = 1.0
        spec = config.properties[j]
        seen = j in exposed
        values.extend(owner)
        values.extend([
            float(prop.mortgaged),
            prop.houses / 5.0,
            float(seen),
            spec.price / 1000.0 if seen else 0.0,
            spec.rent / 100.0 if seen else 0.0,
        ])

    values.extend(1.0 if state.phase == phase else 0.0 for phase in Phase)
    max_roll = config.dice.count * config.dice.sides
    values.extend([
        float(state.current_player == me),
        sum(state.last_roll) / max_roll if state.last_roll else 0.0,
        state.turn / config.max_turns,
    ])
    values.extend(float(flag) for flag in observation.event_flags())
    return np.asarray(values, dtype=np.float64)
