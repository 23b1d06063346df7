"""
Rule Graph Service - Symbolic Forward Model

A rule graph is a set of IF-THEN rules: precondition triples plus an action
(optionally a dice-total trigger) imply one tuple change. Together they form a
bipartite causal graph (precondition triples -> rules -> tuple changes) that
predicts the next state without the game engine.

Key Features:
- Likelihood-weighted prediction: one branch per dice total, identical outcomes merged
- Rules live in actor-relative role space ("self", "next1", ...) so a rule learned
  for one seat applies to every seat
- Three neighbor families: added precondition, relaxed preconditions, new rule
- Best-first search over neighbor graphs with a closed set and canonical hashing
- Imagined play: simulate_step advances a full round from predictions alone

Determinism: rules fire in canonical-hash order and each change is computed
against the pre-step state; conflicting writes to one (subject, relation) are
resolved last-writer-wins and counted.
"""

import hashlib
import heapq
import json
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Callable, Deque, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx

from ..config import settings
from ..models.schemas import DiceSpec, GameConfig
from ..utils.exceptions import IngestionError, TerminalStateError
from ..utils.logger import logger
from .distance_metric import StateSchema, state_distance
from .game_engine import (
    Action,
    GameState,
    Phase,
    Policy,
    RngCursor,
    Transition,
    roll_dice,
)
from .knowledge_graph import (
    ADDITIVE_RELATIONS,
    GAME,
    NONE_SYMBOL,
    KnowledgeGraph,
    Term,
    Triple,
    TupleChange,
    dynamic_triples,
    format_term,
    parse_term,
    player_entity,
    static_triples,
    triple_sort_key,
)

SELF = "self"
PLAYER_OBJECT_RELATIONS = frozenset({"owned_by", "current_player"})
PLAYER_FIELDS = {
    "has_cash": "cash",
    "at_square": "position",
    "in_jail": "in_jail",
    "has_jail_turns": "jail_turns",
    "is_bankrupt": "bankrupt",
}
PROPERTY_FIELDS = {"is_mortgaged": "mortgaged", "has_houses": "houses"}
_REMOVED = object()


# --- role space ---


def _is_player(term: Term) -> bool:
    return isinstance(term, str) and len(term) > 1 and term[0] == "p" and term[1:].isdigit()


def role_of(player: int, actor: int, n: int) -> str:
    offset = (player - actor) % n
    return SELF if offset == 0 else f"next{offset}"


def player_of(role: Term, actor: int, n: int) -> Optional[int]:
    if role == SELF:
        return actor
    if isinstance(role, str) and role.startswith("next") and role[4:].isdigit():
        return (actor + int(role[4:])) % n
    return None


def to_role_space(triple: Triple, actor: int, n: int) -> Triple:
    subject, obj = triple.subject, triple.object
    if _is_player(subject):
        subject = role_of(int(subject[1:]), actor, n)
    if triple.relation in PLAYER_OBJECT_RELATIONS and _is_player(obj):
        obj = role_of(int(obj[1:]), actor, n)
    return Triple(subject, triple.relation, obj)


def from_role_space(triple: Triple, actor: int, n: int) -> Triple:
    subject, obj = triple.subject, triple.object
    seat = player_of(subject, actor, n)
    if seat is not None:
        subject = player_entity(seat)
    if triple.relation in PLAYER_OBJECT_RELATIONS:
        seat = player_of(obj, actor, n)
        if seat is not None:
            obj = player_entity(seat)
    return Triple(subject, triple.relation, obj)


@lru_cache(maxsize=4096)
def role_triples(static: FrozenSet[Triple], state: GameState) -> FrozenSet[Triple]:
    """Believed static triples plus the state's dynamic triples, seen from the player to move."""
    actor, n = state.current_player, len(state.players)
    return frozenset(to_role_space(t, actor, n) for t in static | dynamic_triples(state))


def triple_terms(triple: Triple) -> Set[str]:
    return {triple.subject, triple.relation, format_term(triple.object)}


# --- rules ---


def _triple_json(triple: Optional[Triple]) -> Optional[List[str]]:
    if triple is None:
        return None
    return [triple.subject, triple.relation, format_term(triple.object)]


def _triple_from_json(data: Optional[Sequence[str]]) -> Optional[Triple]:
    if data is None:
        return None
    return Triple(data[0], data[1], parse_term(data[2]))


@dataclass(frozen=True)
class Rule:
    """
    IF preconditions AND action (AND dice total == trigger) THEN change.

    For additive relations (cash, turn counter) the change is a delta
    (new - old) applied to whatever value is current.
    """

    preconditions: FrozenSet[Triple]
    action: Action
    change: TupleChange
    trigger: Optional[int] = None
    likelihood_weight: float = field(default=1.0, compare=False)

    def __post_init__(self):
        if not 0.0 < self.likelihood_weight <= 1.0:
            raise ValueError(f"likelihood_weight must be in (0, 1], got {self.likelihood_weight}")

    @property
    def additive(self) -> bool:
        change = self.change
        return change.old is not None and change.new is not None and change.old.relation in ADDITIVE_RELATIONS

    def to_dict(self) -> Dict:
        return {
            "preconditions": [_triple_json(t) for t in sorted(self.preconditions, key=triple_sort_key)],
            "action": self.action.to_dict(),
            "trigger": self.trigger,
            "old": _triple_json(self.change.old),
            "new": _triple_json(self.change.new),
            "likelihood_weight": self.likelihood_weight,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Rule":
        return cls(
            preconditions=frozenset(_triple_from_json(t) for t in data["preconditions"]),
            action=Action.from_dict(data["action"]),
            change=TupleChange(_triple_from_json(data.get("old")), _triple_from_json(data.get("new"))),
            trigger=data.get("trigger"),
            likelihood_weight=float(data.get("likelihood_weight", 1.0)),
        )

    @cached_property
    def canonical_hash(self) -> str:
        body = {k: v for k, v in self.to_dict().items() if k != "likelihood_weight"}
        return hashlib.md5(json.dumps(body, sort_keys=True).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RuleGraph:
    """
    Immutable rule set. ``rules`` is kept sorted by canonical hash, so two graphs
    with the same rules compare and hash equal regardless of insertion order.
    ``vocabulary`` holds the terms seen while learning (not compared).
    """

    rules: Tuple[Rule, ...] = ()
    vocabulary: FrozenSet[str] = field(default=frozenset(), compare=False)

    @classmethod
    def of(cls, rules: Iterable[Rule], vocabulary: Iterable[str] = ()) -> "RuleGraph":
        unique = {r.canonical_hash: r for r in rules}
        return cls(tuple(unique[h] for h in sorted(unique)), frozenset(vocabulary))

    def __len__(self) -> int:
        return len(self.rules)

    @cached_property
    def canonical_hash(self) -> str:
        digest = hashlib.md5()
        for rule in self.rules:
            digest.update(rule.canonical_hash.encode("utf-8"))
        return digest.hexdigest()

    @cached_property
    def _by_key(self) -> Dict[Tuple[Action, Optional[int]], Tuple[Rule, ...]]:
        index: Dict[Tuple[Action, Optional[int]], List[Rule]] = {}
        for rule in self.rules:
            index.setdefault((rule.action, rule.trigger), []).append(rule)
        return {k: tuple(v) for k, v in index.items()}

    def candidates(self, action: Action, total: Optional[int]) -> List[Rule]:
        """Rules that may fire for this action and dice total, in canonical order."""
        found = list(self._by_key.get((action, None), ()))
        if total is not None:
            found += self._by_key.get((action, total), ())
        return sorted(found, key=lambda r: r.canonical_hash)

    def with_rules(self, rules: Iterable[Rule]) -> "RuleGraph":
        return RuleGraph.of(rules, self.vocabulary)

    def with_vocabulary(self, vocabulary: Iterable[str]) -> "RuleGraph":
        return RuleGraph(self.rules, frozenset(vocabulary))

    def reweighted(self, dice: DiceSpec) -> "RuleGraph":
        """Recompute trigger weights from a (re-estimated) dice spec."""
        distribution = dice.total_distribution()
        rules = [
            replace(r, likelihood_weight=distribution.get(r.trigger, 1.0) if r.trigger is not None else 1.0)
            for r in self.rules
        ]
        return RuleGraph(tuple(rules), self.vocabulary)

    def structure(self) -> nx.DiGraph:
        """Bipartite causal graph: precondition triples -> rules -> tuple changes."""
        graph = nx.DiGraph()
        for rule in self.rules:
            rule_node = ("rule", rule.canonical_hash)
            graph.add_node(rule_node, bipartite=1, action=str(rule.action), trigger=rule.trigger)
            for t in rule.preconditions:
                graph.add_node(("triple", t), bipartite=0)
                graph.add_edge(("triple", t), rule_node)
            change_node = ("change", rule.change.old, rule.change.new)
            graph.add_node(change_node, bipartite=0)
            graph.add_edge(rule_node, change_node)
        return graph

    # --- serialization ---

    def to_jsonl(self) -> str:
        lines = [json.dumps({"kind": "header", "version": 1, "vocabulary": sorted(self.vocabulary)})]
        for rule in self.rules:
            lines.append(json.dumps({"kind": "rule", "hash": rule.canonical_hash, **rule.to_dict()}, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "RuleGraph":
        rules: List[Rule] = []
        vocabulary: List[str] = []
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if record.get("kind") == "header":
                    vocabulary = record.get("vocabulary", [])
                else:
                    rules.append(Rule.from_dict(record))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise IngestionError(f"rules line {number}: {e}")
        return cls.of(rules, vocabulary)

    @classmethod
    def from_transitions(
        cls,
        transitions: Iterable[Transition],
        static: Iterable[Triple],
        dice: Optional[DiceSpec] = None,
    ) -> "RuleGraph":
        """Memorizing graph: one rule per tuple change of every transition."""
        static = frozenset(static)
        kg = KnowledgeGraph(static=static)
        rules: List[Rule] = []
        vocabulary: Set[str] = set()
        for transition in transitions:
            rules.extend(new_rules(kg, transition, dice))
            for t in role_triples(static, transition.state):
                vocabulary |= triple_terms(t)
        return cls.of(rules, vocabulary)


@dataclass(frozen=True)
class PredictionOutcome:
    state: GameState
    likelihood: float
    totals: Tuple[Optional[int], ...] = ()


# --- prediction ---


def _fire(rules: Sequence[Rule], current: FrozenSet[Triple]) -> Tuple[Dict[Tuple[str, str], object], int]:
    """Apply every firing rule against the pre-state; return (writes, conflict count)."""
    index = {(t.subject, t.relation): t.object for t in current}
    writes: Dict[Tuple[str, str], object] = {}
    conflicts = 0
    for rule in rules:
        if not rule.preconditions <= current:
            continue
        change = rule.change
        if change.old is not None:
            key = (change.old.subject, change.old.relation)
            if key not in index:
                continue
            if rule.additive:
                value = index[key] + (change.new.object - change.old.object)
            elif index[key] == change.old.object and type(index[key]) is type(change.old.object):
                value = change.new.object if change.new is not None else _REMOVED
            else:
                continue
        else:
            key = (change.new.subject, change.new.relation)
            value = change.new.object
        if key in writes and writes[key] != value:
            conflicts += 1
        writes[key] = value
    return writes, conflicts


def _believed_worth(state: GameState, kg: KnowledgeGraph, player: int) -> int:
    config = state.config
    worth = state.players[player].cash
    for j, prop in enumerate(state.properties):
        if prop.owner != player:
            continue
        spec = config.properties[j]
        price = kg.lookup(spec.name, "has_price")
        price = spec.price if not isinstance(price, int) else price
        worth += price - (int(price * config.mortgage_fraction) if prop.mortgaged else 0)
        worth += prop.houses * spec.building_cost
    return worth


def imagined_outcome(state: GameState, kg: KnowledgeGraph) -> GameState:
    """
    Game end for a predicted state. Bankruptcy of all but one player (or of
    everyone) or the turn cap ends it; the winner is the survivor with the highest
    net worth at believed prices, ties to the lowest seat.
    """
    alive = [i for i, p in enumerate(state.players) if not p.bankrupt]
    by_bankruptcy = (len(state.players) >= 2 and len(alive) <= 1) or not alive
    if not (by_bankruptcy or state.turn >= state.config.max_turns):
        return replace(state, done=False, winner=None)
    if len(alive) <= 1:
        return replace(state, done=True, winner=alive[0] if alive else None)
    return replace(state, done=True, winner=max(alive, key=lambda i: (_believed_worth(state, kg, i), -i)))


def _apply_writes(state: GameState, writes: Dict[Tuple[str, str], object], kg: KnowledgeGraph) -> GameState:
    config = state.config
    actor, n = state.current_player, len(state.players)
    players = list(state.players)
    properties = list(state.properties)
    game = {"current_player": state.current_player, "phase": state.phase, "turn": state.turn}

    for (subject, relation), value in sorted(writes.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        if value is _REMOVED:
            continue
        try:
            seat = player_of(subject, actor, n)
            if seat is not None and relation in PLAYER_FIELDS:
                attr = PLAYER_FIELDS[relation]
                cast = bool(value) if attr in ("in_jail", "bankrupt") else int(value)
                players[seat] = replace(players[seat], **{attr: cast})
            elif subject == GAME:
                if relation == "current_player":
                    target = player_of(value, actor, n)
                    if target is not None:
                        game["current_player"] = target
                elif relation == "in_phase":
                    game["phase"] = Phase(value)
                elif relation == "has_turn":
                    game["turn"] = int(value)
            else:
                j = config.property_index(subject)
                if j is None:
                    continue
                if relation == "owned_by":
                    owner = None if value == NONE_SYMBOL else player_of(value, actor, n)
                    if owner is not None or value == NONE_SYMBOL:
                        properties[j] = replace(properties[j], owner=owner)
                elif relation in PROPERTY_FIELDS:
                    attr = PROPERTY_FIELDS[relation]
                    cast = bool(value) if attr == "mortgaged" else int(value)
                    properties[j] = replace(properties[j], **{attr: cast})
        except (TypeError, ValueError):
            logger.debug(f"ignoring malformed predicted value {subject}.{relation}={value!r}")

    predicted = replace(
        state,
        players=tuple(players),
        properties=tuple(properties),
        current_player=game["current_player"],
        phase=game["phase"],
        turn=game["turn"],
    )
    return imagined_outcome(predicted, kg)


def predict_branch(
    rules: RuleGraph,
    kg: KnowledgeGraph,
    s: GameState,
    a: Action,
    total: Optional[int] = None,
) -> Tuple[GameState, int]:
    """
    Predicted next state for one branch (dice ``total``, or None for deterministic
    actions). Returns the state and the number of conflicting writes.
    """
    if s.done:
        return s, 0
    candidates = rules.candidates(a, total if a.stochastic else None)
    if not candidates:
        return s, 0
    writes, conflicts = _fire(candidates, role_triples(kg.static, s))
    if not writes:
        return s, conflicts
    return _apply_writes(s, writes, kg), conflicts


def predict(
    rules: RuleGraph,
    kg: KnowledgeGraph,
    s: GameState,
    a: Action,
    dice: Optional[DiceSpec] = None,
) -> List[PredictionOutcome]:
    """
    Enumerate next-state outcomes with likelihoods.

    Stochastic actions branch on every dice total of ``dice`` (default: the dice of
    the state's config) weighted by its exact probability. Outcomes with identical
    states are merged. Ignorance shows up as the unchanged state.

    Returns:
        List[PredictionOutcome]: most likely first
    """
    if a.stochastic:
        branches = sorted((dice or s.config.dice).total_distribution().items())
    else:
        branches = [(None, 1.0)]

    merged: Dict[GameState, Tuple[float, List[Optional[int]]]] = {}
    order: List[GameState] = []
    total_conflicts = 0
    for total, probability in branches:
        state, conflicts = predict_branch(rules, kg, s, a, total)
        total_conflicts += conflicts
        if state not in merged:
            merged[state] = (0.0, [])
            order.append(state)
        mass, totals = merged[state]
        merged[state] = (mass + probability, totals + [total])
    if total_conflicts:
        logger.warning(f"{total_conflicts} conflicting rule postconditions while predicting {a}")

    outcomes = [PredictionOutcome(state, merged[state][0], tuple(merged[state][1])) for state in order]
    return sorted(outcomes, key=lambda o: -o.likelihood)


def most_likely(outcomes: Sequence[PredictionOutcome]) -> GameState:
    return outcomes[0].state


def sample_distance(rules: RuleGraph, kg: KnowledgeGraph, sample: Transition, schema: StateSchema) -> float:
    """
    Prediction distance on one sample. The branch matching the observed dice total
    is used for rolls.
    """
    predicted, _ = predict_branch(rules, kg, sample.state, sample.action, sample.dice_total)
    return state_distance(schema, predicted, sample.next_state)


# --- neighbor graphs ---


def changed_tuples(sample: Transition) -> List[TupleChange]:
    """Role-space tuple changes between the sample's states, sorted by (subject, relation)."""
    s, s2 = sample.state, sample.next_state
    actor, n = s.current_player, len(s.players)
    before = {(t.subject, t.relation): t for t in (to_role_space(x, actor, n) for x in dynamic_triples(s))}
    after = {(t.subject, t.relation): t for t in (to_role_space(x, actor, n) for x in dynamic_triples(s2))}
    changes: List[TupleChange] = []
    for key in sorted(set(before) | set(after)):
        old, new = before.get(key), after.get(key)
        if old == new and (old is None or type(old.object) is type(new.object)):
            continue
        changes.append(TupleChange(old, new))
    return changes


def focus_triples(kg: KnowledgeGraph, sample: Transition) -> FrozenSet[Triple]:
    """
    Current triples about the entities a sample touches: the game, the actor, every
    changed subject (and entity objects), and the properties on the actor's square
    before and after the step.
    """
    s, s2 = sample.state, sample.next_state
    config = s.config
    actor = s.current_player
    current = role_triples(kg.static, s)
    subjects = {t.subject for t in current}
    entities: Set[Term] = {GAME, SELF}
    for change in changed_tuples(sample):
        for triple in (change.old, change.new):
            if triple is None:
                continue
            entities.add(triple.subject)
            if isinstance(triple.object, str) and triple.object in subjects:
                entities.add(triple.object)
    for position in (s.players[actor].position, s2.players[actor].position):
        j = config.property_at(position)
        if j is not None:
            entities.add(config.properties[j].name)
    return frozenset(t for t in current if t.subject in entities)


def _relevant(rule: Rule, sample: Transition) -> bool:
    return rule.action == sample.action and rule.trigger in (None, sample.dice_total)


def _trigger_weight(sample: Transition, dice: Optional[DiceSpec]) -> float:
    total = sample.dice_total
    if total is None:
        return 1.0
    probability = (dice or sample.state.config.dice).total_distribution().get(total, 0.0)
    return probability if probability > 0 else 1.0


def new_rules(kg: KnowledgeGraph, sample: Transition, dice: Optional[DiceSpec] = None) -> Tuple[Rule, ...]:
    """One rule per tuple change of the sample, with the sample's focus triples as preconditions."""
    return _new_rules(kg, sample, sample.state.config, dice)


@lru_cache(maxsize=256)
def _new_rules(kg: KnowledgeGraph, sample: Transition, config: GameConfig,
               dice: Optional[DiceSpec]) -> Tuple[Rule, ...]:
    # states compare without their config, so the board in force is part of the key
    focus = focus_triples(kg, sample)
    weight = _trigger_weight(sample, dice)
    return tuple(Rule(focus, sample.action, change, sample.dice_total, weight) for change in changed_tuples(sample))


RuleFilter = Callable[[Rule], bool]


def added_precondition_neighbors(
    rules: RuleGraph, kg: KnowledgeGraph, sample: Transition, editable: Optional[RuleFilter] = None
) -> List[RuleGraph]:
    """Each rule (or each ``editable`` one) with one novel current triple added to its preconditions."""
    current = role_triples(kg.static, sample.state)
    novel = sorted((t for t in current if not triple_terms(t) <= rules.vocabulary), key=triple_sort_key)
    neighbors: List[RuleGraph] = []
    for rule in rules.rules:
        if editable is not None and not editable(rule):
            continue
        for triple in novel:
            if triple in rule.preconditions:
                continue
            grown = replace(rule, preconditions=rule.preconditions | {triple})
            neighbors.append(rules.with_rules([r for r in rules.rules if r is not rule] + [grown]))
    return neighbors


def relaxed_neighbors(
    rules: RuleGraph, kg: KnowledgeGraph, sample: Transition, editable: Optional[RuleFilter] = None
) -> List[RuleGraph]:
    """Each rule (or each ``editable`` one) with stale preconditions dropped (intersected with the current triples)."""
    current = role_triples(kg.static, sample.state)
    neighbors: List[RuleGraph] = []
    for rule in rules.rules:
        if editable is not None and not editable(rule):
            continue
        kept = rule.preconditions & current
        if kept == rule.preconditions:
            continue
        relaxed = replace(rule, preconditions=kept)
        neighbors.append(rules.with_rules([r for r in rules.rules if r is not rule] + [relaxed]))
    return neighbors


def new_rule_neighbors(
    rules: RuleGraph, kg: KnowledgeGraph, sample: Transition, dice: Optional[DiceSpec] = None
) -> List[RuleGraph]:
    """The graph plus one new rule per observed tuple change."""
    existing = set(rules.rules)
    return [rules.with_rules(rules.rules + (rule,)) for rule in new_rules(kg, sample, dice) if rule not in existing]


def neighbor_graphs(
    rules: RuleGraph,
    kg: KnowledgeGraph,
    sample: Transition,
    dice: Optional[DiceSpec] = None,
    relevant_only: bool = False,
) -> List[RuleGraph]:
    """
    Union of the three neighbor families, deduplicated and without the input graph.

    With ``relevant_only`` the first two families only edit rules that can fire on
    the sample (same action, matching trigger); edits to any other rule leave the
    sample's prediction unchanged. search() expands with this pruning.
    """
    editable = (lambda rule: _relevant(rule, sample)) if relevant_only else None
    seen = {rules.canonical_hash}
    neighbors: List[RuleGraph] = []
    for family in (
        added_precondition_neighbors(rules, kg, sample, editable),
        relaxed_neighbors(rules, kg, sample, editable),
        new_rule_neighbors(rules, kg, sample, dice),
    ):
        for graph in family:
            if graph.canonical_hash not in seen:
                seen.add(graph.canonical_hash)
                neighbors.append(graph)
    return neighbors


# --- search ---


@dataclass(frozen=True)
class SearchResult:
    graph: RuleGraph
    distance: float
    initial_distance: float
    accepted: bool
    examined: int


def search(
    rules: RuleGraph,
    kg: KnowledgeGraph,
    sample: Transition,
    epsilon: float,
    schema: Optional[StateSchema] = None,
    dice: Optional[DiceSpec] = None,
    max_expansions: Optional[int] = None,
) -> SearchResult:
    """
    Priority search over neighboring rule graphs.

    Graphs are popped in order of their parent's distance (ties by canonical hash)
    and only then evaluated. The first graph with distance < epsilon is accepted;
    otherwise the best graph examined is returned once the frontier empties or the
    expansion budget runs out. Neighbors already in the closed set are never
    re-queued.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    schema = schema or StateSchema.from_config(sample.state.config)
    budget = settings.search_budget if max_expansions is None else max_expansions
    vocabulary = set(rules.vocabulary)
    for t in role_triples(kg.static, sample.state):
        vocabulary |= triple_terms(t)

    initial = sample_distance(rules, kg, sample, schema)
    best = (initial, rules.canonical_hash, rules)
    frontier: List[Tuple[float, str, RuleGraph]] = [(0.0, rules.canonical_hash, rules)]
    seen = {rules.canonical_hash}
    closed: Set[str] = set()
    examined = 0
    accepted = False

    while frontier and examined < budget:
        _, graph_hash, graph = heapq.heappop(frontier)
        if graph_hash in closed:
            continue
        closed.add(graph_hash)
        distance = initial if graph is rules else sample_distance(graph, kg, sample, schema)
        examined += 1
        if (distance, graph_hash) < best[:2]:
            best = (distance, graph_hash, graph)
        if distance < epsilon:
            best = (distance, graph_hash, graph)
            accepted = True
            break
        for neighbor in neighbor_graphs(graph, kg, sample, dice, relevant_only=True):
            neighbor_hash = neighbor.canonical_hash
            if neighbor_hash in closed or neighbor_hash in seen:
                continue
            seen.add(neighbor_hash)
            heapq.heappush(frontier, (distance, neighbor_hash, neighbor))

    distance, _, graph = best
    logger.debug(
        f"rule search on {sample.action}: D {initial:.3f} -> {distance:.3f} "
        f"({'accepted' if accepted else 'best examined'}, {examined} examined, {len(graph)} rules)"
    )
    return SearchResult(graph.with_vocabulary(vocabulary), distance, initial, accepted, examined)


def update(
    rules: RuleGraph,
    kg: KnowledgeGraph,
    sample: Transition,
    epsilon: float,
    schema: Optional[StateSchema] = None,
    dice: Optional[DiceSpec] = None,
    max_expansions: Optional[int] = None,
) -> RuleGraph:
    """Rule graph update: the accepted (or best examined) graph of search()."""
    return search(rules, kg, sample, epsilon, schema, dice, max_expansions).graph


# --- imagined play ---


def imagine_step(
    rules: RuleGraph,
    kg: KnowledgeGraph,
    state: GameState,
    action: Action,
    dice: Optional[DiceSpec] = None,
) -> GameState:
    """
    One predicted step. Rolls draw from the state's dice cursor exactly as the
    engine does, so a perfect rule graph reproduces engine trajectories.
    """
    if state.done:
        raise TerminalStateError("cannot imagine a step from a finished game")
    if action.stochastic:
        faces, cursor = roll_dice(dice or state.config.dice, state.rng_cursor)
        predicted, _ = predict_branch(rules, kg, state, action, sum(faces))
        return replace(predicted, rng_cursor=cursor, last_roll=faces)
    predicted, _ = predict_branch(rules, kg, state, action, None)
    return predicted


def simulate_step(
    rules: RuleGraph,
    kg: KnowledgeGraph,
    s: GameState,
    policies: Sequence[Policy],
    seed: Optional[int] = None,
    dice: Optional[DiceSpec] = None,
    max_actions_per_turn: int = 64,
) -> GameState:
    """
    Advance one full round (one turn per player in turn order) using predictions
    only. ``seed`` restarts the dice stream at the state's draw counter; None
    continues the state's own stream.
    """
    state = s if seed is None else replace(s, rng_cursor=RngCursor(seed, s.rng_cursor.draws))
    for _ in range(len(state.players)):
        if state.done:
            break
        mover = state.current_player
        for _ in range(max_actions_per_turn):
            state = imagine_step(rules, kg, state, policies[mover](state), dice)
            if state.done or state.current_player != mover:
                break
        else:
            # the turn never ended under the current rules
            break
    return state


# --- continuous learning ---


class RuleLearner:
    """
    Stateful wrapper used during play: scores every transition and runs the rule
    search when the prediction misses by epsilon or more.
    """

    def __init__(
        self,
        config: GameConfig,
        epsilon: float = settings.rule_epsilon,
        search_budget: int = settings.search_budget,
        rules: Optional[RuleGraph] = None,
        static: Optional[Iterable[Triple]] = None,
        convergence_window: int = 200,
    ):
        self.config = config
        self.schema = StateSchema.from_config(config)
        self.epsilon = epsilon
        self.search_budget = search_budget
        self.rules = rules or RuleGraph()
        self.static: FrozenSet[Triple] = frozenset(static) if static is not None else static_triples(config)
        self.dice: DiceSpec = config.dice
        self.learning = True
        self.updates = 0
        self.samples = 0
        self._recent: Deque[bool] = deque(maxlen=convergence_window)

    @property
    def kg(self) -> KnowledgeGraph:
        return KnowledgeGraph(static=self.static)

    @property
    def converged(self) -> bool:
        return len(self._recent) == self._recent.maxlen and all(self._recent)

    def distance(self, sample: Transition) -> float:
        return sample_distance(self.rules, self.kg, sample, self.schema)

    def observe(self, sample: Transition) -> float:
        """Score a transition and update the rule graph when it misses. Returns the pre-update distance."""
        self.samples += 1
        distance = self.distance(sample)
        self._recent.append(distance < self.epsilon)
        if distance >= self.epsilon and self.learning:
            result = search(self.rules, self.kg, sample, self.epsilon, self.schema, self.dice, self.search_budget)
            self.rules = result.graph
            self.updates += 1
        return distance

    def mean_distance(self, samples: Sequence[Transition]) -> Optional[float]:
        if not samples:
            return None
        return sum(self.distance(s) for s in samples) / len(samples)

    def set_static(self, static: Iterable[Triple]) -> None:
        self.static = frozenset(static)

    def set_dice(self, dice: DiceSpec) -> None:
        self.dice = dice
        self.rules = self.rules.reweighted(dice)

    def reset_convergence(self) -> None:
        self._recent.clear()

    def mark_converged(self) -> None:
        """Restore a convergence verdict saved with pretraining artifacts."""
        self._recent.extend([True] * self._recent.maxlen)
