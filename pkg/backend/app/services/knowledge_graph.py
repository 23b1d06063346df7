"""
Knowledge Graph Service

Stores world state as <subject, relation, object> triples split into a static
partition (board layout, prices, rents, dice, fines) and a dynamic partition
(ownership, cash, positions, turn bookkeeping).

Key Features:
- Deterministic triple extraction from observations
- Structural diff with relink detection for functional relations
- k-hop subgraphs over a networkx view where literals are interned value nodes
- Strict tuple-change application (stale replacements are rejected)
- Sorted TSV serialization for golden files and cross-run diffs
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Set, Tuple, Union

import networkx as nx

from ..models.schemas import GameConfig
from ..utils.exceptions import IngestionError, InvariantViolation, StaleChangeError, VocabularyError
from ..utils.logger import logger
from .game_engine import GameState, Observation, Phase

Term = Union[str, int, bool]


class Triple(NamedTuple):
    subject: str
    relation: str
    object: Term


# relation -> literal type of its object ("entity" objects are vocabulary terms)
STATIC_RELATIONS: Dict[str, str] = {
    "has_price": "int",
    "has_rent": "int",
    "has_color": "entity",
    "at_position": "int",
    "has_salary": "int",
    "has_fine": "int",
    "has_max_turns": "int",
    "has_amount": "int",
    "has_count": "int",
    "has_sides": "int",
}
DYNAMIC_RELATIONS: Dict[str, str] = {
    "owned_by": "entity",
    "is_mortgaged": "bool",
    "has_houses": "int",
    "has_cash": "int",
    "at_square": "int",
    "in_jail": "bool",
    "has_jail_turns": "int",
    "is_bankrupt": "bool",
    "current_player": "entity",
    "in_phase": "entity",
    "has_turn": "int",
}
RELATIONS: Dict[str, str] = {**STATIC_RELATIONS, **DYNAMIC_RELATIONS}
FUNCTIONAL_RELATIONS = frozenset(RELATIONS)
# replacements on these relations carry a delta rather than a fixed new value
ADDITIVE_RELATIONS = frozenset({"has_cash", "has_turn"})

PROPERTY_RELATIONS = ("has_price", "has_rent", "has_color", "at_position", "owned_by", "is_mortgaged", "has_houses")
PLAYER_RELATIONS = ("has_cash", "at_square", "in_jail", "has_jail_turns", "is_bankrupt")
GAME_RELATIONS = ("current_player", "in_phase", "has_turn")

SPECIAL_SQUARES = ("go", "jail", "go_to_jail", "tax")
NONE_SYMBOL = "none"
GAME = "game"
DICE = "dice"

ENTITY_TYPES = ("player", "property", "color", "square", "dice", "game", "symbol", "value")


def player_entity(index: int) -> str:
    return f"p{index}"


def player_index(entity: str) -> int:
    return int(entity[1:])


def is_static(triple: Triple) -> bool:
    return triple.relation in STATIC_RELATIONS


def term_type(term: Term) -> str:
    if isinstance(term, bool):
        return "bool"
    if isinstance(term, int):
        return "int"
    return "entity"


def node_key(term: Term) -> Tuple:
    """Graph node for a term; literals are interned by (type, value)."""
    kind = term_type(term)
    return ("entity", term) if kind == "entity" else ("value", kind, term)


def triple_sort_key(triple: Triple) -> Tuple:
    return (triple.subject, triple.relation, term_type(triple.object), str(triple.object))


def format_term(term: Term) -> str:
    kind = term_type(term)
    if kind == "bool":
        return "b:" + ("1" if term else "0")
    if kind == "int":
        return f"i:{term}"
    return f"e:{term}"


def parse_term(text: str) -> Term:
    tag, _, body = text.partition(":")
    if tag == "b":
        return body == "1"
    if tag == "i":
        return int(body)
    if tag == "e":
        return body
    raise IngestionError(f"malformed term {text!r}")


class Vocabulary:
    """Registered entities (with their types) and relations for one board."""

    def __init__(self, config: GameConfig):
        self.types: Dict[str, str] = {}
        for i in range(config.num_players):
            self.types[player_entity(i)] = "player"
        for prop in config.properties:
            self.types[prop.name] = "property"
        for color in config.colors:
            self.types[color] = "color"
        for square in SPECIAL_SQUARES:
            self.types[square] = "square"
        self.types[DICE] = "dice"
        self.types[GAME] = "game"
        self.types[NONE_SYMBOL] = "symbol"
        for phase in Phase:
            self.types[phase.value] = "symbol"

    def __contains__(self, entity: str) -> bool:
        return entity in self.types

    def entity_type(self, term: Term) -> str:
        if term_type(term) != "entity":
            return "value"
        try:
            return self.types[term]
        except KeyError:
            raise VocabularyError(f"unknown entity {term!r}")

    def check(self, triple: Triple) -> None:
        if triple.relation not in RELATIONS:
            raise VocabularyError(f"unknown relation {triple.relation!r}")
        if triple.subject not in self.types:
            raise VocabularyError(f"unknown entity {triple.subject!r}")
        if RELATIONS[triple.relation] == "entity" and triple.object not in self.types:
            raise VocabularyError(f"unknown entity {triple.object!r}")


@dataclass(frozen=True)
class TupleChange:
    """Replacement (old and new), pure addition (new only) or pure removal (old only)."""

    old: Optional[Triple] = None
    new: Optional[Triple] = None

    def __post_init__(self):
        if self.old is None and self.new is None:
            raise ValueError("a tuple change needs an old or a new triple")
        if self.old is not None and self.new is not None and self.old[:2] != self.new[:2]:
            raise ValueError(f"replacement must keep (subject, relation): {self.old} -> {self.new}")

    @property
    def key(self) -> Tuple[str, str]:
        triple = self.new if self.new is not None else self.old
        return triple.subject, triple.relation

    def inverted(self) -> "TupleChange":
        return TupleChange(old=self.new, new=self.old)


@dataclass(frozen=True)
class GraphDiff:
    added: FrozenSet[Triple] = frozenset()
    removed: FrozenSet[Triple] = frozenset()
    relinked: FrozenSet[Tuple[str, str, Term, Term]] = frozenset()

    @property
    def is_empty(self) -> bool:
        return not (self.added or self.removed or self.relinked)

    def summary(self) -> Dict:
        return {
            "added": [list(t) for t in sorted(self.added, key=triple_sort_key)],
            "removed": [list(t) for t in sorted(self.removed, key=triple_sort_key)],
            "relinked": sorted([list(r) for r in self.relinked], key=lambda r: (r[0], r[1], str(r[2]))),
        }


@dataclass(frozen=True)
class KnowledgeGraph:
    """Immutable static/dynamic triple sets. Every mutation returns a new graph."""

    static: FrozenSet[Triple] = frozenset()
    dynamic: FrozenSet[Triple] = frozenset()

    def __post_init__(self):
        overlap = self.static & self.dynamic
        if overlap:
            raise InvariantViolation(f"static and dynamic triples overlap: {sorted(overlap, key=triple_sort_key)[:3]}")
        seen: Set[Tuple[str, str]] = set()
        for triple in self.static:
            key = (triple.subject, triple.relation)
            if triple.relation in FUNCTIONAL_RELATIONS and key in seen:
                raise InvariantViolation(f"functional relation {key} has several objects in the static set")
            seen.add(key)

    @classmethod
    def from_triples(cls, triples: Iterable[Triple]) -> "KnowledgeGraph":
        static, dynamic = set(), set()
        for t in triples:
            (static if is_static(t) else dynamic).add(t)
        return cls(frozenset(static), frozenset(dynamic))

    @cached_property
    def triples(self) -> FrozenSet[Triple]:
        return self.static | self.dynamic

    @cached_property
    def index(self) -> Dict[Tuple[str, str], Triple]:
        return {(t.subject, t.relation): t for t in sorted(self.triples, key=triple_sort_key)}

    def lookup(self, subject: str, relation: str) -> Optional[Term]:
        triple = self.index.get((subject, relation))
        return None if triple is None else triple.object

    def about(self, subject: str) -> FrozenSet[Triple]:
        return frozenset(t for t in self.triples if t.subject == subject)

    def with_dynamic(self, dynamic: Iterable[Triple]) -> "KnowledgeGraph":
        return KnowledgeGraph(self.static, frozenset(dynamic))

    def __len__(self) -> int:
        return len(self.static) + len(self.dynamic)

    @cached_property
    def nx_graph(self) -> nx.Graph:
        graph = nx.Graph()
        for t in self.triples:
            graph.add_edge(node_key(t.subject), node_key(t.object))
        return graph

    def to_tsv(self) -> str:
        return serialize_triples(self.triples)


# --- extraction ---


def static_triples(config: GameConfig) -> FrozenSet[Triple]:
    """Every static triple of a config (what a fully informed player would know)."""
    triples: Set[Triple] = set()
    for j in range(len(config.properties)):
        triples |= _property_static(config, j)
    for square in SPECIAL_SQUARES:
        triples |= _special_static(config, square)
    triples.add(Triple(DICE, "has_count", config.dice.count))
    triples.add(Triple(DICE, "has_sides", config.dice.sides))
    return frozenset(triples)


def _property_static(config: GameConfig, index: int) -> Set[Triple]:
    spec = config.properties[index]
    return {
        Triple(spec.name, "has_price", spec.price),
        Triple(spec.name, "has_rent", spec.rent),
        Triple(spec.name, "has_color", spec.color),
        Triple(spec.name, "at_position", spec.position),
    }


def _special_static(config: GameConfig, square: str) -> Set[Triple]:
    if square == "go":
        return {Triple("go", "at_position", config.go_position), Triple("go", "has_salary", config.go_salary)}
    if square == "jail":
        return {
            Triple("jail", "at_position", config.jail_position),
            Triple("jail", "has_fine", config.jail_rules.fine),
            Triple("jail", "has_max_turns", config.jail_rules.max_turns),
        }
    if square == "go_to_jail":
        return {Triple("go_to_jail", "at_position", config.go_to_jail_position)}
    if config.tax_position is None:
        return set()
    return {Triple("tax", "at_position", config.tax_position), Triple("tax", "has_amount", config.tax_amount)}


def dynamic_triples(state: GameState) -> FrozenSet[Triple]:
    """Every dynamic triple of a state."""
    config = state.config
    triples: Set[Triple] = set()
    for j, prop in enumerate(state.properties):
        name = config.properties[j].name
        owner = NONE_SYMBOL if prop.owner is None else player_entity(prop.owner)
        triples.add(Triple(name, "owned_by", owner))
        triples.add(Triple(name, "is_mortgaged", prop.mortgaged))
        triples.add(Triple(name, "has_houses", prop.houses))
    for i, player in enumerate(state.players):
        entity = player_entity(i)
        triples.add(Triple(entity, "has_cash", player.cash))
        triples.add(Triple(entity, "at_square", player.position))
        triples.add(Triple(entity, "in_jail", player.in_jail))
        triples.add(Triple(entity, "has_jail_turns", player.jail_turns))
        triples.add(Triple(entity, "is_bankrupt", player.bankrupt))
    triples.add(Triple(GAME, "current_player", player_entity(state.current_player)))
    triples.add(Triple(GAME, "in_phase", state.phase.value))
    triples.add(Triple(GAME, "has_turn", state.turn))
    return frozenset(triples)


def exposed_static_triples(observation: Observation) -> FrozenSet[Triple]:
    """The static triples the observation actually shows (values from the rules in force)."""
    config = observation.state.config
    triples: Set[Triple] = set()
    for j in observation.exposed_properties:
        triples |= _property_static(config, j)
    for square in observation.exposed_specials:
        triples |= _special_static(config, square)
    return frozenset(triples)


def exposed_entities(observation: Observation) -> FrozenSet[str]:
    config = observation.state.config
    names = {config.properties[j].name for j in observation.exposed_properties}
    return frozenset(names | set(observation.exposed_specials))


def extract_triples(observation: Observation, config: GameConfig) -> FrozenSet[Triple]:
    """
    Map an observation to triples.

    Static triples of exposed entities come from the observation; all other static
    triples come from ``config`` (the believed rules). Dynamic triples are always
    fully observed.

    Raises:
        VocabularyError: if the observation mentions an entity ``config`` does not know
    """
    vocabulary = Vocabulary(config)
    shown = exposed_static_triples(observation)
    hidden = exposed_entities(observation)
    believed = {t for t in static_triples(config) if t.subject not in hidden}
    triples = frozenset(believed | shown | dynamic_triples(observation.state))
    for t in shown:
        vocabulary.check(t)
    if len(observation.state.players) > config.num_players:
        raise VocabularyError(f"player {player_entity(config.num_players)!r} is not in the vocabulary")
    return triples


def graph_from_observation(observation: Observation, config: GameConfig) -> KnowledgeGraph:
    return KnowledgeGraph.from_triples(extract_triples(observation, config))


def state_graph(static: FrozenSet[Triple], state: GameState) -> KnowledgeGraph:
    """Believed static set plus the state's dynamic triples."""
    return KnowledgeGraph(frozenset(static), dynamic_triples(state))


# --- diff / subgraph / change ---


def diff(expected: Iterable[Triple], observed: Iterable[Triple]) -> GraphDiff:
    """
    Structural difference between two triple sets.

    A functional (subject, relation) present on both sides with different objects is
    a relink, never an add plus a remove.
    """
    expected, observed = frozenset(expected), frozenset(observed)
    missing = expected - observed
    extra = observed - expected
    extra_by_key: Dict[Tuple[str, str], List[Triple]] = {}
    for t in extra:
        extra_by_key.setdefault((t.subject, t.relation), []).append(t)

    relinked: Set[Tuple[str, str, Term, Term]] = set()
    relinked_old: Set[Triple] = set()
    relinked_new: Set[Triple] = set()
    for t in missing:
        key = (t.subject, t.relation)
        candidates = extra_by_key.get(key, [])
        if t.relation in FUNCTIONAL_RELATIONS and len(candidates) == 1:
            new = candidates[0]
            relinked.add((t.subject, t.relation, t.object, new.object))
            relinked_old.add(t)
            relinked_new.add(new)

    return GraphDiff(
        added=frozenset(extra - relinked_new),
        removed=frozenset(missing - relinked_old),
        relinked=frozenset(relinked),
    )


def k_hop_subgraph(graph: KnowledgeGraph, seeds: Iterable[str], k: int) -> KnowledgeGraph:
    """
    Triples whose subject and object both lie within undirected distance k of a seed.

    Raises:
        VocabularyError: for a seed entity absent from the graph
        ValueError: for negative k
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    sources = [node_key(s) for s in seeds]
    view = graph.nx_graph
    for source in sources:
        if source not in view:
            raise VocabularyError(f"seed entity {source[-1]!r} is not in the graph")
    if not sources:
        return KnowledgeGraph()
    reach = nx.multi_source_dijkstra_path_length(view, sources, cutoff=k)

    def keep(t: Triple) -> bool:
        return node_key(t.subject) in reach and node_key(t.object) in reach

    return KnowledgeGraph(
        frozenset(t for t in graph.static if keep(t)),
        frozenset(t for t in graph.dynamic if keep(t)),
    )


def apply_change(graph: KnowledgeGraph, change: TupleChange) -> KnowledgeGraph:
    """
    Apply one tuple change.

    Raises:
        StaleChangeError: if the change replaces or removes a triple not in the graph
    """
    static, dynamic = set(graph.static), set(graph.dynamic)
    if change.old is not None:
        target = static if is_static(change.old) else dynamic
        if change.old not in target:
            raise StaleChangeError(f"cannot replace absent triple {change.old}")
        target.remove(change.old)
    if change.new is not None:
        (static if is_static(change.new) else dynamic).add(change.new)
    return KnowledgeGraph(frozenset(static), frozenset(dynamic))


# --- serialization ---


def serialize_triples(triples: Iterable[Triple]) -> str:
    lines = [f"{t.subject}\t{t.relation}\t{format_term(t.object)}" for t in sorted(triples, key=triple_sort_key)]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_triples(text: str) -> FrozenSet[Triple]:
    triples: Set[Triple] = set()
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise IngestionError(f"line {number}: expected 3 tab-separated fields, got {len(parts)}")
        triples.add(Triple(parts[0], parts[1], parse_term(parts[2])))
    logger.debug(f"Parsed {len(triples)} triples")
    return frozenset(triples)


def count_triples(config: GameConfig) -> int:
    """Number of triples extract_triples yields for a config (totality check)."""
    per_property = len(PROPERTY_RELATIONS) * len(config.properties)
    per_player = len(PLAYER_RELATIONS) * config.num_players
    specials = sum(len(_special_static(config, s)) for s in SPECIAL_SQUARES)
    return per_property + per_player + specials + 2 + len(GAME_RELATIONS)


def believed_config(base: GameConfig, static: Iterable[Triple]) -> GameConfig:
    """
    Rebuild a GameConfig from learned static triples, falling back to ``base`` for
    anything the triples do not mention. Returns ``base`` if the result is invalid.
    """
    index = {(t.subject, t.relation): t.object for t in static}
    data = base.model_dump()
    for prop in data["properties"]:
        for relation, key in (("has_price", "price"), ("has_rent", "rent"), ("has_color", "color"),
                              ("at_position", "position")):
            if (prop["name"], relation) in index:
                prop[key] = index[(prop["name"], relation)]
    data["go_salary"] = index.get(("go", "has_salary"), data["go_salary"])
    data["jail_rules"]["fine"] = index.get(("jail", "has_fine"), data["jail_rules"]["fine"])
    data["jail_rules"]["max_turns"] = index.get(("jail", "has_max_turns"), data["jail_rules"]["max_turns"])
    if base.tax_position is not None:
        data["tax_amount"] = index.get(("tax", "has_amount"), data["tax_amount"])
    count = index.get((DICE, "has_count"), base.dice.count)
    sides = index.get((DICE, "has_sides"), base.dice.sides)
    if (count, sides) != (base.dice.count, base.dice.sides):
        data["dice"] = {"count": count, "sides": sides}
    try:
        return GameConfig.model_validate(data)
    except ValueError as e:
        logger.warning(f"Learned static triples do not form a valid config, keeping the previous one: {e}")
        return base
