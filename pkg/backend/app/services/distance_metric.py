"""
Prediction Distance

Heterogeneous per-attribute distance between two flattened game states, in the
style of the Heterogeneous Euclidean-Overlap Metric: nominal attributes use the
overlap indicator, numeric attributes a scaled difference, and the aggregate is
the Euclidean norm of the per-attribute vector.

Scaling is chosen so that the smallest legal single-step change of any attribute
costs exactly 1 (cash is binned by the smallest rent on the board).

Relative change for unbounded attributes is |a - b| / max(|a|, 1): it is zero
exactly when a == b, and safe at a == 0.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from ..models.schemas import GameConfig
from ..utils.exceptions import SchemaError
from .game_engine import GameState, Phase

Value = Any


class Kind(str, Enum):
    BINARY = "binary"
    UNORDERED_FINITE = "unordered_finite"
    ORDERED_FINITE = "ordered_finite"
    CONTINUOUS_BINNED = "continuous_binned"
    UNBOUNDED = "unbounded"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class AttributeKind:
    kind: Kind
    bin_width: Optional[float] = None
    domain: Optional[FrozenSet] = None
    low: Optional[int] = None
    high: Optional[int] = None

    def __post_init__(self):
        if self.kind == Kind.CONTINUOUS_BINNED and not (self.bin_width and self.bin_width > 0):
            raise SchemaError(f"continuous_binned needs bin_width > 0, got {self.bin_width}")

    @classmethod
    def binary(cls) -> "AttributeKind":
        return cls(Kind.BINARY)

    @classmethod
    def unordered(cls, domain: Sequence = ()) -> "AttributeKind":
        return cls(Kind.UNORDERED_FINITE, domain=frozenset(domain) if domain else None)

    @classmethod
    def ordered(cls, low: int, high: int) -> "AttributeKind":
        return cls(Kind.ORDERED_FINITE, low=low, high=high)

    @classmethod
    def binned(cls, width: float) -> "AttributeKind":
        return cls(Kind.CONTINUOUS_BINNED, bin_width=width)

    @classmethod
    def unbounded(cls) -> "AttributeKind":
        return cls(Kind.UNBOUNDED)

    @classmethod
    def unknown(cls) -> "AttributeKind":
        return cls(Kind.UNKNOWN)

    def validate(self, value: Value) -> None:
        """Raise SchemaError when ``value`` is outside this kind's domain."""
        if value is None or self.kind == Kind.UNKNOWN:
            return
        if self.kind == Kind.BINARY:
            if value not in (0, 1):
                raise SchemaError(f"binary attribute got {value!r}")
        elif self.kind == Kind.UNORDERED_FINITE:
            if self.domain is not None and value not in self.domain:
                raise SchemaError(f"value {value!r} not in domain of size {len(self.domain)}")
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
                raise SchemaError(f"{self.kind.value} attribute needs a number, got {value!r}")
            if not math.isfinite(float(value)):
                raise SchemaError(f"{self.kind.value} attribute got non-finite {value!r}")
            if self.kind == Kind.ORDERED_FINITE and not self.low <= value <= self.high:
                raise SchemaError(f"ordered value {value} outside [{self.low}, {self.high}]")

    def to_dict(self) -> Dict:
        data: Dict[str, Any] = {"kind": self.kind.value}
        if self.bin_width is not None:
            data["bin_width"] = self.bin_width
        if self.domain is not None:
            data["domain"] = sorted(self.domain, key=str)
        if self.low is not None:
            data["low"], data["high"] = self.low, self.high
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "AttributeKind":
        domain = data.get("domain")
        return cls(
            Kind(data["kind"]),
            bin_width=data.get("bin_width"),
            domain=frozenset(domain) if domain is not None else None,
            low=data.get("low"),
            high=data.get("high"),
        )


def attribute_distance(kind: AttributeKind, a: Value, b: Value) -> float:
    """
    Distance between two values of one attribute.

    Raises:
        SchemaError: if either value is outside the kind's domain
    """
    if a is None or b is None or kind.kind == Kind.UNKNOWN:
        return 0.0 if a == b else 1.0
    kind.validate(a)
    kind.validate(b)
    if kind.kind in (Kind.BINARY, Kind.UNORDERED_FINITE):
        return 0.0 if a == b else 1.0
    if kind.kind == Kind.ORDERED_FINITE:
        return float(abs(a - b))
    if kind.kind == Kind.CONTINUOUS_BINNED:
        return abs(float(a) - float(b)) / kind.bin_width
    return abs(float(a) - float(b)) / max(abs(float(a)), 1.0)


@dataclass(frozen=True)
class StateSchema:
    """Ordered (name, kind) pairs; every GameState of one config flattens to len(schema) values."""

    attributes: Tuple[Tuple[str, AttributeKind], ...]

    def __len__(self) -> int:
        return len(self.attributes)

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.attributes]

    @classmethod
    def from_config(cls, config: GameConfig) -> "StateSchema":
        n = config.num_players
        seats = list(range(n))
        attributes: List[Tuple[str, AttributeKind]] = []
        for i in seats:
            attributes += [
                (f"p{i}.cash", AttributeKind.binned(config.smallest_rent)),
                (f"p{i}.position", AttributeKind.ordered(0, config.board_size - 1)),
                (f"p{i}.in_jail", AttributeKind.binary()),
                (f"p{i}.jail_turns", AttributeKind.ordered(0, config.jail_rules.max_turns)),
                (f"p{i}.bankrupt", AttributeKind.binary()),
            ]
        for prop in config.properties:
            attributes += [
                (f"{prop.name}.owner", AttributeKind.unordered([-1] + seats)),
                (f"{prop.name}.mortgaged", AttributeKind.binary()),
                (f"{prop.name}.houses", AttributeKind.ordered(0, 5)),
            ]
        attributes += [
            ("game.current_player", AttributeKind.unordered(seats)),
            ("game.phase", AttributeKind.unordered([p.value for p in Phase])),
            ("game.turn", AttributeKind.ordered(0, config.max_turns)),
        ]
        return cls(tuple(attributes))

    def flatten(self, state: GameState) -> Tuple[Value, ...]:
        """Flatten a state in schema order (owner ``none`` is -1)."""
        values: List[Value] = []
        for p in state.players:
            values += [p.cash, p.position, int(p.in_jail), p.jail_turns, int(p.bankrupt)]
        for prop in state.properties:
            values += [-1 if prop.owner is None else prop.owner, int(prop.mortgaged), prop.houses]
        values += [state.current_player, state.phase.value, state.turn]
        if len(values) != len(self.attributes):
            raise SchemaError(f"state flattens to {len(values)} values, schema has {len(self.attributes)}")
        return tuple(values)

    def to_dict(self) -> Dict:
        return {"attributes": [[name, kind.to_dict()] for name, kind in self.attributes]}

    @classmethod
    def from_dict(cls, data: Dict) -> "StateSchema":
        try:
            return cls(tuple((name, AttributeKind.from_dict(kind)) for name, kind in data["attributes"]))
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"malformed state schema: {e}")


def attribute_distances(schema: StateSchema, s: Sequence[Value], t: Sequence[Value]) -> np.ndarray:
    if len(s) != len(schema) or len(t) != len(schema):
        raise SchemaError(f"expected {len(schema)} attributes, got {len(s)} and {len(t)}")
    return np.array(
        [attribute_distance(kind, a, b) for (_, kind), a, b in zip(schema.attributes, s, t)],
        dtype=np.float64,
    )


def prediction_distance(schema: StateSchema, s: Sequence[Value], t: Sequence[Value]) -> float:
    """
    Euclidean norm of the per-attribute distances.

    Raises:
        SchemaError: on length mismatch or out-of-domain values
    """
    return float(np.sqrt(np.sum(attribute_distances(schema, s, t) ** 2)))


def state_distance(schema: StateSchema, a: GameState, b: GameState) -> float:
    return prediction_distance(schema, schema.flatten(a), schema.flatten(b))


def adjacent_change(schema: StateSchema, values: Sequence[Value], rng: np.random.Generator) -> Tuple[Value, ...]:
    """
    Change one uniformly chosen attribute by exactly one unit of distance.

    Used as the random 1-step prediction baseline.

    Raises:
        SchemaError: if the chosen attribute is unordered with no known domain
    """
    changed = list(values)
    candidates = [i for i, (_, kind) in enumerate(schema.attributes) if kind.kind != Kind.UNKNOWN]
    i = candidates[int(rng.integers(len(candidates)))]
    kind = schema.attributes[i][1]
    value = changed[i]
    if kind.kind == Kind.BINARY:
        changed[i] = 1 - int(value)
    elif kind.kind == Kind.UNORDERED_FINITE:
        if kind.domain is None:
            name = schema.attributes[i][0]
            raise SchemaError(f"{name}: unordered attribute has no domain to pick a different value from")
        others = sorted((v for v in kind.domain if v != value), key=str)
        if others:
            changed[i] = others[int(rng.integers(len(others)))]
    elif kind.kind == Kind.ORDERED_FINITE:
        step = 1 if rng.random() < 0.5 else -1
        if not kind.low <= value + step <= kind.high:
            step = -step
        if kind.low <= value + step <= kind.high:
            changed[i] = value + step
    elif kind.kind == Kind.CONTINUOUS_BINNED:
        changed[i] = value + (kind.bin_width if rng.random() < 0.5 else -kind.bin_width)
    else:
        changed[i] = value + max(abs(value), 1)
    return tuple(changed)
