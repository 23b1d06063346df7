import numpy as np
import pytest

from backend.app.services.distance_metric import (
    AttributeKind,
    Kind,
    StateSchema,
    adjacent_change,
    attribute_distance,
    prediction_distance,
    state_distance,
)
from backend.app.services.game_engine import new_game
from backend.app.utils.exceptions import SchemaError

PAIRS = 10_000


def random_values(schema, rng):
    values = []
    for _, kind in schema.attributes:
        if kind.kind == Kind.BINARY:
            values.append(int(rng.integers(2)))
        elif kind.kind == Kind.UNORDERED_FINITE:
            domain = sorted(kind.domain, key=str)
            values.append(domain[int(rng.integers(len(domain)))])
        elif kind.kind == Kind.ORDERED_FINITE:
            values.append(int(rng.integers(kind.low, kind.high + 1)))
        else:
            values.append(int(rng.integers(-100, 3000)))
    return tuple(values)


@pytest.fixture
def schema(default_config):
    return StateSchema.from_config(default_config)


def test_schema_layout(default_config, schema):
    assert len(schema) == 5 * 2 + 3 * 20 + 3
    assert dict(schema.attributes)["p0.cash"] == AttributeKind.binned(4)
    assert len(schema.flatten(new_game(default_config, 0))) == len(schema)


def test_identity_and_symmetry(schema):
    rng = np.random.default_rng(0)
    for _ in range(PAIRS):
        s, t = random_values(schema, rng), random_values(schema, rng)
        assert prediction_distance(schema, s, s) == 0.0
        assert prediction_distance(schema, s, t) == prediction_distance(schema, t, s)
        assert prediction_distance(schema, s, t) >= 0.0


def test_moving_further_never_gets_closer(schema):
    rng = np.random.default_rng(1)
    cash = schema.names.index("p1.cash")
    houses = schema.names.index("Boardwalk.houses")
    for _ in range(PAIRS // 10):
        s, t = random_values(schema, rng), list(random_values(schema, rng))
        base = prediction_distance(schema, s, t)

        further = list(t)
        further[cash] += 4 if t[cash] >= s[cash] else -4
        assert prediction_distance(schema, s, further) > base

        if t[houses] > s[houses] and t[houses] < 5:
            further = list(t)
            further[houses] += 1
            assert prediction_distance(schema, s, further) > base


def test_single_unit_change_costs_one(schema):
    rng = np.random.default_rng(2)
    for _ in range(500):
        s = random_values(schema, rng)
        assert prediction_distance(schema, s, adjacent_change(schema, s, rng)) == pytest.approx(1.0)


def test_attribute_kinds():
    assert attribute_distance(AttributeKind.binned(10), 100, 135) == pytest.approx(3.5)
    assert attribute_distance(AttributeKind.ordered(0, 5), 1, 4) == 3.0
    assert attribute_distance(AttributeKind.unordered(["a", "b"]), "a", "b") == 1.0
    assert attribute_distance(AttributeKind.unbounded(), 0, 3) == 3.0
    assert attribute_distance(AttributeKind.unbounded(), 10, 15) == 0.5
    assert attribute_distance(AttributeKind.unknown(), "x", "y") == 1.0
    assert attribute_distance(AttributeKind.binary(), None, None) == 0.0


def test_out_of_domain_values_raise():
    with pytest.raises(SchemaError):
        attribute_distance(AttributeKind.binary(), 0, 2)
    with pytest.raises(SchemaError):
        attribute_distance(AttributeKind.ordered(0, 5), 0, 6)
    with pytest.raises(SchemaError):
        attribute_distance(AttributeKind.binned(4), 0, float("nan"))
    with pytest.raises(SchemaError):
        attribute_distance(AttributeKind.unordered(["a"]), "a", "z")


def test_binned_kind_needs_a_positive_width():
    with pytest.raises(SchemaError):
        AttributeKind.binned(0)


def test_length_mismatch_raises(schema):
    with pytest.raises(SchemaError):
        prediction_distance(schema, (0,) * len(schema), (0,) * (len(schema) - 1))


def test_schema_survives_serialization(mini_config):
    schema = StateSchema.from_config(mini_config)
    assert StateSchema.from_dict(schema.to_dict()) == schema
    with pytest.raises(SchemaError):
        StateSchema.from_dict({"attributes": [["p0.cash", {"kind": "no_such_kind"}]]})


def test_state_distance_between_real_states(mini_transitions, mini_config):
    schema = StateSchema.from_config(mini_config)
    for t in mini_transitions[:50]:
        assert state_distance(schema, t.state, t.state) == 0.0
        assert state_distance(schema, t.state, t.next_state) > 0.0


def test_adjacent_change_needs_a_domain_for_unordered_values():
    schema = StateSchema((("owner", AttributeKind.unordered()),))
    with pytest.raises(SchemaError):
        adjacent_change(schema, ("p0",), np.random.default_rng(0))

    known = StateSchema((("owner", AttributeKind.unordered(["p0", "p1"])),))
    assert adjacent_change(known, ("p0",), np.random.default_rng(0)) == ("p1",)
