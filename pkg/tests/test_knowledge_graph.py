import pytest

from backend.app.models.schemas import NoveltyKind, NoveltySpec, TargetSelector, default_game_config
from backend.app.services.game_engine import ROLL, new_game, observe, play_game, heuristic_policy, step, inject_novelty
from backend.app.services.knowledge_graph import (
    DYNAMIC_RELATIONS,
    STATIC_RELATIONS,
    KnowledgeGraph,
    Triple,
    TupleChange,
    apply_change,
    believed_config,
    count_triples,
    diff,
    extract_triples,
    k_hop_subgraph,
    parse_triples,
    serialize_triples,
    state_graph,
    static_triples,
)
from backend.app.utils.exceptions import IngestionError, InvariantViolation, StaleChangeError, VocabularyError


def test_extraction_is_total(default_config):
    _, transitions = play_game(default_config, 9, [heuristic_policy] * 2, max_steps=60)
    assert count_triples(default_config) == 163
    for t in transitions:
        triples = extract_triples(observe(t.next_state, t.events, t.state), default_config)
        assert len(triples) == 163


def test_partitions_do_not_overlap(default_config):
    graph = KnowledgeGraph.from_triples(extract_triples(observe(new_game(default_config, 0)), default_config))
    assert not graph.static & graph.dynamic
    assert all(t.relation in STATIC_RELATIONS for t in graph.static)
    assert all(t.relation in DYNAMIC_RELATIONS for t in graph.dynamic)


def test_overlapping_partitions_rejected():
    triple = Triple("Baltic", "has_price", 80)
    with pytest.raises(InvariantViolation):
        KnowledgeGraph(static=frozenset({triple}), dynamic=frozenset({triple}))


def test_two_prices_for_one_property_rejected():
    with pytest.raises(InvariantViolation):
        KnowledgeGraph(static=frozenset({Triple("Baltic", "has_price", 80), Triple("Baltic", "has_price", 90)}))


def test_changed_price_is_a_relink():
    result = diff({Triple("Baltic", "has_price", 80)}, {Triple("Baltic", "has_price", 1499)})
    assert result.relinked == {("Baltic", "has_price", 80, 1499)}
    assert not result.added and not result.removed


def test_unmatched_triples_are_added_or_removed():
    result = diff({Triple("tax", "has_amount", 100)}, {Triple("go", "has_salary", 200)})
    assert result.added == {Triple("go", "has_salary", 200)}
    assert result.removed == {Triple("tax", "has_amount", 100)}
    assert not result.relinked
    assert diff(set(), set()).is_empty


def test_extract_uses_shown_values_for_exposed_entities(default_config):
    ones = default_game_config(dice={"count": 1, "sides": 1})
    spec = NoveltySpec(kind=NoveltyKind.SET_PRICE, targets=TargetSelector(names=("Mediterranean",)), new_value=999)
    novel = inject_novelty(ones, spec)
    state = step(new_game(novel, 0), ROLL).state
    triples = extract_triples(observe(state), ones)
    assert Triple("Mediterranean", "has_price", 999) in triples
    assert Triple("Mediterranean", "has_price", 60) not in triples
    assert Triple("Boardwalk", "has_price", 400) in triples


def test_unknown_player_is_a_vocabulary_error(default_config):
    crowded = default_game_config(num_players=3)
    with pytest.raises(VocabularyError):
        extract_triples(observe(new_game(crowded, 0)), default_config)


def test_k_hop_subgraph(default_config):
    graph = state_graph(static_triples(default_config), new_game(default_config, 0))
    one = k_hop_subgraph(graph, ["Baltic"], 1)
    assert Triple("Baltic", "has_price", 80) in one.static
    assert Triple("Baltic", "owned_by", "none") in one.dynamic
    assert all(t.subject == "Baltic" for t in one.triples)
    assert len(k_hop_subgraph(graph, ["Baltic"], 0)) == 0

    two = k_hop_subgraph(graph, ["Baltic"], 2)
    assert Triple("Mediterranean", "has_color", "brown") in two.static
    assert one.triples <= two.triples


def test_k_hop_subgraph_errors(default_config):
    graph = KnowledgeGraph(static=static_triples(default_config))
    with pytest.raises(VocabularyError):
        k_hop_subgraph(graph, ["Nowhere"], 1)
    with pytest.raises(ValueError):
        k_hop_subgraph(graph, ["Baltic"], -1)


def test_apply_change():
    graph = KnowledgeGraph(static=frozenset({Triple("go", "has_salary", 200)}))
    changed = apply_change(graph, TupleChange(Triple("go", "has_salary", 200), Triple("go", "has_salary", 400)))
    assert changed.lookup("go", "has_salary") == 400
    assert graph.lookup("go", "has_salary") == 200
    with pytest.raises(StaleChangeError):
        apply_change(changed, TupleChange(Triple("go", "has_salary", 200), Triple("go", "has_salary", 50)))


def test_tuple_change_must_keep_its_key():
    with pytest.raises(ValueError):
        TupleChange(Triple("go", "has_salary", 200), Triple("jail", "has_fine", 50))
    with pytest.raises(ValueError):
        TupleChange()


def test_serialization_is_sorted_and_typed(default_config):
    text = serialize_triples(static_triples(default_config))
    lines = text.splitlines()
    assert lines == sorted(lines, key=lambda line: line.split("\t")[:2])
    assert "Baltic\thas_price\ti:80" in lines
    assert parse_triples(text) == static_triples(default_config)


def test_bool_and_int_objects_stay_distinct():
    triples = {Triple("Baltic", "is_mortgaged", False), Triple("Baltic", "has_houses", 0)}
    assert parse_triples(serialize_triples(triples)) == triples


def test_parse_rejects_malformed_lines():
    with pytest.raises(IngestionError):
        parse_triples("Baltic\thas_price\n")
    with pytest.raises(IngestionError):
        parse_triples("Baltic\thas_price\tx:80\n")


def test_believed_config_from_learned_triples(default_config):
    learned = (static_triples(default_config) - {Triple("Baltic", "has_price", 80)}) | {Triple("Baltic", "has_price", 1499)}
    believed = believed_config(default_config, learned)
    assert believed.properties[believed.property_index("Baltic")].price == 1499
    assert believed.go_salary == default_config.go_salary


def test_believed_config_keeps_base_when_invalid(default_config):
    clash = {Triple("Baltic", "at_position", 1)}
    assert believed_config(default_config, clash) == default_config
