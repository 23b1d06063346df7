import torch
import pytest
from torch.autograd import gradcheck
from torch.func import functional_call

from backend.app.models.schemas import GatSettings
from backend.app.services.game_engine import new_game
from backend.app.services.graph_attention import (
    DTYPE,
    GatEncoder,
    GraphAttentionLayer,
    NodeFeaturizer,
    encode_graph,
    encoder_triples,
    gat_embed,
    lookahead_triples,
    neighborhood_sums,
)
from backend.app.services.knowledge_graph import static_triples
from backend.app.services.rule_graph import RuleGraph
from backend.app.utils.exceptions import EncoderError

SMALL = GatSettings(heads=2, hidden=3, output=4, hops=1)


def random_graph(generator, nodes, features):
    x = torch.randn(nodes, features, dtype=DTYPE, generator=generator)
    upper = torch.rand(nodes, nodes, generator=generator) < 0.3
    adjacency = upper | upper.T | torch.eye(nodes, dtype=torch.bool)
    return x, adjacency


def test_feature_size(default_config):
    assert NodeFeaturizer(default_config).feature_size == 31


def test_attention_is_normalized_over_neighborhoods():
    generator = torch.Generator().manual_seed(0)
    torch.manual_seed(0)
    layer = GraphAttentionLayer(5, 4, heads=3)
    for _ in range(100):
        nodes = int(torch.randint(1, 15, (1,), generator=generator))
        x, adjacency = random_graph(generator, nodes, 5)
        alpha = layer.attention(x, adjacency)
        assert alpha.shape == (3, nodes, nodes)
        assert torch.allclose(neighborhood_sums(alpha, adjacency), torch.ones(3, nodes, dtype=DTYPE), atol=1e-9)
        assert torch.all(alpha[:, ~adjacency] == 0)


def test_embedding_size_does_not_depend_on_graph_size():
    generator = torch.Generator().manual_seed(1)
    torch.manual_seed(1)
    encoder = GatEncoder(5, SMALL)
    for nodes in (1, 4, 17):
        x, adjacency = random_graph(generator, nodes, 5)
        assert encoder(x, adjacency).shape == (SMALL.output,)


def test_encoder_input_checks():
    encoder = GatEncoder(5, SMALL)
    with pytest.raises(EncoderError):
        encoder(torch.zeros(3, 4, dtype=DTYPE), torch.eye(3, dtype=torch.bool))
    with pytest.raises(EncoderError):
        encoder(torch.zeros(0, 5, dtype=DTYPE), torch.zeros(0, 0, dtype=torch.bool))


def test_featurizer_rejects_empty_subgraph(default_config):
    with pytest.raises(EncoderError):
        NodeFeaturizer(default_config).encode([])


def test_gradients_match_finite_differences():
    generator = torch.Generator().manual_seed(2)
    torch.manual_seed(2)
    encoder = GatEncoder(5, SMALL)
    x, adjacency = random_graph(generator, 6, 5)
    x.requires_grad_(True)
    assert gradcheck(lambda features: encoder(features, adjacency), (x,), eps=1e-6, atol=1e-6, rtol=1e-4)

    names = ("layer.W", "layer.p", "output.weight", "output.bias")
    params = tuple(dict(encoder.named_parameters())[n].detach().clone().requires_grad_(True) for n in names)

    def embed(*values):
        return functional_call(encoder, dict(zip(names, values)), (x.detach(), adjacency))

    assert gradcheck(embed, params, eps=1e-6, atol=1e-6, rtol=1e-4)


def test_state_subgraph_encoding(default_config):
    state = new_game(default_config, 0)
    featurizer = NodeFeaturizer(default_config)
    graph = encode_graph(featurizer, static_triples(default_config), state, gat=SMALL)
    assert graph.features.shape == (len(graph), featurizer.feature_size)
    assert torch.equal(graph.adjacency, graph.adjacency.T)
    assert bool(graph.adjacency.diagonal().all())
    # exactly the focus entities carry the focus flag
    assert int(graph.features[:, -1].sum()) == 2

    torch.manual_seed(3)
    embedding = gat_embed(GatEncoder(featurizer.feature_size, SMALL), graph)
    assert embedding.shape == (SMALL.output,)
    assert torch.isfinite(embedding).all()


def test_lookahead_is_capped(mini_config, mini_transitions):
    static = static_triples(mini_config)
    rules = RuleGraph.from_transitions(mini_transitions, static)
    state = mini_transitions[0].state
    assert len(lookahead_triples(rules, static, state, 2)) <= 2
    assert lookahead_triples(rules, static, state, 0) == []
    assert lookahead_triples(RuleGraph(), static, state, 8) == []

    with_rules, _ = encoder_triples(static, state, rules, GatSettings(hops=1, max_lookahead=3))
    without, _ = encoder_triples(static, state, None, GatSettings(hops=1))
    assert len(without) <= len(with_rules) <= len(without) + 3
