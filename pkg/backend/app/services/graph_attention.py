"""
Graph Attention Encoder - Knowledge Graph to Vector

Embeds the k-hop neighborhood of the current state in the knowledge graph into a
fixed-size vector g_t that the actor-critic concatenates with its observation
encoding.

Key Features:
- Node features: entity-type one-hot, incident-relation multi-hot, scaled literal
  value and a focus flag for seed entities
- Dense multi-head graph attention with self-loops: per head
  e_ij = LeakyReLU(p . [W h_i || W h_j]), alpha_ij = softmax over the neighborhood
- ELU inside heads, heads concatenated, output linear layer with tanh
- Mean pooling over nodes, so g_t has the same size for any subgraph

Everything runs in float64 so that gradients can be checked against finite
differences.
"""

from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from ..models.schemas import GameConfig, GatSettings
from ..utils.exceptions import EncoderError, VocabularyError
from ..utils.logger import logger
from .game_engine import GameState
from .knowledge_graph import (
    ENTITY_TYPES,
    GAME,
    RELATIONS,
    Term,
    Triple,
    Vocabulary,
    k_hop_subgraph,
    node_key,
    player_entity,
    state_graph,
    term_type,
)
from .rule_graph import RuleGraph, from_role_space, role_triples

DTYPE = torch.float64
RELATION_NAMES = tuple(RELATIONS)


@dataclass(frozen=True)
class EncodedGraph:
    """Node order, features (N x F) and adjacency with self-loops (N x N)."""

    nodes: Tuple[Tuple, ...]
    features: torch.Tensor
    adjacency: torch.Tensor

    def __len__(self) -> int:
        return len(self.nodes)


class NodeFeaturizer:
    """Turns a set of triples into node features for one board."""

    def __init__(self, config: GameConfig):
        self.vocabulary = Vocabulary(config)
        self.scale = float(max(config.starting_cash, 1))

    @property
    def feature_size(self) -> int:
        return len(ENTITY_TYPES) + len(RELATION_NAMES) + 2

    def node_type(self, term: Term) -> str:
        try:
            return self.vocabulary.entity_type(term)
        except VocabularyError:
            return "symbol"

    def encode(self, triples: Iterable[Triple], focus: Iterable[str] = ()) -> EncodedGraph:
        """
        Raises:
            EncoderError: when there are no triples
        """
        triples = list(triples)
        if not triples:
            raise EncoderError("cannot encode an empty subgraph")
        terms = {}
        incident = {}
        edges = set()
        for t in triples:
            for term in (t.subject, t.object):
                key = node_key(term)
                terms[key] = term
                incident.setdefault(key, set()).add(t.relation)
            edges.add((node_key(t.subject), node_key(t.object)))

        nodes = tuple(sorted(terms, key=repr))
        position = {key: i for i, key in enumerate(nodes)}
        focus_keys = {node_key(f) for f in focus}

        features = torch.zeros(len(nodes), self.feature_size, dtype=DTYPE)
        offset = len(ENTITY_TYPES)
        for i, key in enumerate(nodes):
            term = terms[key]
            features[i, ENTITY_TYPES.index(self.node_type(term))] = 1.0
            for relation in incident[key]:
                features[i, offset + RELATION_NAMES.index(relation)] = 1.0
            kind = term_type(term)
            if kind != "entity":
                features[i, offset + len(RELATION_NAMES)] = float(term) / self.scale if kind == "int" else float(term)
            if key in focus_keys:
                features[i, -1] = 1.0

        adjacency = torch.eye(len(nodes), dtype=torch.bool)
        for a, b in edges:
            adjacency[position[a], position[b]] = True
            adjacency[position[b], position[a]] = True
        return EncodedGraph(nodes, features, adjacency)


class GraphAttentionLayer(nn.Module):
    """Multi-head attention over a dense adjacency; heads are concatenated."""

    def __init__(self, in_features: int, out_features: int, heads: int, negative_slope: float = 0.2):
        super().__init__()
        self.heads = heads
        self.out_features = out_features
        self.negative_slope = negative_slope
        self.W = nn.Parameter(torch.empty(heads, in_features, out_features, dtype=DTYPE))
        self.p = nn.Parameter(torch.empty(heads, 2 * out_features, dtype=DTYPE))
        nn.init.xavier_uniform_(self.W)
        nn.init.xavier_uniform_(self.p)

    def attention(self, h: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        """Attention coefficients alpha (heads x N x N); rows sum to 1 over each neighborhood."""
        Wh = torch.einsum("nf,kfo->kno", h, self.W)
        source = (Wh * self.p[:, None, : self.out_features]).sum(-1)
        target = (Wh * self.p[:, None, self.out_features:]).sum(-1)
        e = F.leaky_relu(source[:, :, None] + target[:, None, :], self.negative_slope)
        e = e.masked_fill(~adjacency.unsqueeze(0), float("-inf"))
        return torch.softmax(e, dim=-1)

    def forward(self, h: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        Wh = torch.einsum("nf,kfo->kno", h, self.W)
        alpha = self.attention(h, adjacency)
        heads = F.elu(torch.bmm(alpha, Wh))
        return heads.permute(1, 0, 2).reshape(h.shape[0], self.heads * self.out_features)


class GatEncoder(nn.Module):
    """
    Graph attention layer, output linear layer with tanh, mean pooling.

    Args:
        in_features: node feature size
        gat: heads, hidden size per head and output size
    """

    def __init__(self, in_features: int, gat: Optional[GatSettings] = None):
        super().__init__()
        gat = gat or GatSettings()
        self.in_features = in_features
        self.output_size = gat.output
        self.layer = GraphAttentionLayer(in_features, gat.hidden, gat.heads)
        self.output = nn.Linear(gat.heads * gat.hidden, gat.output, dtype=DTYPE)

    def forward(self, features: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        if features.ndim != 2 or features.shape[1] != self.in_features:
            raise EncoderError(f"expected node features (N, {self.in_features}), got {tuple(features.shape)}")
        if features.shape[0] == 0:
            raise EncoderError("cannot encode an empty subgraph")
        nodes = torch.tanh(self.output(self.layer(features, adjacency)))
        return nodes.mean(dim=0)


def gat_embed(encoder: GatEncoder, graph: EncodedGraph) -> torch.Tensor:
    """g_t for one encoded subgraph."""
    return encoder(graph.features, graph.adjacency)


def lookahead_triples(
    rules: RuleGraph,
    static: Iterable[Triple],
    state: GameState,
    limit: int,
) -> List[Triple]:
    """
    Postcondition triples of rules whose preconditions hold for the player to move,
    bound to concrete players, in canonical rule order, at most ``limit``.
    """
    if limit <= 0 or not rules.rules:
        return []
    current = role_triples(frozenset(static), state)
    actor, n = state.current_player, len(state.players)
    found: List[Triple] = []
    for rule in rules.rules:
        if rule.change.new is None or not rule.preconditions <= current:
            continue
        found.append(from_role_space(rule.change.new, actor, n))
        if len(found) >= limit:
            break
    return found


def encoder_triples(
    static: Iterable[Triple],
    state: GameState,
    rules: Optional[RuleGraph] = None,
    gat: Optional[GatSettings] = None,
) -> Tuple[List[Triple], Tuple[str, ...]]:
    """
    Triples fed to the encoder and the focus entities: the k-hop subgraph of the
    believed state graph around the player to move, ``game`` and the property under
    the mover, plus rule lookahead triples.
    """
    gat = gat or GatSettings()
    graph = state_graph(frozenset(static), state)
    config = state.config
    actor = player_entity(state.current_player)
    focus = [actor, GAME]
    square = config.property_at(state.players[state.current_player].position)
    if square is not None:
        focus.append(config.properties[square].name)
    present = [f for f in focus if node_key(f) in graph.nx_graph]
    subgraph = k_hop_subgraph(graph, present, gat.hops)
    triples = sorted(subgraph.triples, key=repr)
    if rules is not None:
        triples += lookahead_triples(rules, static, state, gat.max_lookahead)
    return triples, tuple(present)


def encode_graph(
    featurizer: NodeFeaturizer,
    static: Iterable[Triple],
    state: GameState,
    rules: Optional[RuleGraph] = None,
    gat: Optional[GatSettings] = None,
) -> Optional[EncodedGraph]:
    """Encoded subgraph for a state, or None (with a warning) when it is empty."""
    triples, focus = encoder_triples(static, state, rules, gat)
    try:
        return featurizer.encode(triples, focus)
    except EncoderError as e:
        logger.warning(f"{e}; using a zero graph embedding")
        return None


def zero_embedding(gat: Optional[GatSettings] = None) -> torch.Tensor:
    return torch.zeros((gat or GatSettings()).output, dtype=DTYPE)


def neighborhood_sums(alpha: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
    """Sum of attention weights over each node's neighborhood, per head."""
    return (alpha * adjacency.unsqueeze(0)).sum(-1)

