"""
Agents Service - Actor-Critic Policies

Two learning agents share one code path:
- "kg": the observation encoding is concatenated with a graph-attention
  embedding of the knowledge graph around the current state (s_t = g_t + o_t)
- "vanilla": observation encoding only

Both use a masked softmax actor over the closed action space, a state-value
critic, and the advantage policy gradient
    A(s, a) = r + gamma * V(s') - V(s)
with an entropy bonus. Gradients flow end to end through the graph encoder.
"""

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from ..models.schemas import A2CSettings, AgentKind, GameConfig, GatSettings
from ..utils.exceptions import EncoderError, InvariantViolation, TrainingError
from ..utils.logger import logger
from .game_engine import Action, GameState, action_index, action_space, legal_actions, observe, observation_size
from .graph_attention import DTYPE, EncodedGraph, GatEncoder, NodeFeaturizer, encode_graph, gat_embed
from .knowledge_graph import Triple, static_triples
from .rule_graph import RuleGraph


@dataclass(frozen=True)
class StepInput:
    """Everything the network sees for one decision."""

    observation: torch.Tensor
    graph: Optional[EncodedGraph] = None


@dataclass(frozen=True)
class TrajectoryStep:
    inputs: StepInput
    legal: torch.Tensor
    action: int
    reward: float = 0.0


@dataclass
class Trajectory:
    """
    One player's decisions in one episode, in order. ``bootstrap`` is the input
    after the last step when the episode was cut short (None when it ended).
    """

    discount: float
    steps: List[TrajectoryStep] = field(default_factory=list)
    bootstrap: Optional[StepInput] = None

    def __post_init__(self):
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError(f"discount must be in [0, 1], got {self.discount}")

    def __len__(self) -> int:
        return len(self.steps)

    def append(self, step: TrajectoryStep) -> None:
        self.steps.append(step)

    def set_final_reward(self, reward: float) -> None:
        if self.steps:
            last = self.steps[-1]
            self.steps[-1] = TrajectoryStep(last.inputs, last.legal, last.action, float(reward))

    @property
    def rewards(self) -> List[float]:
        return [s.reward for s in self.steps]


class PolicyNetwork(nn.Module):
    """
    Observation encoder (W_o, b_o), optional graph encoder, shared tanh layer,
    actor head (one logit per action) and critic head (scalar value).
    """

    def __init__(
        self,
        observation_size: int,
        action_count: int,
        a2c: Optional[A2CSettings] = None,
        node_features: Optional[int] = None,
        gat: Optional[GatSettings] = None,
    ):
        super().__init__()
        a2c = a2c or A2CSettings()
        gat = gat or GatSettings()
        self.observation_size = observation_size
        self.action_count = action_count
        self.observation = nn.Linear(observation_size, a2c.hidden, dtype=DTYPE)
        graph_size = gat.output if node_features else 0
        self.hidden = nn.Linear(graph_size + a2c.hidden, a2c.hidden, dtype=DTYPE)
        self.actor = nn.Linear(a2c.hidden, action_count, dtype=DTYPE)
        self.critic = nn.Linear(a2c.hidden, 1, dtype=DTYPE)
        self.encoder = GatEncoder(node_features, gat) if node_features else None

    @property
    def uses_graph(self) -> bool:
        return self.encoder is not None

    def encode_state(self, inputs: StepInput) -> torch.Tensor:
        """s_t = g_t (+) o_t, or o_t alone without a graph encoder."""
        if inputs.observation.shape[-1] != self.observation_size:
            raise EncoderError(
                f"observation has {inputs.observation.shape[-1]} features, expected {self.observation_size}"
            )
        o = self.observation(inputs.observation)
        if self.encoder is None:
            return o
        if inputs.graph is None:
            g = torch.zeros(self.encoder.output_size, dtype=DTYPE)
        else:
            g = gat_embed(self.encoder, inputs.graph)
        return torch.cat([g, o], dim=-1)

    def forward(self, s: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        x = torch.tanh(self.hidden(s))
        return self.actor(x), self.critic(x).squeeze(-1)


def masked_log_probs(logits: torch.Tensor, legal: torch.Tensor) -> torch.Tensor:
    """Log-softmax over legal actions only; illegal actions get -inf (probability exactly 0)."""
    return torch.log_softmax(logits.masked_fill(~legal, float("-inf")), dim=-1)


def act(
    network: PolicyNetwork,
    s: torch.Tensor,
    legal: torch.Tensor,
    rng: Optional[np.random.Generator] = None,
    greedy: bool = False,
) -> Tuple[int, float]:
    """
    Choose an action index from the masked policy.

    Returns:
        Tuple of the action index and its log-probability
    """
    if not bool(legal.any()):
        raise ValueError("no legal action to choose from")
    with torch.no_grad():
        logits, _ = network(s)
        log_probs = masked_log_probs(logits, legal)
    if greedy:
        index = int(torch.argmax(log_probs))
    else:
        probabilities = log_probs.exp().numpy()
        index = int(rng.choice(len(probabilities), p=probabilities / probabilities.sum()))
    return index, float(log_probs[index])


def a2c_loss(network: PolicyNetwork, trajectory: Trajectory, a2c: A2CSettings) -> Tuple[torch.Tensor, Dict]:
    """
    Advantage actor-critic loss over one trajectory.

    Critic targets r + gamma * V(s') are held fixed, as is the advantage in the
    actor term.
    """
    if not trajectory.steps:
        raise ValueError("cannot compute a loss on an empty trajectory")
    states = torch.stack([network.encode_state(step.inputs) for step in trajectory.steps])
    legal = torch.stack([step.legal for step in trajectory.steps])
    actions = torch.tensor([step.action for step in trajectory.steps], dtype=torch.long)
    rewards = torch.tensor(trajectory.rewards, dtype=DTYPE)

    logits, values = network(states)
    if trajectory.bootstrap is not None:
        _, bootstrap = network(network.encode_state(trajectory.bootstrap))
        following = torch.cat([values[1:], bootstrap.reshape(1)])
    else:
        following = torch.cat([values[1:], torch.zeros(1, dtype=DTYPE)])
    targets = (rewards + trajectory.discount * following).detach()
    advantages = (targets - values).detach()

    log_probs = masked_log_probs(logits, legal)
    safe = log_probs.masked_fill(~legal, 0.0)
    chosen = safe.gather(1, actions.unsqueeze(1)).squeeze(1)
    entropy = -(log_probs.exp() * safe).sum(dim=-1)

    actor_loss = -(chosen * advantages).mean()
    critic_loss = ((targets - values) ** 2).mean()
    loss = actor_loss + a2c.value_weight * critic_loss - a2c.entropy_weight * entropy.mean()
    diagnostics = {
        "loss": float(loss.detach()),
        "actor_loss": float(actor_loss.detach()),
        "critic_loss": float(critic_loss.detach()),
        "entropy": float(entropy.detach().mean()),
        "steps": len(trajectory),
        "reward_sum": float(rewards.sum()),
    }
    return loss, diagnostics


def a2c_update(
    network: PolicyNetwork,
    optimizer: torch.optim.Optimizer,
    trajectory: Trajectory,
    a2c: A2CSettings,
) -> Dict:
    """
    One gradient step on every parameter (graph encoder included).

    Raises:
        TrainingError: when the loss or a gradient is not finite
    """
    loss, diagnostics = a2c_loss(network, trajectory, a2c)
    if not torch.isfinite(loss):
        logger.error(f"Non-finite training loss: {diagnostics}")
        raise TrainingError("non-finite training loss", diagnostics)
    optimizer.zero_grad()
    loss.backward()
    for name, parameter in network.named_parameters():
        if parameter.grad is not None and not torch.isfinite(parameter.grad).all():
            diagnostics["parameter"] = name
            logger.error(f"Non-finite gradient in {name}: {diagnostics}")
            raise TrainingError(f"non-finite gradient in {name}", diagnostics)
    optimizer.step()
    return diagnostics


def build_network(
    config: GameConfig,
    kind: AgentKind,
    seed: int,
    a2c: Optional[A2CSettings] = None,
    gat: Optional[GatSettings] = None,
    graph_encoder: bool = True,
) -> PolicyNetwork:
    """
    Seeded construction; the global torch RNG is left untouched. Without a graph
    encoder a "kg" network is built exactly like the vanilla one.
    """
    node_features = NodeFeaturizer(config).feature_size if kind == "kg" and graph_encoder else None
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return PolicyNetwork(observation_size(config), len(action_space(config)), a2c, node_features, gat)


class Agent:
    """
    A learning player: network, optimizer, sampling stream and (for "kg") the
    believed static triples and rule graph the encoder reads.

    Args:
        config: Game the agent was built for (fixes action space and input sizes)
        kind: "kg" or "vanilla"
        seed: Seeds the parameters and the action-sampling stream
        a2c: Actor-critic hyperparameters
        gat: Graph encoder sizes
        graph_encoder: False drops the graph block from a "kg" network (the agent
            still tracks and encodes its knowledge graph)
    """

    def __init__(
        self,
        config: GameConfig,
        kind: AgentKind = "kg",
        seed: int = 0,
        a2c: Optional[A2CSettings] = None,
        gat: Optional[GatSettings] = None,
        static: Optional[Iterable[Triple]] = None,
        rules: Optional[RuleGraph] = None,
        graph_encoder: bool = True,
    ):
        self.config = config
        self.kind = kind
        self.seed = seed
        self.a2c = a2c or A2CSettings()
        self.gat = gat or GatSettings()
        self.actions = action_space(config)
        self.network = build_network(config, kind, seed, self.a2c, self.gat, graph_encoder)
        self.optimizer = torch.optim.Adam(self.network.parameters(), lr=self.a2c.learning_rate)
        self.rng = np.random.default_rng(seed)
        self.featurizer = NodeFeaturizer(config) if kind == "kg" else None
        self.static: FrozenSet[Triple] = frozenset(static) if static is not None else static_triples(config)
        self.rules = rules
        self.frozen = False
        self.updates = 0

    @property
    def name(self) -> str:
        return self.kind

    def set_knowledge(self, static: Optional[Iterable[Triple]] = None, rules: Optional[RuleGraph] = None) -> None:
        if static is not None:
            self.static = frozenset(static)
        if rules is not None:
            self.rules = rules

    def inputs(self, state: GameState, previous: Optional[GameState] = None) -> StepInput:
        observation = observe(state, previous=previous, player=state.current_player)
        vector = torch.as_tensor(observation.vector, dtype=DTYPE)
        graph = None
        if self.featurizer is not None:
            graph = encode_graph(self.featurizer, self.static, state, self.rules, self.gat)
        return StepInput(vector, graph)

    def legal_mask(self, legal: Sequence[Action]) -> torch.Tensor:
        mask = torch.zeros(len(self.actions), dtype=torch.bool)
        for action in legal:
            mask[action_index(self.config, action)] = True
        return mask

    def decide(
        self,
        state: GameState,
        previous: Optional[GameState] = None,
        greedy: bool = False,
    ) -> Tuple[Action, Optional[TrajectoryStep]]:
        """
        Pick an action for the player to move. Forced moves (one legal action) skip
        the network and return no trajectory step.
        """
        legal = legal_actions(state)
        if len(legal) == 1:
            return legal[0], None
        inputs = self.inputs(state, previous)
        mask = self.legal_mask(legal)
        with torch.no_grad():
            s = self.network.encode_state(inputs)
        index, _ = act(self.network, s, mask, self.rng, greedy)
        return self.actions[index], TrajectoryStep(inputs, mask, index)

    def update(self, trajectory: Trajectory) -> Optional[Dict]:
        """
        Raises:
            InvariantViolation: when the policy is frozen
            TrainingError: on a non-finite loss
        """
        if self.frozen:
            raise InvariantViolation(f"{self.kind} agent is frozen; parameters must not change")
        if not trajectory.steps:
            return None
        diagnostics = a2c_update(self.network, self.optimizer, trajectory, self.a2c)
        self.updates += 1
        return diagnostics

    def parameters(self) -> Dict[str, np.ndarray]:
        return {name: tensor.detach().numpy().copy() for name, tensor in self.network.state_dict().items()}

    def load_parameters(self, parameters: Dict[str, np.ndarray]) -> None:
        state = {name: torch.as_tensor(np.asarray(value), dtype=DTYPE) for name, value in parameters.items()}
        self.network.load_state_dict(state)
        self.optimizer = torch.optim.Adam(self.network.parameters(), lr=self.a2c.learning_rate)
