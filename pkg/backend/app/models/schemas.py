"""
Pydantic Schemas for Game, Novelty, and Experiment Configuration

This module defines every configuration and record model the testbed reads or
writes. Using Pydantic ensures type safety and automatic validation of config files.

All config models are frozen: a GameConfig is shared read-only between game
instances, and novelty injection always returns a new config.
"""

import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, model_validator

from ..config import settings
from ..utils.exceptions import ConfigurationError


WEIGHT_TOLERANCE = 1e-9


class DiceSpec(BaseModel):
    """Number of dice, sides per die, and per-face probability weights."""

    model_config = ConfigDict(frozen=True)

    count: int = Field(2, ge=1, le=6, description="Number of dice rolled together")
    sides: int = Field(6, ge=1, le=20, description="Sides per die")
    weights: Tuple[float, ...] = Field(
        (),
        description="Per-face probabilities (face 1 first); omitted means uniform",
        examples=[[0.25, 0.25, 0.25, 0.25]],
    )

    @model_validator(mode="before")
    @classmethod
    def fill_uniform_weights(cls, data: Any) -> Any:
        if isinstance(data, dict) and not data.get("weights"):
            sides = int(data.get("sides", 6))
            data = {**data, "weights": tuple([1.0 / sides] * sides)}
        return data

    @model_validator(mode="after")
    def check_weights(self) -> "DiceSpec":
        if len(self.weights) != self.sides:
            raise ValueError(f"dice weights: expected {self.sides} face weights, got {len(self.weights)}")
        if any(w < 0 for w in self.weights):
            raise ValueError("dice weights: face weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"dice weights: face weights sum to {sum(self.weights)!r}, not 1")
        return self

    def face_probabilities(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)

    def total_distribution(self) -> Dict[int, float]:
        """
        Exact distribution of the dice total.

        Returns:
            Dict[int, float]: total -> probability, only totals with non-zero mass
        """
        faces = self.face_probabilities()
        dist = np.array([1.0])
        for _ in range(self.count):
            dist = np.convolve(dist, faces)
        # dist[i] is the probability of total = count + i
        return {self.count + i: float(p) for i, p in enumerate(dist) if p > 0}

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(sorted(self.total_distribution()))


class PropertySpec(BaseModel):
    """A purchasable square."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1, description="Entity id of the property", examples=["Baltic"])
    color: str = Field(..., min_length=1, description="Color group", examples=["brown"])
    price: int = Field(..., ge=0, description="Purchase price in dollars", examples=[80])
    rent: int = Field(..., ge=0, description="Base rent in dollars", examples=[6])
    position: int = Field(..., ge=0, description="Square index on the board", examples=[2])
    house_cost: Optional[int] = Field(None, ge=0, description="Cost per house; defaults to half the price")

    @property
    def building_cost(self) -> int:
        return self.house_cost if self.house_cost is not None else self.price // 2


class JailRules(BaseModel):
    """Jail fine and the number of turns a player can be held."""

    model_config = ConfigDict(frozen=True)

    fine: int = Field(50, ge=0, description="Fine in dollars to leave jail")
    max_turns: int = Field(3, ge=1, description="Rolls in jail before the fine becomes compulsory")


class GameConfig(BaseModel):
    """
    The complete, configurable rule surface of the game.

    Every field here is something a novelty can mutate. Invariants are checked on
    construction (pydantic) and again by check() for configs built without validation.
    """

    model_config = ConfigDict(frozen=True)

    board_size: int = Field(24, ge=4, description="Number of squares on the board")
    properties: Tuple[PropertySpec, ...] = Field(..., min_length=1)
    dice: DiceSpec = Field(default_factory=DiceSpec)
    starting_cash: int = Field(1500, ge=0)
    go_salary: int = Field(200, ge=0)
    jail_rules: JailRules = Field(default_factory=JailRules)
    max_turns: int = Field(300, ge=1, description="Player-turn cap; the game ends when reached")
    num_players: int = Field(2, ge=1, le=4)

    go_position: int = Field(0, ge=0)
    jail_position: int = Field(6, ge=0)
    go_to_jail_position: int = Field(18, ge=0)
    tax_position: Optional[int] = Field(12, ge=0)
    tax_amount: int = Field(100, ge=0)

    house_rent_multipliers: Tuple[int, ...] = Field((1, 5, 15, 45, 80, 125))
    monopoly_rent_multiplier: int = Field(2, ge=1)
    mortgage_fraction: float = Field(0.5, gt=0, le=1)
    unmortgage_premium: float = Field(0.1, ge=0)
    heuristic_reserve_fraction: float = Field(settings.heuristic_reserve_fraction, ge=0, le=1)
    turn_cap_reward: Literal["net_worth", "none"] = Field(
        "net_worth", description="Terminal reward at the turn cap: net-worth winner gets +1, or 0 for all"
    )

    _by_position: Dict[int, int] = PrivateAttr(default_factory=dict)
    _by_name: Dict[str, int] = PrivateAttr(default_factory=dict)
    _groups: Dict[str, Tuple[int, ...]] = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def check_invariants(self) -> "GameConfig":
        violations = self.invariant_violations()
        if violations:
            raise ValueError("; ".join(violations))
        return self

    def model_post_init(self, __context: Any) -> None:
        self._by_position = {p.position: i for i, p in enumerate(self.properties)}
        self._by_name = {p.name: i for i, p in enumerate(self.properties)}
        groups: Dict[str, List[int]] = {}
        for i, p in enumerate(self.properties):
            groups.setdefault(p.color, []).append(i)
        self._groups = {color: tuple(members) for color, members in groups.items()}

    def invariant_violations(self) -> List[str]:
        """Return a description of every violated invariant (empty when valid)."""
        problems: List[str] = []
        positions = [p.position for p in self.properties]
        if len(set(positions)) != len(positions):
            dupes = sorted({x for x in positions if positions.count(x) > 1})
            problems.append(f"property positions must be distinct (duplicates: {dupes})")
        out_of_range = [p.name for p in self.properties if not 0 <= p.position < self.board_size]
        if out_of_range:
            problems.append(f"property positions must lie in [0, {self.board_size}) (offending: {out_of_range})")
        names = [p.name for p in self.properties]
        if len(set(names)) != len(names):
            problems.append("property names must be unique")
        if any(p.price < 0 or p.rent < 0 for p in self.properties):
            problems.append("prices and rents must be >= 0")

        specials = {"go": self.go_position, "jail": self.jail_position, "go_to_jail": self.go_to_jail_position}
        if self.tax_position is not None:
            specials["tax"] = self.tax_position
        for label, square in specials.items():
            if not 0 <= square < self.board_size:
                problems.append(f"{label} square {square} outside the board")
            if square in positions:
                problems.append(f"{label} square {square} collides with a property")
        if len(set(specials.values())) != len(specials):
            problems.append("board must contain exactly one Go, one Jail and one Go-To-Jail square on distinct squares")

        if len(self.house_rent_multipliers) != 6:
            problems.append("house_rent_multipliers needs one entry per house count 0..5")
        return problems

    def check(self) -> None:
        """Raise ConfigurationError naming every violated invariant."""
        violations = self.invariant_violations()
        if violations:
            raise ConfigurationError("invalid game config: " + "; ".join(violations))

    # --- lookups used by the engine and the knowledge graph ---

    def property_at(self, position: int) -> Optional[int]:
        return self._by_position.get(position)

    def property_index(self, name: str) -> Optional[int]:
        return self._by_name.get(name)

    def color_group(self, color: str) -> Tuple[int, ...]:
        return self._groups.get(color, ())

    @property
    def colors(self) -> Tuple[str, ...]:
        return tuple(sorted(self._groups))

    @property
    def smallest_rent(self) -> int:
        rents = [p.rent for p in self.properties if p.rent > 0]
        return min(rents) if rents else 1

    @property
    def reserve(self) -> int:
        return int(self.starting_cash * self.heuristic_reserve_fraction)


class NoveltyKind(str, Enum):
    """Supported novelty families."""

    SET_PRICE = "set_price"
    SET_RENT = "set_rent"
    REWIRE_BOARD_ORDER = "rewire_board_order"
    CHANGE_DICE = "change_dice"
    CHANGE_GO_SALARY = "change_go_salary"
    CHANGE_JAIL_FINE = "change_jail_fine"


PROPERTY_NOVELTIES = {NoveltyKind.SET_PRICE, NoveltyKind.SET_RENT, NoveltyKind.REWIRE_BOARD_ORDER}


class TargetSelector(BaseModel):
    """Selects properties either by name or as a seeded fraction of the board."""

    model_config = ConfigDict(frozen=True)

    names: Optional[Tuple[str, ...]] = Field(None, description="Explicit property names")
    fraction: Optional[float] = Field(None, gt=0, le=1, description="Fraction of properties, e.g. 0.5")
    seed: int = Field(0, description="Seed for fraction-based selection")

    @model_validator(mode="after")
    def exactly_one_mode(self) -> "TargetSelector":
        if (self.names is None) == (self.fraction is None):
            raise ValueError("target selector needs exactly one of 'names' or 'fraction'")
        return self


class NoveltySpec(BaseModel):
    """A single rule or attribute change injected into a running game."""

    model_config = ConfigDict(frozen=True)

    kind: NoveltyKind
    targets: Optional[TargetSelector] = None
    new_value: Union[int, DiceSpec, None] = Field(None, description="Dollars, or a DiceSpec for change_dice")
    activation_turn: int = Field(0, ge=0, description="Turn at which the novelty takes effect")
    label: Optional[str] = Field(None, description="Human-readable name used in reports")

    @model_validator(mode="after")
    def check_payload(self) -> "NoveltySpec":
        if self.kind in PROPERTY_NOVELTIES and self.targets is None:
            raise ValueError(f"{self.kind.value} needs a target selector")
        if self.kind == NoveltyKind.CHANGE_DICE and not isinstance(self.new_value, DiceSpec):
            raise ValueError("change_dice needs a DiceSpec new_value")
        if self.kind in {NoveltyKind.SET_PRICE, NoveltyKind.SET_RENT, NoveltyKind.CHANGE_GO_SALARY,
                         NoveltyKind.CHANGE_JAIL_FINE}:
            if not isinstance(self.new_value, int) or self.new_value < 0:
                raise ValueError(f"{self.kind.value} needs a non-negative dollar new_value")
        return self

    @property
    def name(self) -> str:
        return self.label or self.kind.value


class MonitorSettings(BaseModel):
    """Distribution-monitor parameters."""

    model_config = ConfigDict(frozen=True)

    window: int = Field(settings.monitor_window, ge=1)
    min_window: int = Field(settings.monitor_min_window, ge=1)
    quantile: float = Field(settings.monitor_quantile, gt=0, lt=1)
    calibration_windows: int = Field(settings.monitor_calibration_windows, ge=100)
    seed: int = 0

    @model_validator(mode="after")
    def check_window(self) -> "MonitorSettings":
        if self.min_window > self.window:
            raise ValueError("min_window must not exceed window")
        return self


class GatSettings(BaseModel):
    """Graph-attention encoder sizes."""

    model_config = ConfigDict(frozen=True)

    heads: int = Field(settings.gat_heads, ge=1)
    hidden: int = Field(settings.gat_hidden, ge=1)
    output: int = Field(settings.gat_output, ge=1)
    hops: int = Field(settings.kg_hops, ge=0)
    max_lookahead: int = Field(32, ge=0, description="Cap on rule postcondition triples fed to the encoder")


class A2CSettings(BaseModel):
    """Actor-critic hyperparameters."""

    model_config = ConfigDict(frozen=True)

    hidden: int = Field(settings.policy_hidden, ge=1)
    learning_rate: float = Field(settings.learning_rate, gt=0)
    discount: float = Field(settings.discount, ge=0, le=1)
    entropy_weight: float = Field(settings.entropy_weight, ge=0)
    value_weight: float = Field(settings.value_weight, ge=0)


AgentKind = Literal["kg", "vanilla"]

# Training game seeds are seed * SEED_STRIDE + i; evaluation seeds start above every training seed.
SEED_STRIDE = 1_000_003
EVAL_SEED_BASE = 2_000_000_000


class ExperimentConfig(BaseModel):
    """One experiment: game, agents, budgets, evaluation protocol and hyperparameters."""

    model_config = ConfigDict(frozen=True)

    game: GameConfig
    agent_kinds: Tuple[AgentKind, ...] = Field(("kg", "vanilla"), min_length=1)
    seeds: Tuple[int, ...] = Field((0,), min_length=1)
    pretrain_updates: int = Field(3000, ge=0)
    rule_learning_games: int = Field(20, ge=0, description="Pretraining games during which rule learning runs")
    novelty: Optional[NoveltySpec] = None
    eval_games: int = Field(settings.eval_games, ge=1)
    eval_cadence: int = Field(settings.eval_cadence, ge=1)
    retrain_updates: int = Field(500, ge=0)
    detection_games: int = Field(20, ge=1, description="Frozen-policy games played while waiting for detection")
    imagination_budget: int = Field(0, ge=0, description="Imagined episodes per update (or per move online)")
    mode: Literal["offline", "online"] = "offline"
    epsilon: float = Field(settings.rule_epsilon, gt=0)
    search_budget: int = Field(settings.search_budget, ge=1)
    gat: GatSettings = Field(default_factory=GatSettings)
    a2c: A2CSettings = Field(default_factory=A2CSettings)
    monitor: MonitorSettings = Field(default_factory=MonitorSettings)
    workers: int = Field(settings.workers, ge=1)

    @model_validator(mode="after")
    def check_seed_ranges(self) -> "ExperimentConfig":
        if any(s < 0 for s in self.seeds):
            raise ValueError("seeds must be non-negative")
        largest_training = max(self.seeds) * SEED_STRIDE + self.training_games_per_seed
        if largest_training >= EVAL_SEED_BASE:
            raise ValueError("evaluation set seeds must be disjoint from training seeds")
        return self

    @property
    def training_games_per_seed(self) -> int:
        return self.pretrain_updates + self.retrain_updates * (1 + self.imagination_budget) + 10 * self.detection_games

    def training_seed(self, seed: int, index: int) -> int:
        return seed * SEED_STRIDE + index

    def evaluation_seeds(self) -> List[int]:
        return [EVAL_SEED_BASE + j for j in range(self.eval_games)]


class MetricsRecord(BaseModel):
    """One evaluation point in a run's metrics stream."""

    model_config = ConfigDict(frozen=True)

    seed: int
    agent: str
    phase: str = Field(..., description="pretrain | frozen | retrain | control | clone")
    update_index: int = Field(..., ge=0)
    win_rate: Optional[float] = Field(None, ge=0, le=1)
    mean_prediction_distance: Optional[float] = Field(None, ge=0)
    novelty_reports: int = Field(0, ge=0)


METRICS_COLUMNS = [
    "seed",
    "agent",
    "phase",
    "update_index",
    "win_rate",
    "mean_prediction_distance",
    "novelty_reports",
]


# --- loading helpers ---


def _read_json(source: Union[str, Path, Dict]) -> Dict:
    if isinstance(source, dict):
        return source
    path = Path(source)
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config file {path} is not valid JSON: {e}")


def _explain(error: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in error.errors())


def load_game_config(source: Union[str, Path, Dict]) -> GameConfig:
    """
    Load and validate a GameConfig from a JSON file or a dict.

    Raises:
        ConfigurationError: naming the violated invariant(s)
    """
    try:
        return GameConfig.model_validate(_read_json(source))
    except ValidationError as e:
        raise ConfigurationError(f"invalid game config: {_explain(e)}")


def load_novelty_spec(source: Union[str, Path, Dict]) -> NoveltySpec:
    try:
        return NoveltySpec.model_validate(_read_json(source))
    except ValidationError as e:
        raise ConfigurationError(f"invalid novelty spec: {_explain(e)}")


def load_experiment_config(source: Union[str, Path, Dict]) -> ExperimentConfig:
    """
    Load an ExperimentConfig. ``game`` and ``novelty`` may be inline objects or paths
    relative to the experiment file.
    """
    data = dict(_read_json(source))
    base = Path(source).parent if not isinstance(source, dict) else Path(".")
    game = data.get("game", settings.default_game_config)
    if isinstance(game, str):
        data["game"] = load_game_config(_resolve(base, game))
    if isinstance(data.get("novelty"), str):
        data["novelty"] = load_novelty_spec(_resolve(base, data["novelty"]))
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid experiment config: {_explain(e)}")


def _resolve(base: Path, reference: str) -> Path:
    candidate = base / reference
    return candidate if candidate.exists() else Path(reference)


# --- the default desk-scale board ---

DEFAULT_PROPERTIES = [
    ("Mediterranean", "brown", 60, 4, 1),
    ("Baltic", "brown", 80, 6, 2),
    ("Oriental", "brown", 100, 6, 3),
    ("Vermont", "brown", 100, 8, 4),
    ("Connecticut", "light_blue", 120, 8, 5),
    ("StCharles", "light_blue", 140, 10, 7),
    ("States", "light_blue", 140, 10, 8),
    ("Virginia", "light_blue", 160, 12, 9),
    ("StJames", "pink", 180, 14, 10),
    ("Tennessee", "pink", 180, 14, 11),
    ("NewYork", "pink", 200, 16, 13),
    ("Kentucky", "pink", 220, 18, 14),
    ("Indiana", "orange", 220, 18, 15),
    ("Illinois", "orange", 240, 20, 16),
    ("Atlantic", "orange", 260, 22, 17),
    ("Ventnor", "orange", 260, 22, 19),
    ("MarvinGardens", "red", 280, 24, 20),
    ("Pacific", "red", 300, 26, 21),
    ("NorthCarolina", "red", 300, 26, 22),
    ("Boardwalk", "red", 400, 50, 23),
]


def default_game_config(**overrides: Any) -> GameConfig:
    """The 24-square, 20-property, 2-player board used throughout the experiments."""
    data: Dict[str, Any] = {
        "properties": [
            {"name": n, "color": c, "price": p, "rent": r, "position": pos}
            for n, c, p, r, pos in DEFAULT_PROPERTIES
        ],
    }
    data.update(overrides)
    return load_game_config(data)
