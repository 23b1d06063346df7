"""
Novelty Detection Service

Runs after every observed step and reports when the game no longer behaves like
the one the agent learned. Three channels, checked in priority order:

1. Static graph: the static triples an observation exposes are diffed against the
   learned static set. Exact, so it fires on the first exposing observation.
2. Rule prediction: the converged rule graph mispredicts a transition by at least
   epsilon.
3. Distribution: a chi-square goodness-of-fit test on tumbling windows of dice
   totals, with a Monte-Carlo calibrated threshold. Impossible totals alarm at once.
   Each alarm refits the believed dice on every total seen since the first alarm.

Detection is monotone: once a run has a report, ``detected`` stays true.
"""

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, stats

from ..config import settings
from ..models.schemas import DiceSpec, GameConfig, MonitorSettings
from ..utils.logger import logger
from .distance_metric import StateSchema
from .game_engine import Observation, Transition, observe
from .knowledge_graph import (
    GraphDiff,
    KnowledgeGraph,
    Triple,
    believed_config,
    diff,
    exposed_entities,
    exposed_static_triples,
)
from .rule_graph import RuleGraph, sample_distance


class Channel(str, Enum):
    STATIC_GRAPH = "static_graph"
    RULE_PREDICTION = "rule_prediction"
    DISTRIBUTION = "distribution"


CHANNEL_PRIORITY = (Channel.STATIC_GRAPH, Channel.RULE_PREDICTION, Channel.DISTRIBUTION)


@dataclass(frozen=True)
class DistributionAlarm:
    statistic: float
    threshold: float
    window: int
    out_of_support: Optional[int] = None
    counts: Tuple[Tuple[int, int], ...] = ()

    def to_dict(self) -> Dict:
        return {
            "statistic": None if math.isinf(self.statistic) else self.statistic,
            "threshold": self.threshold,
            "window": self.window,
            "out_of_support": self.out_of_support,
            "counts": {str(k): v for k, v in self.counts},
        }


@dataclass(frozen=True)
class RuleMiss:
    distance: float
    sample: Transition

    def to_dict(self) -> Dict:
        return {
            "distance": self.distance,
            "action": str(self.sample.action),
            "player": self.sample.player,
            "turn": self.sample.state.turn,
            "dice_total": self.sample.dice_total,
        }


Evidence = Union[GraphDiff, DistributionAlarm, RuleMiss]


@dataclass(frozen=True)
class NoveltyReport:
    detected: bool
    channel: Optional[Channel]
    evidence: Optional[Evidence]
    step_index: int

    def __post_init__(self):
        if self.detected and (self.evidence is None or (isinstance(self.evidence, GraphDiff) and self.evidence.is_empty)):
            raise ValueError("a positive novelty report needs evidence")

    def to_dict(self) -> Dict:
        return {
            "kind": "novelty_report",
            "detected": self.detected,
            "channel": self.channel.value if self.channel else None,
            "step_index": self.step_index,
            "evidence": self.evidence.summary() if isinstance(self.evidence, GraphDiff)
            else (self.evidence.to_dict() if self.evidence is not None else None),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# --- static channel ---


def check_structural(
    expected_static: Iterable[Triple],
    observation: Observation,
) -> Optional[GraphDiff]:
    """
    Diff the learned static set against the static triples the observation exposes.

    Only entities the observation exposes are compared, so a novelty on a property
    nobody has landed on stays invisible until someone does.
    """
    shown = exposed_static_triples(observation)
    entities = exposed_entities(observation)
    expected = {t for t in expected_static if t.subject in entities}
    delta = diff(expected, shown)
    return None if delta.is_empty else delta


# --- distribution channel ---


def chi_square_statistic(counts: np.ndarray, probabilities: np.ndarray) -> float:
    total = counts.sum()
    statistic, _ = stats.chisquare(counts, f_exp=probabilities * total)
    return float(statistic)


@lru_cache(maxsize=64)
def calibrate_threshold(
    probabilities: Tuple[float, ...],
    window: int,
    quantile: float,
    windows: int,
    seed: int = 0,
) -> float:
    """Quantile of the chi-square statistic over simulated null windows."""
    p = np.asarray(probabilities, dtype=np.float64)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(window, p / p.sum(), size=windows)
    expected = p / p.sum() * window
    statistics = ((counts - expected) ** 2 / expected).sum(axis=1)
    return float(np.quantile(statistics, quantile))


class DistributionMonitor:
    """
    Tumbling-window chi-square monitor for one discrete source (dice totals).

    Args:
        reference: value -> probability, summing to 1
        monitor: window sizes, quantile and calibration budget
        source: name of the tracked source
    """

    def __init__(self, reference: Dict[int, float], monitor: Optional[MonitorSettings] = None,
                 source: str = "dice_total"):
        self.settings = monitor or MonitorSettings()
        self.source = source
        self.reset(reference)

    @classmethod
    def for_dice(cls, dice: DiceSpec, monitor: Optional[MonitorSettings] = None) -> "DistributionMonitor":
        return cls(dice.total_distribution(), monitor)

    def reset(self, reference: Dict[int, float]) -> None:
        if abs(sum(reference.values()) - 1.0) > 1e-9:
            raise ValueError(f"reference probabilities sum to {sum(reference.values())}, not 1")
        self.support: Tuple[int, ...] = tuple(sorted(reference))
        self.probabilities = np.array([reference[v] for v in self.support], dtype=np.float64)
        self.threshold = calibrate_threshold(
            tuple(float(p) for p in self.probabilities),
            self.settings.window,
            self.settings.quantile,
            self.settings.calibration_windows,
            self.settings.seed,
        )
        self.window: List[int] = []
        self.alarm_window: List[int] = []
        self.windows_tested = 0
        self.alarms = 0

    @property
    def reference(self) -> Dict[int, float]:
        return {v: float(p) for v, p in zip(self.support, self.probabilities)}

    def check(self, sample: int) -> Optional[DistributionAlarm]:
        """Add one sample; return alarm statistics when the window (or the sample) is anomalous."""
        self.window.append(int(sample))
        if sample not in self.support:
            self.alarms += 1
            return self._alarm(math.inf, out_of_support=int(sample))
        if len(self.window) < max(self.settings.window, self.settings.min_window):
            return None
        counts = np.array([self.window.count(v) for v in self.support], dtype=np.float64)
        statistic = chi_square_statistic(counts, self.probabilities)
        self.windows_tested += 1
        if statistic > self.threshold:
            self.alarms += 1
            return self._alarm(statistic)
        self.window = []
        return None

    def _alarm(self, statistic: float, out_of_support: Optional[int] = None) -> DistributionAlarm:
        alarm = DistributionAlarm(
            statistic=statistic,
            threshold=self.threshold,
            window=len(self.window),
            out_of_support=out_of_support,
            counts=tuple(sorted(Counter(self.window).items())),
        )
        self.alarm_window, self.window = self.window, []
        return alarm

    def to_dict(self) -> Dict:
        return {
            "source": self.source,
            "reference": {str(k): v for k, v in self.reference.items()},
            "threshold": self.threshold,
            "window": self.settings.window,
            "min_window": self.settings.min_window,
            "quantile": self.settings.quantile,
            "windows_tested": self.windows_tested,
            "alarms": self.alarms,
        }


def check_distribution(monitor: DistributionMonitor, new_sample: int) -> Optional[DistributionAlarm]:
    return monitor.check(new_sample)


# --- dice estimation ---

MAX_DICE_COUNT = 6
MAX_DICE_SIDES = 20
FACE_FLOOR = 1e-6
WEIGHTED_CANDIDATES = 3


def _total_probabilities(faces: np.ndarray, count: int) -> np.ndarray:
    dist = np.array([1.0])
    for _ in range(count):
        dist = np.convolve(dist, faces)
    return dist


def dice_log_likelihood(totals: Counter, dice: DiceSpec) -> float:
    """Log-likelihood of observed total counts under ``dice``; -inf if any total is impossible."""
    distribution = dice.total_distribution()
    if any(total not in distribution for total in totals):
        return -math.inf
    return float(sum(n * math.log(distribution[total]) for total, n in totals.items()))


def fit_face_weights(totals: Counter, count: int, sides: int) -> DiceSpec:
    """
    Maximum-likelihood face weights for ``count`` identical dice with ``sides`` faces.

    A single die takes the empirical face frequencies. Several dice are fitted on
    softmax logits with L-BFGS-B. Weights are floored so every total stays possible.
    """
    values = np.array(sorted(totals), dtype=np.int64)
    observed = np.array([totals[v] for v in values], dtype=np.float64)
    if count == 1:
        faces = np.zeros(sides)
        faces[values - 1] = observed
        faces /= faces.sum()
    else:
        def negative_log_likelihood(logits: np.ndarray) -> float:
            faces = np.exp(logits - logits.max())
            faces /= faces.sum()
            p = _total_probabilities(faces, count)[values - count]
            return -float(observed @ np.log(np.maximum(p, 1e-300)))

        result = optimize.minimize(negative_log_likelihood, np.zeros(sides), method="L-BFGS-B")
        faces = np.exp(result.x - result.x.max())
        faces /= faces.sum()
    faces = np.maximum(faces, FACE_FLOOR)
    faces /= faces.sum()
    return DiceSpec(count=count, sides=sides, weights=tuple(float(w) for w in faces))


def fit_dice(totals: Sequence[int], prior: DiceSpec, min_samples: int) -> DiceSpec:
    """
    Estimate the dice behind a stream of totals.

    Candidates are every (count, sides) that can produce all observed totals. With
    fewer than ``min_samples`` totals the estimate is uniform, keeps the count
    closest to ``prior`` and reaches at least the prior's largest total. Otherwise
    uniform and weighted fits compete on BIC (ties prefer uniform, then fewer
    faces in total).

    Args:
        totals: observed dice totals
        prior: believed dice before the evidence (static knowledge)
        min_samples: totals needed before shape and weights are trusted
    """
    if not totals:
        return prior
    observed = Counter(int(t) for t in totals)
    low, high = min(observed), max(observed)
    feasible = [(c, s) for c in range(1, MAX_DICE_COUNT + 1) for s in range(1, MAX_DICE_SIDES + 1)
                if c <= low and high <= c * s]
    if not feasible:
        logger.warning(f"No dice up to {MAX_DICE_COUNT}d{MAX_DICE_SIDES} produce totals {low}..{high}; "
                       f"keeping {prior.count}d{prior.sides}")
        return prior

    n = len(totals)
    if n < min_samples:
        count = min({c for c, _ in feasible}, key=lambda c: (abs(c - prior.count), c))
        ceiling = max(high, prior.count * prior.sides)
        return DiceSpec(count=count, sides=min(MAX_DICE_SIDES, math.ceil(ceiling / count)))

    uniform = sorted(
        ((dice_log_likelihood(observed, DiceSpec(count=c, sides=s)), c, s) for c, s in feasible),
        key=lambda x: (-x[0], x[1] * x[2], x[1]),
    )
    scored: List[Tuple[float, int, int, DiceSpec]] = [
        (-2.0 * ll, 0, c * s, DiceSpec(count=c, sides=s)) for ll, c, s in uniform
    ]
    shapes = [(c, s) for _, c, s in uniform[:WEIGHTED_CANDIDATES]]
    if (prior.count, prior.sides) in feasible and (prior.count, prior.sides) not in shapes:
        shapes.append((prior.count, prior.sides))
    for c, s in shapes:
        if s == 1:
            continue
        weighted = fit_face_weights(observed, c, s)
        bic = -2.0 * dice_log_likelihood(observed, weighted) + (s - 1) * math.log(n)
        scored.append((bic, 1, c * s, weighted))
    best = min(scored, key=lambda x: x[:3])
    return best[3]


# --- rule channel ---


def check_rules(
    rules: RuleGraph,
    kg: KnowledgeGraph,
    sample: Transition,
    epsilon: float,
    schema: Optional[StateSchema] = None,
) -> Optional[RuleMiss]:
    """The sample and its distance when the rule graph misses it by epsilon or more."""
    schema = schema or StateSchema.from_config(sample.state.config)
    distance = sample_distance(rules, kg, sample, schema)
    if distance >= epsilon:
        return RuleMiss(distance, sample)
    return None


# --- detector ---


@dataclass
class NoveltyDetector:
    """
    Per-run detector state: the learned static set, a dice monitor and (once the
    rule graph has converged) the rule channel.
    """

    expected_static: FrozenSet[Triple]
    config: GameConfig
    epsilon: float = settings.rule_epsilon
    monitor_settings: MonitorSettings = field(default_factory=MonitorSettings)
    rules: Optional[RuleGraph] = None
    rules_converged: bool = False
    channels: Tuple[Channel, ...] = CHANNEL_PRIORITY
    reports: List[NoveltyReport] = field(default_factory=list)
    step_index: int = 0

    def __post_init__(self):
        self.expected_static = frozenset(self.expected_static)
        self.monitor = DistributionMonitor.for_dice(self.config.dice, self.monitor_settings)
        self.schema = StateSchema.from_config(self.config)
        self.dice = self.config.dice
        self.dice_evidence: List[int] = []

    @property
    def detected(self) -> bool:
        return any(r.detected for r in self.reports)

    @property
    def first_report(self) -> Optional[NoveltyReport]:
        return self.reports[0] if self.reports else None

    def set_rules(self, rules: RuleGraph, converged: bool) -> None:
        self.rules = rules
        self.rules_converged = converged

    def observe(self, transition: Transition, observation: Optional[Observation] = None) -> Optional[NoveltyReport]:
        """Run every enabled channel on one step and record the highest-priority finding."""
        report = detect(transition, self, observation)
        self.step_index += 1
        return report

    def _learn_static(self, delta: GraphDiff) -> None:
        static = set(self.expected_static)
        for subject, relation, old, new in delta.relinked:
            static.discard(Triple(subject, relation, old))
            static.add(Triple(subject, relation, new))
        static -= delta.removed
        static |= delta.added
        self.expected_static = frozenset(static)

    def track_dice(self, total: int) -> Optional[DistributionAlarm]:
        """
        Feed one dice total to the monitor. From the first alarm on, every total is
        kept as evidence and each alarm refits the believed dice on all of it.
        """
        alarm = self.monitor.check(total)
        if self.dice_evidence:
            self.dice_evidence.append(int(total))
        elif alarm is not None:
            self.dice_evidence = list(self.monitor.alarm_window)
        if alarm is not None:
            self._learn_dice()
        return alarm

    def _learn_dice(self) -> None:
        prior = believed_config(self.config, self.expected_static).dice
        self.dice = fit_dice(self.dice_evidence, prior, self.monitor_settings.min_window)
        self.monitor.reset(self.dice.total_distribution())
        if self.rules is not None:
            self.rules = self.rules.reweighted(self.dice)
        logger.info(f"Believed dice now {self.dice.count}d{self.dice.sides} "
                    f"from {len(self.dice_evidence)} observed totals")

    def to_dict(self) -> Dict:
        return {
            "dice": self.monitor.to_dict(),
            "believed_dice": self.dice.model_dump(),
            "static_triples": len(self.expected_static),
            "rules_converged": self.rules_converged,
            "reports": [r.to_dict() for r in self.reports],
        }


def detect(
    transition: Transition,
    detector: NoveltyDetector,
    observation: Optional[Observation] = None,
) -> Optional[NoveltyReport]:
    """
    Run all channels for one step; the first firing channel in priority order
    (static graph, rule prediction, distribution) produces the report.

    Every channel still ingests the step, so the dice monitor sees every roll.
    """
    observation = observation or observe(transition.next_state, transition.events, previous=transition.state)
    findings: Dict[Channel, Evidence] = {}

    if Channel.STATIC_GRAPH in detector.channels:
        delta = check_structural(detector.expected_static, observation)
        if delta is not None:
            findings[Channel.STATIC_GRAPH] = delta
            detector._learn_static(delta)

    if (Channel.RULE_PREDICTION in detector.channels and detector.rules_converged
            and detector.rules is not None):
        kg = KnowledgeGraph(static=detector.expected_static)
        miss = check_rules(detector.rules, kg, transition, detector.epsilon, detector.schema)
        if miss is not None:
            findings[Channel.RULE_PREDICTION] = miss

    if Channel.DISTRIBUTION in detector.channels and transition.dice_total is not None:
        alarm = detector.track_dice(transition.dice_total)
        if alarm is not None:
            findings[Channel.DISTRIBUTION] = alarm

    for channel in CHANNEL_PRIORITY:
        if channel in findings:
            report = NoveltyReport(True, channel, findings[channel], detector.step_index)
            detector.reports.append(report)
            logger.info(f"Novelty detected at step {detector.step_index} via {channel.value}")
            return report
    return None

