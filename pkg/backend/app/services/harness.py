"""
Experiment Harness

Wires the three pathways of a run together and writes every output file:

1. Pretraining on the real engine against the heuristic opponent while the rule
   learner watches the KG agent's games.
2. Frozen play in the (secretly) modified game with the novelty detector checking
   every step.
3. After detection: static and rule updates, then retraining on the real engine
   and, for the KG agent, on imagined episodes from the learned rule graph.

Also hosts the clone evaluation, the detection suite and replay recording.

Game seed layout per run seed s (index i -> s * 1_000_003 + i):
    [0, P)                  pretraining games
    [P, P + D)              frozen detection games
    [P + D, P + D + R)      retraining games (shared by both agents)
    [P + D + R, ...)        imagined episodes
Evaluation games use a disjoint range starting at 2_000_000_000.
"""

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..models.schemas import (
    EVAL_SEED_BASE,
    METRICS_COLUMNS,
    ExperimentConfig,
    GameConfig,
    MetricsRecord,
    NoveltySpec,
)
from ..utils.exceptions import InvariantViolation
from ..utils.logger import logger
from .agents import Agent
from .checkpoint import load_checkpoint, parameter_hash, save_checkpoint
from .distance_metric import StateSchema, adjacent_change, prediction_distance
from .game_engine import GameState, Transition, heuristic_policy, inject_novelty, observe, play_game
from .knowledge_graph import Triple, believed_config, exposed_entities, parse_triples, serialize_triples, static_triples
from .novelty_detector import Channel, DistributionMonitor, NoveltyDetector
from .replay_log import EventLog, read_replay, write_replay
from .rule_graph import RuleGraph, RuleLearner
from .simulation import EngineEnvironment, evaluate, imagination_retrain, run_episode, train_episode

ItemT = TypeVar("ItemT")
ResultT = TypeVar("ResultT")

VALIDATION_STEPS = 200
SUITE_SEED_BASE = EVAL_SEED_BASE + 1_000_000
CLEAN_SEED_BASE = EVAL_SEED_BASE + 2_000_000
TIMING_COLUMNS = ["seed", "phase", "seconds"]


def ordered_map(fn: Callable[[ItemT], ResultT], items: Sequence[ItemT], workers: int = 1,
                desc: str = "", progress: bool = False) -> List[ResultT]:
    """Map in input order, optionally on a thread pool."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(tqdm(pool.map(fn, items), total=len(items), desc=desc, disable=not progress, leave=False))
    return [fn(item) for item in tqdm(items, desc=desc, disable=not progress, leave=False)]


def emit_metrics(records: Iterable[MetricsRecord], path: Union[str, Path]) -> Path:
    """
    Write metrics as CSV (header = METRICS_COLUMNS, one row per record).

    Raises:
        InvariantViolation: if a (seed, agent, phase) stream is not strictly ordered by update index
        OSError: when the destination is not writable
    """
    records = list(records)
    last: Dict[Tuple[int, str, str], int] = {}
    for r in records:
        key = (r.seed, r.agent, r.phase)
        if key in last and r.update_index <= last[key]:
            raise InvariantViolation(f"metrics for {key} are not ordered by update index")
        last[key] = r.update_index
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([r.model_dump() for r in records], columns=METRICS_COLUMNS)
    frame.to_csv(path, index=False)
    return path


def validation_transitions(config: GameConfig, novelty: Optional[NoveltySpec] = None,
                           seed: int = EVAL_SEED_BASE - 1) -> List[Transition]:
    """Held-out heuristic self-play transitions for prediction-distance metrics."""
    _, transitions = play_game(config, seed, [heuristic_policy] * config.num_players,
                               max_steps=VALIDATION_STEPS, novelty=novelty)
    return transitions


@dataclass
class RunArtifacts:
    """What pretraining leaves behind for one seed."""

    seed: int
    agents: Dict[str, Agent]
    learner: RuleLearner
    static: FrozenSet[Triple]
    records: List[MetricsRecord] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def host(self) -> Agent:
        return self.agents.get("kg") or next(iter(self.agents.values()))


@dataclass
class TrialResult:
    seed: int
    records: List[MetricsRecord]
    events: EventLog
    detected: bool
    channel: Optional[str] = None
    steps_to_detect: Optional[int] = None
    timings: Dict[str, float] = field(default_factory=dict)


class ExperimentHarness:
    """
    Runs experiments for one ExperimentConfig and writes results under ``output_dir``.

    Args:
        experiment: Validated experiment configuration
        output_dir: Run directory (created on demand)
        progress: Show tqdm progress bars
    """

    def __init__(self, experiment: ExperimentConfig, output_dir: Union[str, Path], progress: bool = True):
        self.experiment = experiment
        self.config = experiment.game
        self.output_dir = Path(output_dir)
        self.progress = progress
        self.eval_seeds = experiment.evaluation_seeds()

    # --- helpers ---

    def _seed_dir(self, seed: int) -> Path:
        return self.output_dir / f"seed_{seed}"

    def _record(self, seed: int, agent: Agent, phase: str, update_index: int, config: GameConfig,
                learner: Optional[RuleLearner], validation: Sequence[Transition],
                reports: int = 0) -> MetricsRecord:
        win_rate = evaluate(agent, config, self.eval_seeds, workers=self.experiment.workers)
        distance = learner.mean_distance(validation) if (learner is not None and agent.kind == "kg") else None
        logger.info(f"seed {seed} {agent.kind} {phase} @{update_index}: win rate {win_rate:.3f}")
        return MetricsRecord(seed=seed, agent=agent.kind, phase=phase, update_index=update_index,
                             win_rate=win_rate, mean_prediction_distance=distance, novelty_reports=reports)

    def _progress(self, iterable, desc: str):
        return tqdm(iterable, desc=desc, disable=not self.progress, leave=False)

    # --- pretraining ---

    def pretrain(self, seed: int) -> RunArtifacts:
        """
        Train every configured agent against the heuristic; the rule learner runs on
        every step of the KG agent's first ``rule_learning_games`` games.
        """
        experiment, config = self.experiment, self.config
        started = time.perf_counter()
        learner = RuleLearner(config, experiment.epsilon, experiment.search_budget)
        agents = {kind: Agent(config, kind, seed, experiment.a2c, experiment.gat) for kind in experiment.agent_kinds}
        artifacts = RunArtifacts(seed, agents, learner, static_triples(config))
        environment = EngineEnvironment(config)
        validation = validation_transitions(config)
        host = artifacts.host

        for kind, agent in agents.items():
            agent.set_knowledge(static=artifacts.static, rules=learner.rules)
            artifacts.records.append(self._record(seed, agent, "pretrain", 0, config, learner, validation))
            for u in self._progress(range(experiment.pretrain_updates), f"pretrain {kind} seed {seed}"):
                learning = agent is host and u < experiment.rule_learning_games
                train_episode(environment, agent, u % config.num_players, experiment.training_seed(seed, u),
                              on_step=learner.observe if learning else None)
                if learning and agent.kind == "kg":
                    agent.set_knowledge(rules=learner.rules)
                if (u + 1) % experiment.eval_cadence == 0:
                    artifacts.records.append(
                        self._record(seed, agent, "pretrain", u + 1, config, learner, validation))
        logger.info(
            f"Pretraining seed {seed} done: {len(learner.rules)} rules, "
            f"{learner.updates} rule updates, converged={learner.converged}"
        )
        artifacts.timings["pretrain"] = time.perf_counter() - started
        return artifacts

    def save_artifacts(self, artifacts: RunArtifacts) -> Path:
        directory = self._seed_dir(artifacts.seed)
        directory.mkdir(parents=True, exist_ok=True)
        for kind, agent in artifacts.agents.items():
            save_checkpoint(directory / f"{kind}.ckpt", agent.parameters(),
                            {"kind": kind, "seed": artifacts.seed, "updates": agent.updates})
        (directory / "rules.jsonl").write_text(artifacts.learner.rules.to_jsonl(), encoding="utf-8")
        (directory / "static.tsv").write_text(serialize_triples(artifacts.static), encoding="utf-8")
        monitors = {
            "dice": DistributionMonitor.for_dice(self.config.dice, self.experiment.monitor).to_dict(),
            "rules_converged": artifacts.learner.converged,
            "rule_updates": artifacts.learner.updates,
        }
        (directory / "monitors.json").write_text(json.dumps(monitors, indent=2, sort_keys=True), encoding="utf-8")
        return directory

    def load_artifacts(self, seed: int, directory: Optional[Path] = None) -> RunArtifacts:
        """
        Raises:
            IngestionError: on a missing or corrupt checkpoint
        """
        directory = directory or self._seed_dir(seed)
        experiment, config = self.experiment, self.config
        agents: Dict[str, Agent] = {}
        for kind in experiment.agent_kinds:
            agent = Agent(config, kind, seed, experiment.a2c, experiment.gat)
            parameters, metadata = load_checkpoint(directory / f"{kind}.ckpt")
            agent.load_parameters(parameters)
            agent.updates = int(metadata.get("updates", 0))
            agents[kind] = agent
        rules = RuleGraph.from_jsonl((directory / "rules.jsonl").read_text(encoding="utf-8"))
        static = parse_triples((directory / "static.tsv").read_text(encoding="utf-8"))
        monitors = json.loads((directory / "monitors.json").read_text(encoding="utf-8"))
        learner = RuleLearner(config, experiment.epsilon, experiment.search_budget, rules=rules, static=static)
        if monitors.get("rules_converged"):
            learner.mark_converged()
        for agent in agents.values():
            agent.set_knowledge(static=static, rules=rules)
        return RunArtifacts(seed, agents, learner, static)

    # --- novelty trial ---

    def run_novelty_trial(self, artifacts: RunArtifacts, novelty: Optional[NoveltySpec]) -> TrialResult:
        """
        Frozen play until detection, then rule/static updates and retraining. Both
        agents share evaluation seeds, retraining game seeds and cadence. Without a
        detection the policies stay frozen and are evaluated as a control.
        """
        experiment, config, seed = self.experiment, self.config, artifacts.seed
        P, D, R = experiment.pretrain_updates, experiment.detection_games, experiment.retrain_updates
        learner, host = artifacts.learner, artifacts.host
        novel_config = inject_novelty(config, novelty) if novelty is not None else config
        validation = validation_transitions(novel_config)
        events = EventLog()
        timings: Dict[str, float] = {}
        records: List[MetricsRecord] = []

        for agent in artifacts.agents.values():
            agent.frozen = True
        hashes = {kind: parameter_hash(a.parameters()) for kind, a in artifacts.agents.items()}
        events.append("frozen", seed=seed, novelty=novelty.name if novelty else None,
                      parameter_hashes=hashes)

        started = time.perf_counter()
        for agent in artifacts.agents.values():
            records.append(self._record(seed, agent, "frozen", 0, novel_config, learner, validation))

        detector = NoveltyDetector(
            artifacts.static, config, experiment.epsilon, experiment.monitor,
            rules=learner.rules, rules_converged=learner.converged,
        )
        step_count = 0
        injected_at: Optional[int] = None

        def watch(transition: Transition) -> None:
            nonlocal step_count, injected_at
            if injected_at is None and transition.state.config != config:
                injected_at = step_count
            if not detector.detected:
                detector.observe(transition)
            step_count += 1

        for g in range(D):
            environment = EngineEnvironment(config, novelty) if g == 0 else EngineEnvironment(novel_config)
            run_episode(environment, host, g % config.num_players, experiment.training_seed(seed, P + g),
                        greedy=True, on_step=watch)
            if detector.detected:
                break
        timings["frozen"] = time.perf_counter() - started

        for kind, agent in artifacts.agents.items():
            if parameter_hash(agent.parameters()) != hashes[kind]:
                raise InvariantViolation(f"{kind} policy changed while frozen")

        report = detector.first_report
        if report is None:
            logger.info(f"seed {seed}: no novelty detected in {D} games; policies stay frozen")
            events.append("no_detection", seed=seed, steps=step_count)
            for u in range(experiment.eval_cadence, R + 1, experiment.eval_cadence):
                for agent in artifacts.agents.values():
                    records.append(self._record(seed, agent, "control", u, novel_config, learner, validation))
            return TrialResult(seed, records, events, False, timings=timings)

        steps_to_detect = report.step_index - (injected_at or 0) + 1
        events.append("novelty_report", seed=seed, steps_to_detect=steps_to_detect, **{k: v for k, v in report.to_dict().items() if k != "kind"})
        logger.info(f"seed {seed}: {report.channel.value} detection after {steps_to_detect} steps")

        learner.set_static(detector.expected_static)
        if report.channel == Channel.DISTRIBUTION or detector.dice != config.dice:
            learner.set_dice(detector.dice)
        learner.reset_convergence()
        believed = believed_config(config, detector.expected_static)
        if detector.dice != believed.dice:
            believed = believed.model_copy(update={"dice": detector.dice})
        for agent in artifacts.agents.values():
            agent.frozen = False
            agent.set_knowledge(static=detector.expected_static, rules=learner.rules)
        events.append("unfrozen", seed=seed, believed_dice=believed.dice.model_dump())

        started = time.perf_counter()
        environment = EngineEnvironment(novel_config)
        budget = experiment.imagination_budget
        reports = len(detector.reports)
        for u in self._progress(range(1, R + 1), f"retrain seed {seed}"):
            game_seed = experiment.training_seed(seed, P + D + u - 1)
            first_index = P + D + R + (u - 1) * budget
            for kind, agent in artifacts.agents.items():
                focus: List[GameState] = []

                def learn(transition: Transition) -> None:
                    if transition.dice_total is not None:
                        detector.track_dice(transition.dice_total)
                    if learner.observe(transition) >= learner.epsilon:
                        focus.append(transition.state)

                imagine = agent.kind == "kg" and budget > 0
                between = None
                if imagine and experiment.mode == "online":
                    def between(state: GameState) -> None:
                        imagination_retrain(agent, learner.rules, learner.static, believed, budget, seed,
                                            [state], learner.dice, first_index)

                train_episode(environment, agent, u % config.num_players, game_seed,
                              on_step=learn if agent is host else None, between_moves=between)
                if agent.kind == "kg":
                    agent.set_knowledge(static=learner.static, rules=learner.rules)
                if imagine and experiment.mode == "offline":
                    imagination_retrain(agent, learner.rules, learner.static, believed, budget, seed,
                                        focus[-50:], learner.dice, first_index)
            if detector.dice != learner.dice:
                learner.set_dice(detector.dice)
                believed = believed.model_copy(update={"dice": detector.dice})
                events.append("dice_refined", seed=seed, update=u, believed_dice=detector.dice.model_dump())
            if u % experiment.eval_cadence == 0:
                for agent in artifacts.agents.values():
                    records.append(self._record(seed, agent, "retrain", u, novel_config, learner, validation, reports))
        timings["retrain"] = time.perf_counter() - started
        events.append("retrained", seed=seed, updates=R, rules=len(learner.rules))
        return TrialResult(seed, records, events, True, report.channel.value, steps_to_detect, timings)

    # --- whole runs ---

    def run_pretrain(self, seeds: Sequence[int]) -> List[RunArtifacts]:
        runs = []
        for seed in seeds:
            artifacts = self.pretrain(seed)
            self.save_artifacts(artifacts)
            runs.append(artifacts)
        emit_metrics([r for a in runs for r in a.records], self.output_dir / "metrics.csv")
        self.write_timings({a.seed: a.timings for a in runs})
        return runs

    def run_trials(self, seeds: Sequence[int], novelty: Optional[NoveltySpec],
                   artifacts_dir: Optional[Path] = None) -> List[TrialResult]:
        results: List[TrialResult] = []
        all_records: List[MetricsRecord] = []
        events = EventLog()
        for seed in seeds:
            source = (artifacts_dir / f"seed_{seed}") if artifacts_dir else None
            if source is not None and source.exists():
                artifacts = self.load_artifacts(seed, source)
            else:
                artifacts = self.pretrain(seed)
                self.save_artifacts(artifacts)
                all_records.extend(artifacts.records)
            result = self.run_novelty_trial(artifacts, novelty)
            result.timings.update(artifacts.timings)
            results.append(result)
            all_records.extend(result.records)
            events.extend(result.events.records)
        emit_metrics(all_records, self.output_dir / "metrics.csv")
        events.write(self.output_dir / "events.jsonl")
        self.write_timings({r.seed: r.timings for r in results})
        self.write_summary(self.trial_summary(results, novelty))
        return results

    def trial_summary(self, results: Sequence[TrialResult], novelty: Optional[NoveltySpec]) -> Dict:
        """Mean and standard deviation across seeds of each agent's evaluated win rate per update."""
        frame = pd.DataFrame([r.model_dump() for res in results for r in res.records], columns=METRICS_COLUMNS)
        bands = []
        if not frame.empty:
            grouped = frame.groupby(["agent", "phase", "update_index"], sort=True)["win_rate"]
            stats = grouped.agg(["mean", "std", "count"]).reset_index()
            stats["std"] = stats["std"].fillna(0.0)
            bands = stats.to_dict(orient="records")
        detected = [r for r in results if r.detected]
        return {
            "novelty": novelty.name if novelty else None,
            "seeds": [r.seed for r in results],
            "detected": len(detected),
            "miss_rate": 1 - len(detected) / len(results) if results else None,
            "mean_steps_to_detect": float(np.mean([r.steps_to_detect for r in detected])) if detected else None,
            "channels": sorted({r.channel for r in detected}),
            "win_rate_bands": bands,
        }

    def write_summary(self, summary: Dict, name: str = "summary.json") -> Path:
        path = self.output_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=float), encoding="utf-8")
        return path

    def write_timings(self, timings: Dict[int, Dict[str, float]]) -> Path:
        rows = [{"seed": s, "phase": p, "seconds": t} for s, phases in timings.items() for p, t in phases.items()]
        path = self.output_dir / "timings.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(rows, columns=TIMING_COLUMNS).to_csv(path, index=False)
        return path

    # --- evaluation ---

    def evaluate_checkpoints(self, seeds: Sequence[int], checkpoint_dir: Path,
                             novelty: Optional[NoveltySpec] = None) -> List[MetricsRecord]:
        config = inject_novelty(self.config, novelty) if novelty is not None else self.config
        validation = validation_transitions(config)
        records = []
        for seed in seeds:
            artifacts = self.load_artifacts(seed, checkpoint_dir / f"seed_{seed}")
            for agent in artifacts.agents.values():
                records.append(self._record(seed, agent, "frozen", agent.updates, config,
                                            artifacts.learner, validation))
        emit_metrics(records, self.output_dir / "metrics.csv")
        return records


# --- game cloning ---


def random_baseline(schema: StateSchema, validation: Sequence[Transition], seed: int = 0) -> float:
    """Mean distance of the random 1-step change prediction over the validation set."""
    if not validation:
        return 0.0
    rng = np.random.default_rng(seed)
    distances = [
        prediction_distance(schema, adjacent_change(schema, schema.flatten(t.state), rng), schema.flatten(t.next_state))
        for t in validation
    ]
    return float(np.mean(distances))


def clone_eval(
    training: Sequence[Transition],
    validation: Sequence[Transition],
    config: GameConfig,
    epsilon: float,
    search_budget: int,
    seed: int = 0,
    window: int = 20,
    progress: bool = True,
) -> pd.DataFrame:
    """
    Cloning curve: after each training sample (row 0 is before any), the mean
    prediction distance over the shuffled validation set, its moving average and
    the random 1-step baseline.
    """
    schema = StateSchema.from_config(config)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(validation)) if len(validation) else []
    shuffled = [validation[int(i)] for i in order]
    learner = RuleLearner(config, epsilon, search_budget)
    baseline = random_baseline(schema, shuffled, seed)

    rows = [{"sample_index": 0, "mean_distance": learner.mean_distance(shuffled) or 0.0}]
    for index, transition in enumerate(tqdm(training, desc="clone", disable=not progress, leave=False), start=1):
        learner.observe(transition)
        rows.append({"sample_index": index, "mean_distance": learner.mean_distance(shuffled) or 0.0})
    frame = pd.DataFrame(rows, columns=["sample_index", "mean_distance"])
    frame["moving_average"] = frame["mean_distance"].rolling(window, min_periods=1).mean()
    frame["random_baseline"] = baseline
    logger.info(
        f"Clone evaluation: {len(training)} samples, final distance {frame['mean_distance'].iloc[-1]:.3f}, "
        f"baseline {baseline:.3f}, {len(learner.rules)} rules"
    )
    return frame


def run_clone_eval(train_path: Path, validation_path: Optional[Path], output_dir: Path, epsilon: float,
                   search_budget: int, seed: int = 0, progress: bool = True) -> pd.DataFrame:
    """
    Raises:
        IngestionError: unreadable replays or mismatched schemas
    """
    config, training = read_replay(train_path)
    schema = StateSchema.from_config(config)
    validation = read_replay(validation_path, schema)[1] if validation_path else list(training)
    frame = clone_eval(training, validation, config, epsilon, search_budget, seed, progress=progress)
    output_dir.mkdir(parents=True, exist_ok=True)
    frame.to_csv(output_dir / "clone_curve.csv", index=False)
    return frame


# --- detection suite ---


def affected_entities(config: GameConfig, novelty: NoveltySpec) -> FrozenSet[str]:
    before, after = static_triples(config), static_triples(inject_novelty(config, novelty))
    return frozenset(t.subject for t in before ^ after)


def detection_trial(
    config: GameConfig,
    novelty: NoveltySpec,
    seeds: Sequence[int],
    experiment: ExperimentConfig,
    rules: Optional[RuleGraph] = None,
    rules_converged: bool = False,
) -> Dict:
    """
    Heuristic self-play on ``seeds`` (the first game switches rules at the activation
    turn, later games start modified) until the detector reports.
    """
    novel_config = inject_novelty(config, novelty)
    affected = affected_entities(config, novelty)
    detector = NoveltyDetector(static_triples(config), config, experiment.epsilon, experiment.monitor,
                               rules=rules, rules_converged=rules_converged)
    steps = 0
    injected_at: Optional[int] = None
    first_exposure: Optional[int] = None
    dice_samples = 0

    for g, seed in enumerate(seeds):
        game_config, game_novelty = (config, novelty) if g == 0 else (novel_config, None)
        _, transitions = play_game(game_config, seed, [heuristic_policy] * config.num_players, novelty=game_novelty)
        for t in transitions:
            post = t.state.config != config
            if post and injected_at is None:
                injected_at = steps
            observation = observe(t.next_state, t.events, previous=t.state)
            if post and first_exposure is None and exposed_entities(observation) & affected:
                first_exposure = steps
            if post and t.dice_total is not None:
                dice_samples += 1
            detector.observe(t, observation)
            steps += 1
            if detector.detected:
                break
        if detector.detected:
            break

    report = detector.first_report
    row = {
        "novelty": novelty.name,
        "kind": novelty.kind.value,
        "detected": report is not None,
        "channel": report.channel.value if report else None,
        "injection_step": injected_at,
        "first_exposure_step": first_exposure,
        "detection_step": report.step_index if report else None,
        "steps_to_detect": (report.step_index - injected_at + 1) if (report and injected_at is not None) else None,
        "windows_to_detect": math.ceil(dice_samples / experiment.monitor.window) if report else None,
    }
    row["single_step"] = bool(report is not None and first_exposure is not None
                              and report.step_index == first_exposure)
    return row


def clean_suite(config: GameConfig, seeds: Sequence[int], experiment: ExperimentConfig,
                rules: Optional[RuleGraph] = None, rules_converged: bool = False,
                workers: int = 1, progress: bool = True) -> Dict:
    """
    Unmodified games: the static and rule channels must never report; the dice
    monitor's alarm rate is measured separately.
    """
    def one(seed: int) -> Tuple[int, List[int]]:
        detector = NoveltyDetector(static_triples(config), config, experiment.epsilon, experiment.monitor,
                                   rules=rules, rules_converged=rules_converged,
                                   channels=(Channel.STATIC_GRAPH, Channel.RULE_PREDICTION))
        _, transitions = play_game(config, seed, [heuristic_policy] * config.num_players)
        for t in transitions:
            detector.observe(t)
        return len(detector.reports), [t.dice_total for t in transitions if t.dice_total is not None]

    outcomes = ordered_map(one, list(seeds), workers, "clean", progress)
    monitor = DistributionMonitor.for_dice(config.dice, experiment.monitor)
    for _, totals in outcomes:
        for total in totals:
            monitor.check(total)
    return {
        "games": len(seeds),
        "reports": sum(n for n, _ in outcomes),
        "dice_windows": monitor.windows_tested,
        "dice_alarms": monitor.alarms,
        "dice_alarm_rate": monitor.alarms / monitor.windows_tested if monitor.windows_tested else 0.0,
    }


def detect_suite(
    experiment: ExperimentConfig,
    novelties: Sequence[NoveltySpec],
    output_dir: Path,
    trials: int = 100,
    games_per_trial: int = 5,
    clean_games: int = 1000,
    rules: Optional[RuleGraph] = None,
    rules_converged: bool = False,
    progress: bool = True,
) -> Dict:
    """
    Run every novelty for ``trials`` seeded trials plus the clean suite, write
    suite.csv and summary.json, and enforce the detection guarantees.

    Raises:
        InvariantViolation: a clean report, or a static novelty not reported at its first exposure
    """
    config = experiment.game
    rows = []
    for n_index, novelty in enumerate(novelties):
        def trial(t: int) -> Dict:
            base = SUITE_SEED_BASE + (n_index * trials + t) * games_per_trial
            row = detection_trial(config, novelty, range(base, base + games_per_trial), experiment,
                                  rules, rules_converged)
            row["trial"] = t
            return row

        rows.extend(ordered_map(trial, list(range(trials)), experiment.workers, novelty.name, progress))
    frame = pd.DataFrame(rows)
    clean = clean_suite(config, range(CLEAN_SEED_BASE, CLEAN_SEED_BASE + clean_games), experiment,
                        rules, rules_converged, experiment.workers, progress)

    per_novelty = []
    if not frame.empty:
        for name, group in frame.groupby("novelty", sort=False):
            detected = group[group["detected"]]
            per_novelty.append({
                "novelty": name,
                "kind": group["kind"].iloc[0],
                "trials": len(group),
                "detected": int(len(detected)),
                "detection_rate": float(len(detected) / len(group)),
                "channels": sorted(detected["channel"].dropna().unique().tolist()),
                "steps_to_detect_mean": float(detected["steps_to_detect"].mean()) if len(detected) else None,
                "steps_to_detect_std": float(detected["steps_to_detect"].std(ddof=0)) if len(detected) else None,
                "single_step_rate": float(group["single_step"].mean()),
                "within_3_windows_rate": float((group["windows_to_detect"].fillna(math.inf) <= 3).mean()),
            })

    output_dir.mkdir(parents=True, exist_ok=True)
    frame.to_csv(output_dir / "suite.csv", index=False)
    summary = {"novelties": per_novelty, "clean": clean}
    (output_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")

    if clean["reports"]:
        raise InvariantViolation(f"{clean['reports']} novelty reports on clean games")
    if not frame.empty:
        late = frame[(frame["channel"] == Channel.STATIC_GRAPH.value) & ~frame["single_step"]]
        if len(late):
            raise InvariantViolation(f"{len(late)} static novelties not reported at their first exposure")
    return summary


# --- replays ---


def record_replay(config: GameConfig, seed: int, turns: int, path: Path,
                  novelty: Optional[NoveltySpec] = None) -> List[Transition]:
    """Record heuristic self-play until ``turns`` turns have passed or the game ends."""
    state_transitions: List[Transition] = []
    _, transitions = play_game(config, seed, [heuristic_policy] * config.num_players, novelty=novelty)
    for t in transitions:
        if t.state.turn >= turns:
            break
        state_transitions.append(t)
    write_replay(path, config, state_transitions)
    return state_transitions

