"""
Services Package

This package contains the testbed's services.

Services:
- game_engine: Configurable Monopoly-style rules, novelty injection, observations
- knowledge_graph: Triple store, extraction, diffs and k-hop subgraphs
- distance_metric: Heterogeneous per-attribute prediction distance
- rule_graph: Symbolic forward model and rule search
- novelty_detector: Static, rule and distribution detection channels
- graph_attention: Graph attention encoder over knowledge-graph subgraphs
- agents: KG and vanilla actor-critic agents
- simulation: Episode runner on the engine or in imagination
- replay_log / checkpoint: Replay files, event streams, policy checkpoints
- harness: Experiment pathways and result files
"""

from .game_engine import GameState, Transition, heuristic_policy, inject_novelty, new_game, play_game, step
from .knowledge_graph import KnowledgeGraph, Triple, extract_triples, static_triples
from .distance_metric import StateSchema, prediction_distance
from .rule_graph import RuleGraph, RuleLearner, predict, simulate_step, update
from .novelty_detector import DistributionMonitor, NoveltyDetector, NoveltyReport
from .agents import Agent, PolicyNetwork
from .simulation import EngineEnvironment, ImaginedEnvironment, evaluate, imagination_retrain
from .harness import ExperimentHarness, clone_eval, detect_suite, emit_metrics

__all__ = [
    "GameState",
    "Transition",
    "heuristic_policy",
    "inject_novelty",
    "new_game",
    "play_game",
    "step",
    "KnowledgeGraph",
    "Triple",
    "extract_triples",
    "static_triples",
    "StateSchema",
    "prediction_distance",
    "RuleGraph",
    "RuleLearner",
    "predict",
    "simulate_step",
    "update",
    "DistributionMonitor",
    "NoveltyDetector",
    "NoveltyReport",
    "Agent",
    "PolicyNetwork",
    "EngineEnvironment",
    "ImaginedEnvironment",
    "evaluate",
    "imagination_retrain",
    "ExperimentHarness",
    "clone_eval",
    "detect_suite",
    "emit_metrics",
]
