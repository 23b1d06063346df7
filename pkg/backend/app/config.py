"""
Application Configuration

Centralized configuration for the novelty testbed.
Environment variables can be loaded from .env file using python-dotenv.

These values are process-level defaults. Experiment files (JSON, validated by the
pydantic models in models/schemas.py) override them per run.
"""

import os
from dotenv import load_dotenv

# Load environment variables from .env file if it exists
load_dotenv()


class Settings:
    """Testbed settings loaded from environment variables or defaults."""

    # Project metadata
    project_name: str = os.getenv("PROJECT_NAME", "Novelty-Aware Monopoly Testbed")
    project_version: str = os.getenv("PROJECT_VERSION", "0.1.0")

    # Logging
    log_level: str = os.getenv("LOG_LEVEL", "INFO")
    log_dir: str = os.getenv("LOG_DIR", "logs")

    # Paths
    output_dir: str = os.getenv("OUTPUT_DIR", "runs")
    default_game_config: str = os.getenv("DEFAULT_GAME_CONFIG", "configs/default_game.json")
    default_experiment_config: str = os.getenv(
        "DEFAULT_EXPERIMENT_CONFIG", "configs/experiment.json"
    )

    # Rule learning
    rule_epsilon: float = float(os.getenv("RULE_EPSILON", "4.0"))
    search_budget: int = int(os.getenv("SEARCH_BUDGET", "400"))
    kg_hops: int = int(os.getenv("KG_HOPS", "2"))

    # Graph attention encoder
    gat_heads: int = int(os.getenv("GAT_HEADS", "2"))
    gat_hidden: int = int(os.getenv("GAT_HIDDEN", "16"))
    gat_output: int = int(os.getenv("GAT_OUTPUT", "64"))

    # Actor-critic
    policy_hidden: int = int(os.getenv("POLICY_HIDDEN", "64"))
    learning_rate: float = float(os.getenv("LEARNING_RATE", "3e-4"))
    discount: float = float(os.getenv("DISCOUNT", "0.99"))
    entropy_weight: float = float(os.getenv("ENTROPY_WEIGHT", "0.01"))
    value_weight: float = float(os.getenv("VALUE_WEIGHT", "0.5"))

    # Evaluation protocol (desk scale)
    eval_games: int = int(os.getenv("EVAL_GAMES", "100"))
    eval_cadence: int = int(os.getenv("EVAL_CADENCE", "50"))
    workers: int = int(os.getenv("WORKERS", "1"))

    # Distribution monitoring
    monitor_window: int = int(os.getenv("MONITOR_WINDOW", "50"))
    monitor_min_window: int = int(os.getenv("MONITOR_MIN_WINDOW", "30"))
    monitor_quantile: float = float(os.getenv("MONITOR_QUANTILE", "0.999"))
    monitor_calibration_windows: int = int(os.getenv("MONITOR_CALIBRATION_WINDOWS", "50000"))

    # Heuristic opponent
    heuristic_reserve_fraction: float = float(os.getenv("HEURISTIC_RESERVE_FRACTION", "0.25"))


# Global settings instance
settings = Settings()
