"""Scenario runner, metrics and command-line interface."""

from .config import SCENARIOS, ConfigError, ScenarioConfig, from_dict, load_config
from .metrics import MetricsReport
from .scenarios import paper_consistency, run_scenario, sweep

__all__ = [
    "SCENARIOS",
    "ConfigError",
    "MetricsReport",
    "ScenarioConfig",
    "from_dict",
    "load_config",
    "paper_consistency",
    "run_scenario",
    "sweep",
]
