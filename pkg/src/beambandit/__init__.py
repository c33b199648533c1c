"""Kernelized contextual-bandit user association and beam tracking simulator."""

from .config import (ConfigError, EngineConfig, KernelConfig, OutputConfig,
                     PolicyConfig, RadioConfig, RunConfig, ScenarioConfig,
                     UcbConfig, load_config)
from .engine import RunResult, compute_regret, persist, run
from .cli import PRESETS, list_presets, main, run_batch

__all__ = [
    "ConfigError", "EngineConfig", "KernelConfig", "OutputConfig",
    "PolicyConfig", "RadioConfig", "RunConfig", "ScenarioConfig", "UcbConfig",
    "load_config", "RunResult", "compute_regret", "persist", "run",
    "PRESETS", "list_presets", "main", "run_batch",
]

__version__ = "0.1.0"
