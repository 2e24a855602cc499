"""Scenario configuration, dispatch and the command line."""

from .config import Scenario, load_config, parse_config
from .runner import RunManifest, run_scenario, sweep

__all__ = ["Scenario", "RunManifest", "load_config", "parse_config", "run_scenario", "sweep"]
