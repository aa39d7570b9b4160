"""Deterministic single-process scenario engine: simulated clock, in-memory
topic routing, impaired per-vehicle links, and metrics/report output."""

from .scenario import Scenario, ScenarioError, load_scenario
from .runner import RunMetrics, run_scenario

__all__ = ["Scenario", "ScenarioError", "load_scenario", "RunMetrics", "run_scenario"]
