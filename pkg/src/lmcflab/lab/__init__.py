"""Scenario runner, verification suites, configuration and plots."""

from .config import RunConfig, default_config, load_config, parse_config
from .runner import run_config
from .scenarios import Scenario, get_scenario, list_scenarios
from .suites import SuiteReport, run_suite, suite_names

__all__ = ["RunConfig", "default_config", "load_config", "parse_config", "run_config",
           "Scenario", "get_scenario", "list_scenarios", "SuiteReport", "run_suite",
           "suite_names"]
