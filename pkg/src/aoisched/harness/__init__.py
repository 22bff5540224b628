"""Scenario files, presets, batch runner and the command-line interface."""

from .presets import PRESETS, preset
from .runner import ResultRow, run_scenario, solve_scenario
from .scenario import Scenario, load_scenario, scenario_from_dict
