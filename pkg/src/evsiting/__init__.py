"""Competitive multi-stage placement of EV charging stations."""

from ._validation import ValidationError
from .choice import UtilityTable, choice_probabilities, choice_probability_price_gradient
from .estimators import ACPowerFlow, BertrandPricer, MultiStagePlanner, NestedLogitChoice
from .game import plan_multistage, solve_stage
from .grid import GridCase, solve_power_flow
from .market import Market, solve_price_equilibrium
from .road import RoadNetwork, shortest_path
from .scenario import Scenario, load_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "ACPowerFlow",
    "BertrandPricer",
    "GridCase",
    "Market",
    "MultiStagePlanner",
    "NestedLogitChoice",
    "RoadNetwork",
    "Scenario",
    "UtilityTable",
    "ValidationError",
    "choice_probabilities",
    "choice_probability_price_gradient",
    "load_scenario",
    "plan_multistage",
    "save_scenario",
    "shortest_path",
    "solve_power_flow",
    "solve_price_equilibrium",
    "solve_stage",
]
