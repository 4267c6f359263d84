"""Optimal consumption and investment for a fund with exponential
Kihlstrom-Mirman preferences, solved by backward induction on a wealth grid."""

from .analytic import MattressParams, mattress_consumption_path, mattress_value, solve_w
from .model import (FundMode, MarketParams, MortalityModel, PowerUtility, builtin_mortality,
                    mortality_exponential, mortality_from_csv)
from .oneperiod import MinimumBudget, OnePeriodInputs, Truncation, eta_step, solve_eta
from .simulate import FanResult, SimConfig, simulate_paths
from .solver import GridSpec, InfeasibleProblem, PolicyTable, SolveConfig, solve_backward
from .valuefn import PLValueFunction

__version__ = "0.1.0"

__all__ = [
    "FanResult", "FundMode", "GridSpec", "InfeasibleProblem", "MarketParams", "MattressParams",
    "MinimumBudget", "MortalityModel", "OnePeriodInputs", "PLValueFunction", "PolicyTable",
    "PowerUtility", "SimConfig", "SolveConfig", "Truncation", "builtin_mortality", "eta_step",
    "mattress_consumption_path", "mattress_value", "mortality_exponential",
    "mortality_from_csv", "simulate_paths", "solve_backward", "solve_eta", "solve_w",
]
