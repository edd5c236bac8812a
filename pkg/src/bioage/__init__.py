"""Retirement spending and life expectancy when biological age is stochastic."""

from .bridge import BridgeDynamics, simulate_path, simulate_paths
from .density import (ConsumptionCI, DeltaStart, DensityStart, calibrate_sigma, population_hazard,
                      quantiles, solve_density, spending_band)
from .erl import erl_at, erl_table, solve_erl
from .errors import CalibrationBracketError, InsufficientSampleError, SolverError, StabilityError
from .hazard import HazardModel
from .mc import mc_erl, mc_survival, mc_survivor_quantiles
from .pde import Grid2D, Surface
from .policy import (Preferences, characteristics_approx, deterministic_plan, solve_log_policy,
                     solve_policy, spending_rate)

__all__ = [
    "BridgeDynamics", "simulate_path", "simulate_paths",
    "ConsumptionCI", "DeltaStart", "DensityStart", "calibrate_sigma", "population_hazard",
    "quantiles", "solve_density", "spending_band",
    "erl_at", "erl_table", "solve_erl",
    "CalibrationBracketError", "InsufficientSampleError", "SolverError", "StabilityError",
    "HazardModel",
    "mc_erl", "mc_survival", "mc_survivor_quantiles",
    "Grid2D", "Surface",
    "Preferences", "characteristics_approx", "deterministic_plan", "solve_log_policy",
    "solve_policy", "spending_rate",
]
