"""Optimal dam-reservoir discharge under regime-switching inflows.

The value function of the discounted control problem solves a weakly coupled
system of Hamilton-Jacobi-Bellman equations, one per inflow regime. This
package estimates the regime chain from discharge records, solves the system
with a WENO3 / local Lax-Friedrichs scheme, checks it against a closed-form
steady solution and evaluates policies by Monte Carlo simulation.
"""

from .costs import CostSpec, HighFlowPenalty, make_residual, register_residual
from .errors import ConfigError, InputError, InstabilityError, NumericalError, ReservoirError
from .exact import ExactParams, check_validity, exact_policy, exact_value, steady_residual_at
from .hamiltonian import InnerMinResult, hamiltonian_value, inner_minimize, viscosity_coefficient
from .problem import Problem, single_regime_model
from .regime import (
    RegimeModel,
    classify_inflow,
    estimate_transition_probs,
    rates_from_probs,
    sample_regime_path,
    stationary_distribution,
)
from .scheme import Grid, ValueField, llf_step, weno_derivative_pair
from .sim import Trajectory, estimate_objective, simulate_trajectory
from .solver import PolicyField, SolveConfig, SolveResult, extract_policy, solve, steady_residual

__version__ = "0.1.0"

__all__ = [
    "CostSpec", "HighFlowPenalty", "make_residual", "register_residual",
    "ConfigError", "InputError", "InstabilityError", "NumericalError", "ReservoirError",
    "ExactParams", "check_validity", "exact_policy", "exact_value", "steady_residual_at",
    "InnerMinResult", "hamiltonian_value", "inner_minimize", "viscosity_coefficient",
    "Problem", "single_regime_model",
    "RegimeModel", "classify_inflow", "estimate_transition_probs", "rates_from_probs",
    "sample_regime_path", "stationary_distribution",
    "Grid", "ValueField", "llf_step", "weno_derivative_pair",
    "Trajectory", "estimate_objective", "simulate_trajectory",
    "PolicyField", "SolveConfig", "SolveResult", "extract_policy", "solve", "steady_residual",
]
