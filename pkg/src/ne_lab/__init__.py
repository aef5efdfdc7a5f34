"""Distributed Nash equilibrium seeking for multi-coalition games on directed graphs."""

from .analysis import compute_errors, estimate_linear_rate, lyapunov_audit, safe_step_size
from .game import GameSpec, QuadraticAgentCost, expand, pseudo_gradient
from .oracle import solve_ne_fixed_point, solve_ne_quadratic, verify_ne
from .scenario import load_scenario
from .seeker import SeekerConfig, run
from .topology import CoalitionLayout, build_graph, check_connectivity, uniform_weights

__all__ = [
    "CoalitionLayout",
    "GameSpec",
    "QuadraticAgentCost",
    "SeekerConfig",
    "build_graph",
    "check_connectivity",
    "compute_errors",
    "estimate_linear_rate",
    "expand",
    "load_scenario",
    "lyapunov_audit",
    "pseudo_gradient",
    "run",
    "safe_step_size",
    "solve_ne_fixed_point",
    "solve_ne_quadratic",
    "uniform_weights",
    "verify_ne",
]
__version__ = "0.1.0"
