"""Robust utility maximization from terminal wealth on finite markets.

The model uncertainty set is a polytope of probability densities pinned
by moment constraints; the robust value and its worst-case density are
computed through a finite-dimensional concave dual, verified by Orlicz
norm inequalities, closed-form lognormal solutions, and brute-force
minimax checks.
"""
from __future__ import annotations

__version__ = "0.1.0"

from ._errors import (BracketFailure, ConvergenceError, DomainError,
                      InfeasibleModel, NonConvergence, RobustUtilError,
                      ScenarioError, UnboundedDual, ValidationError)
from .dual_solver import (DualPoint, DualSolution, OptimalityReport,
                          dual_objective, primal_brute_force, solve_dual,
                          verify_optimality)
from .market import (Constraint, ConstraintSet, FeasibilityReport,
                     FiniteMarket, LognormalSpec, expectation,
                     feasibility_check, gauss_hermite_market, load_scenario)
from .orlicz_modular import (BatteryReport, Modular, amemiya_norm,
                             inequality_battery, luxemburg_norm,
                             modular_I_incomplete, modular_value)
from .robust_solver import (RobustSolution, classical_u_Q, dual_value_curve,
                            solve_robust)
from .utility import (Delta2Constants, Delta2Report, UtilityFunction,
                      asymptotic_elasticity, check_delta2)
from .verifier import (BSOracle, SandwichReport, bs_closed_form, bs_instance,
                       conditioned_density, minimax_check, sandwich_check)

__all__ = [
    "__version__",
    "BracketFailure", "ConvergenceError", "DomainError", "InfeasibleModel",
    "NonConvergence", "RobustUtilError", "ScenarioError", "UnboundedDual",
    "ValidationError",
    "UtilityFunction", "Delta2Constants", "Delta2Report", "check_delta2",
    "asymptotic_elasticity",
    "FiniteMarket", "Constraint", "ConstraintSet", "FeasibilityReport",
    "LognormalSpec", "expectation", "feasibility_check",
    "gauss_hermite_market", "load_scenario",
    "Modular", "BatteryReport", "modular_value", "luxemburg_norm",
    "amemiya_norm", "modular_I_incomplete", "inequality_battery",
    "DualPoint", "DualSolution", "OptimalityReport", "dual_objective",
    "solve_dual", "primal_brute_force", "verify_optimality",
    "RobustSolution", "solve_robust", "dual_value_curve", "classical_u_Q",
    "BSOracle", "SandwichReport", "bs_closed_form", "bs_instance",
    "minimax_check", "sandwich_check", "conditioned_density",
]
