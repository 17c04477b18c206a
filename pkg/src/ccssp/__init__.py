"""Chance-constrained stochastic shortest path (CC-SSP) planning.

Typical use::

    from ccssp import expand, build_ilp, solve_milp, extract_policy
    graph = expand(spec)
    model = build_ilp(graph)
    sol = solve_milp(model)
    policy = extract_policy(sol.x, graph, model)
"""

from .benchmarks import gen_grid, gen_highway, random_tiny_problem, small_grid, small_highway
from .gcc import plan_discretization, reduce_discretized, reduce_exact
from .graph import LayeredGraph, census, expand
from .ilp import InfeasibleAtRoot, ModelIR, build_ilp, extract_policy
from .model import (CostCriterion, Policy, ProblemSpec, RiskCriterion, Sense, tabular_problem,
                    validate_problem)
from .oracle import brute_force_optimal, exact_chance
from .risk import exec_risk_linear, exec_risk_recursive, exec_risk_sampled, risk_report
from .rounding import RoundingConfig, approximation_ratio_experiment, round_solution
from .solver import Solution, SolverConfig, solve_lp, solve_milp

__version__ = "0.1.0"

__all__ = ["LayeredGraph", "census", "expand", "InfeasibleAtRoot", "ModelIR", "build_ilp", "extract_policy",
           "CostCriterion", "Policy", "ProblemSpec", "RiskCriterion", "Sense", "tabular_problem",
           "validate_problem", "exec_risk_linear", "exec_risk_recursive", "exec_risk_sampled", "risk_report",
           "Solution", "SolverConfig", "solve_lp", "solve_milp", "gen_grid", "gen_highway", "random_tiny_problem",
           "small_grid", "small_highway", "plan_discretization", "reduce_discretized", "reduce_exact",
           "brute_force_optimal", "exact_chance", "RoundingConfig", "approximation_ratio_experiment",
           "round_solution"]
