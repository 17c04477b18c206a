import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from ccssp.benchmarks import random_tiny_problem
from ccssp.graph import expand
from ccssp.ilp import InfeasibleAtRoot, ModelIR, build_ilp
from ccssp.model import RiskCriterion, Sense, risk_from_table, tabular_problem
from ccssp.oracle import brute_force_optimal
from ccssp.solver import (INFEASIBLE, NODE_LIMIT, OPTIMAL, SolverConfig, highs_milp, lp_backend_for, solve_lp,
                          solve_milp)


def knapsack(values, weights, cap, sense=Sense.MAX):
    n = len(values)
    A = sp.csr_matrix(np.asarray([weights], dtype=float))
    return ModelIR([f"y{i}" for i in range(n)], np.zeros(n), np.ones(n), np.ones(n, dtype=bool), A,
                   np.array(["<"]), np.array([float(cap)]), np.asarray(values, dtype=float), sense, ["cap"])


def brute_knapsack(values, weights, cap):
    best = 0.0
    for pick in itertools.product((0, 1), repeat=len(values)):
        if np.dot(pick, weights) <= cap + 1e-12:
            best = max(best, float(np.dot(pick, values)))
    return best


def build(seed, **kw):
    spec = random_tiny_problem(seed, **kw)
    g = expand(spec)
    return spec, g


@given(st.integers(0, 10_000))
def test_generic_milp_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    v = np.round(rng.uniform(0, 10, n), 2)
    w = np.round(rng.uniform(1, 6, n), 2)
    cap = float(np.round(rng.uniform(2, w.sum()), 2))
    sol = solve_milp(knapsack(v, w, cap))
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(brute_knapsack(v, w, cap), abs=1e-9)


def test_trivial_lp_max():
    m = ModelIR(["x"], np.zeros(1), np.ones(1), np.zeros(1, dtype=bool), sp.csr_matrix([[1.0]]),
                np.array(["<"]), np.array([0.5]), np.array([1.0]), Sense.MAX, ["r"])
    sol = solve_lp(m)
    assert sol.status == OPTIMAL and sol.objective == pytest.approx(0.5)


def test_lp_rejects_integer_model():
    with pytest.raises(ValueError):
        solve_lp(knapsack([1.0], [1.0], 1.0))


@pytest.mark.parametrize("seed", range(20))
def test_relaxation_bounds_ilp(seed):
    spec, g = build(seed)
    try:
        ilp = build_ilp(g)
    except InfeasibleAtRoot:
        return
    milp = solve_milp(ilp)
    lp = solve_lp(build_ilp(g, relaxed=True))
    if milp.status != OPTIMAL:
        return
    assert lp.status == OPTIMAL
    sign = 1.0 if spec.sense == Sense.MAX else -1.0
    assert sign * lp.objective >= sign * milp.objective - 1e-7


@pytest.mark.parametrize("backend", ["simplex", "highs"])
@pytest.mark.parametrize("seed", range(0, 40, 3))
def test_backends_agree_with_external_milp(seed, backend):
    spec, g = build(seed)
    model = build_ilp(g)
    ours = solve_milp(model, SolverConfig(lp_backend=backend))
    ref = highs_milp(model)
    assert ours.status == ref.status
    if ours.status == OPTIMAL:
        assert ours.objective == pytest.approx(ref.objective, abs=1e-6)
        assert model.violation(ours.x) <= 1e-6


def test_integral_relaxation_needs_one_node():
    # risk-free chain: the LP optimum is already integral
    spec = tabular_problem({(0, 0): [(1, 1.0)], (0, 1): [(1, 1.0)], (1, 0): [(1, 1.0)]},
                           {(0, 0): 1.0, (0, 1): 2.0, (1, 0): 1.0}, 0, 2, sense=Sense.MAX,
                           risks=[RiskCriterion(risk_from_table({}), 0.1)])
    sol = solve_milp(build_ilp(expand(spec)))
    assert sol.status == OPTIMAL and sol.objective == pytest.approx(3.0)
    assert sol.stats["bb_nodes"] == 1


def test_infeasible_budget_confirmed_by_oracle():
    trans = {(0, 0): [(1, 0.5), (2, 0.5)], (0, 1): [(1, 0.3), (2, 0.7)], (1, 0): [(1, 1.0)], (2, 0): [(2, 1.0)]}
    spec = tabular_problem(trans, {}, 0, 2, risks=[RiskCriterion(risk_from_table({1: 1.0}), 0.2)])
    assert brute_force_optimal(spec).status == "infeasible"
    assert solve_milp(build_ilp(expand(spec))).status == INFEASIBLE


def test_node_limit_reports_status():
    rng = np.random.default_rng(3)
    v, w = rng.uniform(1, 2, 14), rng.uniform(1, 2, 14)
    sol = solve_milp(knapsack(v, w, 7.3), SolverConfig(node_limit=2))
    assert sol.status == NODE_LIMIT


def test_deterministic_statistics():
    _, g = build(12)
    m = build_ilp(g)
    a, b = solve_milp(m), solve_milp(m)
    assert a.objective == b.objective
    assert a.stats["bb_nodes"] == b.stats["bb_nodes"]
    assert a.stats["simplex_iterations"] == b.stats["simplex_iterations"]


@pytest.mark.parametrize("seed", [1, 5, 9, 14])
def test_incumbent_never_beats_active_bound(seed):
    spec, g = build(seed)
    sol = solve_milp(build_ilp(g), SolverConfig(record_trace=True))
    for bound, best in sol.stats.get("trace", []):
        # both in minimization form: the expanded node's bound never exceeds... the incumbent
        assert np.isinf(best) or bound <= best + 1e-7 * max(1.0, abs(best))


def test_auto_backend_by_size():
    _, g = build(1)
    m = build_ilp(g)
    assert lp_backend_for(m, SolverConfig()) == "simplex"
    assert lp_backend_for(m, SolverConfig(lp_backend="highs")) == "highs"


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(feasibility_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(lp_backend="cplex")
