import numpy as np
import pytest

from ccssp.benchmarks import random_tiny_problem
from ccssp.graph import expand
from ccssp.ilp import InfeasibleAtRoot, SolveCriteria, add_expected_cost_constraint, build_ilp, extract_policy
from ccssp.model import CostCriterion, RiskCriterion, Sense, cost_from_table, risk_from_table, tabular_problem
from ccssp.risk import exec_risk_recursive, expected_value, flows_from_policy
from ccssp.solver import OPTIMAL, solve_lp, solve_milp

from _util import random_deterministic_policy


def policy_point(model, graph, policy):
    """Model vector encoding a deterministic policy (flows + canonical selectors)."""
    probs = graph.policy_probs(policy)
    x = np.zeros(model.n_vars)
    for j, idx in enumerate(model.x_index):
        for k, f in enumerate(flows_from_policy(graph, probs, j)):
            x[idx[k]] = f
    for k, zk in enumerate(model.z_index):
        x[zk] = probs[k]
    return x


def test_shapes_and_names():
    spec = random_tiny_problem(2, n_risks=2)
    g = expand(spec)
    m = build_ilp(g)
    pairs = sum(g.n_pairs(k) for k in range(g.horizon))
    nodes = sum(g.n_nodes(k) for k in range(g.horizon))
    assert m.n_vars == 4 * pairs
    assert m.n_rows == 3 * (1 + nodes - g.n_nodes(0)) + 2 + 3 * pairs + nodes
    assert m.integer.sum() == pairs and m.integer[m.z_index[0]].all()
    assert m.names[m.z_index[0][0]].startswith("z[0][0][")
    assert len(set(m.names)) == m.n_vars and len(set(m.row_names)) == m.n_rows


def test_relaxation_flag():
    g = expand(random_tiny_problem(2))
    assert not build_ilp(g, relaxed=True).integer.any()
    assert build_ilp(g).relaxation().relaxed


@pytest.mark.parametrize("seed", range(15))
def test_policy_points_are_feasible_iff_risk_within_budget(seed):
    spec = random_tiny_problem(seed)
    g = expand(spec)
    try:
        m = build_ilp(g)
    except InfeasibleAtRoot:
        return
    pol = random_deterministic_policy(g, np.random.default_rng(seed))
    x = policy_point(m, g, pol)
    ok = all(exec_risk_recursive(g, pol, j) <= rc.delta + 1e-12 for j, rc in enumerate(spec.risks, 1))
    assert (m.violation(x) <= 1e-9) == ok
    assert m.objective(x) == pytest.approx(expected_value(g, pol), abs=1e-12)


def test_root_risk_above_budget():
    spec = tabular_problem({(0, 0): [(0, 1.0)]}, {}, 0, 1, risks=[RiskCriterion(risk_from_table({0: 0.3}), 0.2)])
    with pytest.raises(InfeasibleAtRoot):
        build_ilp(expand(spec))


def test_risk_criteria_must_match_graph():
    spec = random_tiny_problem(2, n_risks=1)
    g = expand(spec)
    with pytest.raises(ValueError):
        build_ilp(g, criteria=SolveCriteria(risks=()))


def test_expected_cost_row_limits_solution():
    # two actions: cheap-utility/high-cost vs the opposite; the budget forces the latter
    trans = {(0, 0): [(0, 1.0)], (0, 1): [(0, 1.0)]}
    cost = CostCriterion(cost_from_table({(0, 0): 5.0, (0, 1): 1.0}), 2.0)
    spec = tabular_problem(trans, {(0, 0): 1.0, (0, 1): 3.0}, 0, 2, sense=Sense.MIN, costs=[cost])
    g = expand(spec)
    m = build_ilp(g)
    assert m.row_names[-1] == "budget[0]"
    sol = solve_milp(m)
    assert sol.objective == pytest.approx(6.0)
    assert solve_milp(build_ilp(g, criteria=SolveCriteria())).objective == pytest.approx(2.0)
    with pytest.raises(ValueError):
        add_expected_cost_constraint(m, g, CostCriterion(lambda s, a: 1.0, 1.0, "global", 0.1))


@pytest.mark.parametrize("seed", range(10))
def test_extracted_policy_reproduces_objective(seed):
    spec = random_tiny_problem(seed)
    g = expand(spec)
    try:
        m = build_ilp(g)
    except InfeasibleAtRoot:
        return
    sol = solve_milp(m)
    if sol.status != OPTIMAL:
        return
    pol = extract_policy(sol.x, g, m)
    assert pol.kind == "deterministic"
    assert expected_value(g, pol) == pytest.approx(sol.objective, abs=1e-9)
    assert all((s, k) in pol for k in range(g.horizon) for s in g.states[k])


def test_extract_policy_from_fractional_lp_point():
    for seed in range(30):
        spec = random_tiny_problem(seed)
        g = expand(spec)
        try:
            m = build_ilp(g, relaxed=True)
        except InfeasibleAtRoot:
            continue
        lp = solve_lp(m)
        pol = extract_policy(lp.x, g, m)
        if pol.stochastic:
            assert expected_value(g, pol) == pytest.approx(lp.objective, abs=1e-7)
            return
    pytest.skip("no fractional LP optimum among the sampled instances")


def test_zero_flow_nodes_get_fallback():
    trans = {(0, 0): [(1, 1.0)], (0, 1): [(2, 1.0)], (1, 0): [(1, 1.0)], (1, 1): [(1, 1.0)],
             (2, 0): [(2, 1.0)], (2, 1): [(2, 1.0)]}
    util = {(0, 0): 1.0, (0, 1): 5.0, (2, 0): 4.0, (2, 1): 3.0, (1, 0): 1.0, (1, 1): 1.0}
    spec = tabular_problem(trans, util, 0, 2, sense=Sense.MIN)
    g = expand(spec)
    m = build_ilp(g)
    pol = extract_policy(solve_milp(m).x, g, m)
    assert (2, 1) in pol.fallback
    assert pol.table[(2, 1)] == 1      # lowest immediate cost at the unreached node
