import math

import numpy as np
import pytest

from ccssp.benchmarks import random_tiny_problem, small_grid
from ccssp.graph import expand
from ccssp.ilp import InfeasibleAtRoot, build_ilp
from ccssp.model import RiskCriterion, Sense, risk_from_table, tabular_problem
from ccssp.risk import conservation_residual, exec_risk_recursive, flows_from_policy
from ccssp.rounding import (NoFeasibleRounding, RoundingConfig, approximation_ratio,
                            approximation_ratio_experiment, round_solution, sample_policy, selector_masses)
from ccssp.solver import OPTIMAL, solve_lp, solve_milp


def gamble(delta=0.5):
    # action 0: cheap but lands in a failure state; action 1: safe and costly
    trans = {(0, 0): [(1, 1.0)], (0, 1): [(2, 1.0)], (1, 0): [(1, 1.0)], (2, 0): [(2, 1.0)]}
    util = {(0, 0): 1.0, (0, 1): 3.0, (1, 0): 0.0, (2, 0): 0.0}
    return tabular_problem(trans, util, 0, 2, sense=Sense.MIN,
                           risks=[RiskCriterion(risk_from_table({1: 1.0}), delta)])


def lp_of(spec):
    g = expand(spec)
    m = build_ilp(g, relaxed=True)
    return g, m, solve_lp(m)


def test_rounding_samples_in_proportion_to_lp_mass():
    g, m, lp = lp_of(gamble(0.3))
    masses = selector_masses(lp.x, g, m)
    np.testing.assert_allclose(masses[0], [0.3, 0.7], atol=1e-9)
    rng = np.random.default_rng(0)
    n = 10_000
    hits = sum(sample_policy(g, masses, rng)[0][0][0] for _ in range(n))
    band = 4.0 * math.sqrt(0.3 * 0.7 / n)
    assert abs(hits / n - 0.3) <= band


def test_every_returned_policy_is_risk_feasible():
    for seed in range(40):
        spec = random_tiny_problem(seed)
        g = expand(spec)
        try:
            m = build_ilp(g, relaxed=True)
        except InfeasibleAtRoot:
            continue
        lp = solve_lp(m)
        if lp.status != OPTIMAL or solve_milp(build_ilp(g)).status != OPTIMAL:
            continue    # a feasible relaxation does not imply a feasible deterministic policy
        out = round_solution(lp, g, spec, config=RoundingConfig(seed=seed), model=m)
        for j, rc in enumerate(spec.risks, start=1):
            assert exec_risk_recursive(g, out.policy, j) <= rc.delta + 1e-9
        probs = g.policy_probs(out.policy)
        for j in range(g.n_risks + 1):
            assert conservation_residual(g, flows_from_policy(g, probs, j), j) <= 1e-9


def test_integral_lp_point_rounds_to_itself():
    spec = small_grid(horizon=2)
    g = expand(spec)
    m = build_ilp(g)
    sol = solve_milp(m)
    relaxed = build_ilp(g, relaxed=True)
    outs = [round_solution(sol.x, g, spec, config=RoundingConfig(seed=s), model=relaxed) for s in range(5)]
    assert all(o.iterations == 1 for o in outs)
    assert len({tuple(sorted(o.policy.table.items())) for o in outs}) == 1
    assert outs[0].objective == pytest.approx(sol.objective)


def test_risk_free_instance_succeeds_first_sweep():
    trans = {(0, 0): [(0, 0.5), (1, 0.5)], (0, 1): [(1, 1.0)], (1, 0): [(0, 1.0)], (1, 1): [(1, 1.0)]}
    spec = tabular_problem(trans, {(0, 0): 1.0, (0, 1): 2.0, (1, 0): 0.5, (1, 1): 3.0}, 0, 3,
                           risks=[RiskCriterion(risk_from_table({}), 0.0)])
    g, m, lp = lp_of(spec)
    for seed in range(10):
        assert round_solution(lp, g, spec, config=RoundingConfig(seed=seed), model=m).iterations == 1


def test_seed_determinism():
    g, m, lp = lp_of(gamble(0.3))
    a = round_solution(lp, g, config=RoundingConfig(seed=7), model=m)
    b = round_solution(lp, g, config=RoundingConfig(seed=7), model=m)
    assert a.policy == b.policy and a.iterations == b.iterations


def test_exhausted_sweeps_carry_best_attempt():
    g, m, lp = lp_of(gamble(0.9))
    for seed in range(100):
        try:
            round_solution(lp, g, config=RoundingConfig(seed=seed, max_outer_iterations=1), model=m)
        except NoFeasibleRounding as exc:
            assert exc.best is not None
            assert exc.best.policy.table[(0, 0)] == 0
            assert exc.best.risks[0] == pytest.approx(1.0)
            return
    pytest.fail("expected a failing single sweep")


def test_rejects_points_outside_the_relaxation():
    g, m, lp = lp_of(gamble(0.3))
    with pytest.raises(ValueError):
        round_solution(lp.x * 2.0, g, model=m)


def test_config_validation():
    with pytest.raises(ValueError):
        RoundingConfig(max_outer_iterations=0)


def test_ratio_definition():
    assert approximation_ratio(gamble(), 2.0, 2.5) == pytest.approx(0.8)
    assert approximation_ratio(random_tiny_problem(0, sense=Sense.MAX), 5.0, 4.0) == pytest.approx(0.8)
    assert approximation_ratio(gamble(), 0.0, 0.0) == 1.0


def test_experiment_small_grid():
    spec = small_grid(horizon=3)
    exp = approximation_ratio_experiment(spec, n_trials=10, seed=3)
    assert len(exp.trials) == 10
    assert all(0 < t.ratio <= 1 + 1e-12 for t in exp.trials)
    assert exp.min_ratio == min(t.ratio for t in exp.trials)
    assert exp.to_csv(timing=False) == approximation_ratio_experiment(spec, n_trials=10, seed=3).to_csv(timing=False)
    head = exp.to_csv().splitlines()[0].split(",")
    assert head[:5] == ["trial", "seed", "ratio", "iterations", "risk_1"] and head[-1] == "seconds"


def test_single_trial_has_no_interval():
    exp = approximation_ratio_experiment(small_grid(horizon=2), n_trials=1)
    assert math.isnan(exp.ci_half_width)
    with pytest.raises(ValueError):
        approximation_ratio_experiment(small_grid(horizon=2), n_trials=0)


def test_deterministic_lp_gives_unit_ratios():
    exp = approximation_ratio_experiment(small_grid(horizon=2), n_trials=5)
    assert exp.mean == pytest.approx(1.0) and exp.ci_half_width == pytest.approx(0.0)
