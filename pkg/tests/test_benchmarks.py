import numpy as np
import pytest

from ccssp.benchmarks import (HV, GridParams, GridWorld, Highway, HighwayParams, cell_uniform, gen_grid,
                              gen_highway, monotonicity_suite, random_gcc_problem, random_tiny_problem,
                              small_grid, small_highway, splitmix64)
from ccssp.graph import census, expand
from ccssp.model import validate_problem
from ccssp.risk import exec_risk_recursive

from _util import random_deterministic_policy


def test_splitmix_reference_values():
    # first outputs of the reference SplitMix64 stream seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def test_cell_draws_are_deterministic_and_uniform():
    a = [cell_uniform(3, 1, c) for c in range(20_000)]
    assert a == [cell_uniform(3, 1, c) for c in range(20_000)]
    assert a != [cell_uniform(4, 1, c) for c in range(20_000)]
    assert 0.0 <= min(a) and max(a) < 1.0
    assert abs(np.mean(a) - 0.5) < 0.01


def test_grid_class_fractions():
    w = GridWorld(GridParams(seed=1))
    cells = range(10**6, 10**6 + 40_000)
    risky = np.mean([w.is_risky(s) for s in cells])
    cheap = np.mean([w.cell_cost(s) == 1.0 for s in cells])
    assert abs(risky - 0.05) < 0.005 and abs(cheap - 0.10) < 0.006


def test_grid_start_never_risky():
    for seed in range(200):
        spec = small_grid(seed=seed, size=8)
        assert spec.risks[0].risk(spec.initial_state) == 0.0


def test_grid_transitions():
    w = GridWorld(GridParams(width=5, height=5, start=(2, 2)))
    s = w.encode(2, 2)
    succ = dict(w.successors(s, 0))
    assert succ[w.encode(2, 3)] == pytest.approx(0.8)
    assert sum(succ.values()) == pytest.approx(1.0) and len(succ) == 4
    corner = dict(w.successors(w.encode(0, 0), 1))        # "down" off the board
    assert sum(corner.values()) == pytest.approx(1.0) and len(corner) == 2


def test_grid_validation():
    with pytest.raises(ValueError):
        GridParams(width=3, height=3, start=(3, 0))
    with pytest.raises(ValueError):
        GridParams(risky_fraction=1.5)
    with pytest.raises(ValueError):
        GridParams(success_prob=0.0)


def test_generators_pass_validation():
    for spec in (small_grid(horizon=3), small_highway(), random_tiny_problem(0), random_gcc_problem(0)):
        assert validate_problem(spec) == []


def test_grid_node_counts_small_horizons():
    # layer k: cells at L1 distance <= k with the parity of k, (k + 1)^2 of them
    g = expand(gen_grid(horizon=4))
    assert [g.n_nodes(k) for k in range(5)] == [(k + 1) ** 2 for k in range(5)]
    assert census(g).graph_nodes == 55


def test_highway_collision_and_dynamics():
    hw = Highway(HighwayParams(length=10, hvs=(HV(1, 4), HV(0, 3, 1))))
    assert hw.collides((1, 4, ((1, 4, 0),)))
    assert hw.collides((1, 3, ((0, 3, 1),)))            # HV mid-manoeuvre straddles both lanes
    assert not hw.collides((2, 3, ((0, 3, 1),)))
    s = hw.initial_state
    assert sum(p for _, p in hw.successors(s, 0)) == pytest.approx(1.0)
    assert hw.actions((0, 2, ())) == [0, 1, 2, 4]
    assert hw.hv_step(1, (0, 3, 0)) == [((0, 4, 0), 0.8), ((0, 4, 1), pytest.approx(0.2))]


def test_highway_without_hvs_is_risk_free():
    spec = gen_highway(HighwayParams(length=12, hvs=()), horizon=3)
    g = expand(spec)
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert exec_risk_recursive(g, random_deterministic_policy(g, rng), 1) == 0.0


def test_highway_keep_prob_one_is_deterministic():
    spec = gen_highway(HighwayParams(length=12, hvs=(HV(0, 5, 1),), p_keep=1.0), horizon=3)
    assert all(len(spec.successors(spec.initial_state, a)) == 1 for a in spec.available_actions(spec.initial_state))


def test_highway_validation():
    with pytest.raises(ValueError):
        HighwayParams(hvs=(HV(1, 2),))                   # on the ego cell
    with pytest.raises(ValueError):
        HighwayParams(hvs=(HV(0, 5, 2),))
    with pytest.raises(ValueError):
        HighwayParams(costs=(1.0,))


def test_random_generators_are_seeded():
    a, b = random_tiny_problem(5), random_tiny_problem(5)
    assert a.horizon == b.horizon and a.risks[0].delta == b.risks[0].delta
    assert [a.successors(s, 0) for s in range(2)] == [b.successors(s, 0) for s in range(2)]
    c = random_gcc_problem(5)
    crit = c.global_costs[0]
    assert all(crit.cost(s, a) <= crit.bound for s in range(2) for a in range(2))


def test_monotonicity_suite_on_small_grid():
    tab = monotonicity_suite(lambda h, d: small_grid(size=20, horizon=h, delta=d), [2, 3], [0.05, 0.1])
    assert len(tab.rows) == 4 and all(r.status == "optimal" for r in tab.rows)
    # Δ-monotone, but this board's objective per step is not monotone in h
    assert not any(v.startswith("h=") for v in tab.violations)
    assert "Δ=0.05: objective/h rises from h=2 to h=3" in tab.violations
