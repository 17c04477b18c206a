import json
from fractions import Fraction

import numpy as np
import pytest

from ccssp.benchmarks import random_gcc_problem, random_tiny_problem, small_grid, small_highway
from ccssp.gcc import AugmentedState, reduce_discretized, reduce_exact
from ccssp.graph import expand, graph_digest
from ccssp.io import (ProblemFormatError, decode_state, encode_state, load_policy, load_problem,
                      policy_from_dict, policy_to_dict, problem_from_dict, problem_to_dict, save_policy,
                      save_problem)
from ccssp.model import Policy

from _util import probs_to_policy, random_deterministic_policy, random_stochastic_probs


def roundtrip(spec, explicit=False):
    return problem_from_dict(json.loads(json.dumps(problem_to_dict(spec, explicit))))


@pytest.mark.parametrize("state", [3, "a", (1, 2), (1, (2, 3), ()), Fraction(7, 3),
                                   AugmentedState((0, 1), (Fraction(1, 10), Fraction(3)), 2),
                                   AugmentedState(4, (5,))])
def test_state_encoding_roundtrip(state):
    assert decode_state(json.loads(json.dumps(encode_state(state)))) == state


def test_unknown_tag_rejected():
    with pytest.raises(ProblemFormatError):
        decode_state({"what": 1})


@pytest.mark.parametrize("make", [lambda: random_tiny_problem(4, n_risks=2),
                                  lambda: reduce_exact(random_gcc_problem(2)),
                                  lambda: reduce_discretized(random_gcc_problem(2), 0.1),
                                  lambda: random_gcc_problem(7)])
def test_explicit_roundtrip_preserves_graph(make):
    spec = make()
    back = roundtrip(spec, explicit=True)
    assert graph_digest(expand(back)) == graph_digest(expand(spec))
    assert problem_to_dict(back, explicit=True) == problem_to_dict(spec, explicit=True)


@pytest.mark.parametrize("spec", [small_grid(horizon=3, seed=2), small_highway(horizon=2)])
def test_builtin_roundtrip(spec):
    d = problem_to_dict(spec)
    assert "builtin" in d and "transitions" not in d
    back = roundtrip(spec)
    assert graph_digest(expand(back)) == graph_digest(expand(spec))
    assert back.meta["params"] == spec.meta["params"]


def test_files(tmp_path):
    spec = random_tiny_problem(1)
    save_problem(spec, tmp_path / "p.json")
    assert graph_digest(expand(load_problem(tmp_path / "p.json"))) == graph_digest(expand(spec))
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ProblemFormatError):
        load_problem(tmp_path / "bad.json")


def test_malformed_problem_dicts():
    with pytest.raises(ProblemFormatError):
        problem_from_dict({"horizon": 2})
    with pytest.raises(ProblemFormatError):
        problem_from_dict({"builtin": "maze"})
    with pytest.raises(ProblemFormatError):
        problem_from_dict({"horizon": 1, "initial_state": 0,
                           "transitions": [{"state": 0, "action": 0, "successors": [[0, "x"]]}]})


def test_explicit_form_refuses_huge_problems():
    with pytest.raises(ProblemFormatError):
        problem_to_dict(small_grid(horizon=6), explicit=True, node_cap=10)


def test_policy_roundtrip(tmp_path):
    g = expand(reduce_exact(random_gcc_problem(3)))
    rng = np.random.default_rng(0)
    det = random_deterministic_policy(g, rng)
    det = Policy(det.table, fallback=frozenset(list(det.table)[:1]))
    save_policy(det, tmp_path / "d.json")
    back = load_policy(tmp_path / "d.json")
    assert back.table == det.table and back.fallback == det.fallback and not back.stochastic
    sto = probs_to_policy(g, random_stochastic_probs(g, rng))
    assert policy_from_dict(json.loads(json.dumps(policy_to_dict(sto)))).table == sto.table


def test_policy_bytes_are_stable():
    g = expand(random_tiny_problem(2))
    pol = random_deterministic_policy(g, np.random.default_rng(1))
    shuffled = Policy(dict(reversed(list(pol.table.items()))))
    assert json.dumps(policy_to_dict(pol)) == json.dumps(policy_to_dict(shuffled))


def test_bad_policy():
    with pytest.raises(ProblemFormatError):
        policy_from_dict({"entries": [{"state": 0}]})
