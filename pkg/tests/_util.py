"""Shared helpers for the test suite."""

import numpy as np

from ccssp.model import Policy


def random_stochastic_probs(graph, rng):
    """Per-pair probabilities of a random stochastic policy (Dirichlet per node)."""
    out = []
    for k in range(graph.horizon):
        p = np.zeros(graph.n_pairs(k))
        for i in range(graph.n_nodes(k)):
            lo, hi = graph.node_ptr[k][i], graph.node_ptr[k][i + 1]
            p[lo:hi] = rng.dirichlet(np.ones(hi - lo))
        out.append(p)
    return out


def probs_to_policy(graph, probs):
    table = {}
    for k in range(graph.horizon):
        for i, s in enumerate(graph.states[k]):
            lo, hi = graph.node_ptr[k][i], graph.node_ptr[k][i + 1]
            table[(s, k)] = {int(a): float(p) for a, p in zip(graph.pair_action[k][lo:hi], probs[k][lo:hi])}
    return Policy(table, stochastic=True)


def random_deterministic_policy(graph, rng):
    table = {}
    for k in range(graph.horizon):
        for i, s in enumerate(graph.states[k]):
            lo, hi = graph.node_ptr[k][i], graph.node_ptr[k][i + 1]
            table[(s, k)] = int(graph.pair_action[k][rng.integers(lo, hi)])
    return Policy(table)
