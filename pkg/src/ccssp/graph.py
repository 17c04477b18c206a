"""Time-layered reachable And-Or graph.

Layer ``k`` holds every state reachable from the initial state in exactly
``k`` steps. For each layer below the horizon the (node, action) pairs are
stored contiguously per node, and arcs contiguously per pair (CSR style), so
flow propagation is a sparse matrix product.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .model import PROB_TOL, Policy, PolicyMismatch, POLICY_TOL, ProblemSpec, StateId

DEFAULT_NODE_CAP = 10_000_000


class NodeCapExceeded(MemoryError):
    """Expansion would exceed the configured number of state nodes."""


def node_cap_default() -> int:
    return int(os.environ.get("CCSSP_NODE_CAP", DEFAULT_NODE_CAP))


def _sorted_ids(ids):
    try:
        return sorted(ids)
    except TypeError:
        return sorted(ids, key=repr)


@dataclass
class LayeredGraph:
    spec: ProblemSpec
    states: list[list[StateId]]          # layers 0..h
    index: list[dict[StateId, int]]
    node_ptr: list[np.ndarray]           # layers 0..h-1, len n_k + 1
    pair_action: list[np.ndarray]
    pair_node: list[np.ndarray]
    arc_ptr: list[np.ndarray]
    arc_succ: list[np.ndarray]
    arc_prob: list[np.ndarray]
    utility: list[np.ndarray]            # per pair
    risk: list[list[np.ndarray]]         # risk[j-1][k], per node, layers 0..h

    @property
    def horizon(self) -> int:
        return len(self.states) - 1

    @property
    def n_risks(self) -> int:
        return len(self.risk)

    def n_nodes(self, k: int) -> int:
        return len(self.states[k])

    def n_pairs(self, k: int) -> int:
        return len(self.pair_action[k])

    def node_pairs(self, k: int, i: int) -> range:
        return range(int(self.node_ptr[k][i]), int(self.node_ptr[k][i + 1]))

    def transition_matrix(self, k: int) -> sp.csr_matrix:
        """Sparse ``(n_pairs_k, n_{k+1})`` matrix of T(s, a, s')."""
        cache = self.__dict__.setdefault("_tm", {})
        if k not in cache:
            cache[k] = sp.csr_matrix(
                (self.arc_prob[k], self.arc_succ[k], self.arc_ptr[k]),
                shape=(self.n_pairs(k), self.n_nodes(k + 1)))
        return cache[k]

    def survival(self, j: int, k: int) -> np.ndarray:
        """Per-pair factor (1 - r_j(s)) of the source node; ones for j = 0."""
        if j == 0:
            return np.ones(self.n_pairs(k))
        return 1.0 - self.risk[j - 1][k][self.pair_node[k]]

    def pair_values(self, fn: Callable[[StateId, int], float]) -> list[np.ndarray]:
        """Evaluate ``fn(state, action)`` on every pair, layer by layer."""
        out = []
        for k in range(self.horizon):
            st = self.states[k]
            out.append(np.array([fn(st[i], int(a)) for i, a in
                                 zip(self.pair_node[k], self.pair_action[k])], dtype=float))
        return out

    def node_values(self, fn: Callable[[StateId], float]) -> list[np.ndarray]:
        return [np.array([fn(s) for s in layer], dtype=float) for layer in self.states]

    def policy_probs(self, policy: Policy) -> list[np.ndarray]:
        """Per-pair action probabilities of ``policy`` (layers 0..h-1)."""
        out = []
        for k in range(self.horizon):
            probs = np.zeros(self.n_pairs(k))
            acts = self.pair_action[k]
            for i, s in enumerate(self.states[k]):
                lo, hi = int(self.node_ptr[k][i]), int(self.node_ptr[k][i + 1])
                dist = policy.distribution(s, k)
                local = {int(a): p for p, a in enumerate(acts[lo:hi], start=lo)}
                total = 0.0
                for a, pr in dist.items():
                    if pr == 0:
                        continue
                    if int(a) not in local:
                        raise PolicyMismatch(f"action {a} unavailable at state {s!r}, step {k}")
                    probs[local[int(a)]] = pr
                    total += pr
                if abs(total - 1.0) > POLICY_TOL:
                    raise ValueError(f"policy distribution at ({s!r}, {k}) sums to {total}")
            out.append(probs)
        return out


def expand(spec: ProblemSpec, node_cap: int | None = None) -> LayeredGraph:
    """Breadth-first expansion of the reachable layered DAG up to the horizon.

    Successors of each (state, action) are merged and visited in sorted id
    order, so node ordinals are a deterministic function of the problem.
    """
    cap = node_cap_default() if node_cap is None else node_cap
    h = spec.horizon
    if h < 1:
        raise ValueError("horizon must be >= 1")
    states = [[spec.initial_state]]
    index = [{spec.initial_state: 0}]
    node_ptr, pair_action, pair_node, arc_ptr, arc_succ, arc_prob, util = ([] for _ in range(7))
    total = 1
    for k in range(h):
        layer = states[k]
        nxt: dict[StateId, int] = {}
        nxt_states: list[StateId] = []
        n_ptr = [0]
        p_act, p_node, a_ptr, a_succ, a_prob, u = [], [], [0], [], [], []
        for i, s in enumerate(layer):
            for a in spec.available_actions(s):
                merged: dict[StateId, float] = {}
                for t, p in spec.successors(s, a):
                    if p > 0:
                        merged[t] = merged.get(t, 0.0) + p
                if not merged:
                    continue
                p_act.append(a)
                p_node.append(i)
                u.append(spec.utility(s, a))
                for t in _sorted_ids(merged):
                    idx = nxt.get(t)
                    if idx is None:
                        idx = nxt[t] = len(nxt_states)
                        nxt_states.append(t)
                    a_succ.append(idx)
                    a_prob.append(merged[t])
                a_ptr.append(len(a_succ))
            if len(p_act) == n_ptr[-1]:
                raise ValueError(f"state {s!r} at step {k} has no action with successors")
            n_ptr.append(len(p_act))
        total += len(nxt_states)
        if total > cap:
            raise NodeCapExceeded(f"expansion exceeds node cap of {cap} state nodes at layer {k + 1}")
        node_ptr.append(np.asarray(n_ptr, dtype=np.int64))
        pair_action.append(np.asarray(p_act, dtype=np.int64))
        pair_node.append(np.asarray(p_node, dtype=np.int64))
        arc_ptr.append(np.asarray(a_ptr, dtype=np.int64))
        arc_succ.append(np.asarray(a_succ, dtype=np.int64))
        arc_prob.append(np.asarray(a_prob, dtype=float))
        util.append(np.asarray(u, dtype=float))
        states.append(nxt_states)
        index.append(nxt)
    risk = [[np.array([rc.risk(s) for s in layer], dtype=float) for layer in states]
            for rc in spec.risks]
    return LayeredGraph(spec, states, index, node_ptr, pair_action, pair_node,
                        arc_ptr, arc_succ, arc_prob, util, risk)


@dataclass(frozen=True)
class NodeCensus:
    graph_nodes: int
    tree_nodes: int


def census(graph: LayeredGraph) -> NodeCensus:
    """State-node count of the graph and of its history-tree unfolding.

    The tree count includes both state and action nodes:
    N(leaf) = 1, N(node) = 1 + sum_a (1 + sum_arcs N(child)).
    """
    h = graph.horizon
    below = [1] * graph.n_nodes(h)
    for k in range(h - 1, -1, -1):
        ptr, succ = graph.arc_ptr[k], graph.arc_succ[k].tolist()
        pair_val = [1 + sum(below[c] for c in succ[ptr[p]:ptr[p + 1]]) for p in range(graph.n_pairs(k))]
        nptr = graph.node_ptr[k]
        below = [1 + sum(pair_val[nptr[i]:nptr[i + 1]]) for i in range(graph.n_nodes(k))]
    graph_nodes = sum(len(layer) for layer in graph.states)
    return NodeCensus(graph_nodes=graph_nodes, tree_nodes=int(below[0]))


def check_graph(graph: LayeredGraph) -> list[str]:
    """Structural invariants; empty list when all hold."""
    out = []
    if graph.states[0] != [graph.spec.initial_state]:
        out.append("layer 0 is not {s0}")
    for k in range(graph.horizon):
        sums = np.add.reduceat(graph.arc_prob[k], graph.arc_ptr[k][:-1]) if graph.n_pairs(k) else []
        if len(sums) and np.max(np.abs(sums - 1.0)) > PROB_TOL:
            out.append(f"layer {k}: arc probabilities do not sum to 1")
        hit = np.zeros(graph.n_nodes(k + 1), dtype=bool)
        hit[graph.arc_succ[k]] = True
        if not hit.all():
            out.append(f"layer {k + 1}: node without incoming arc")
    return out


# -- serialization -----------------------------------------------------------

def _encode_state(s):
    from .io import encode_state
    return encode_state(s)


def _decode_state(v):
    from .io import decode_state
    return decode_state(v)


def save_graph(graph: LayeredGraph, path) -> None:
    """Write node table (JSON) and arc tables (npy arrays) into one ``.npz``."""
    arrays = {"nodes_json": np.frombuffer(json.dumps(
        [[_encode_state(s) for s in layer] for layer in graph.states]).encode(), dtype=np.uint8)}
    for k in range(graph.horizon):
        for name in ("node_ptr", "pair_action", "pair_node", "arc_ptr", "arc_succ", "arc_prob", "utility"):
            arrays[f"{name}_{k}"] = getattr(graph, name)[k]
    for j, per in enumerate(graph.risk):
        for k, arr in enumerate(per):
            arrays[f"risk_{j}_{k}"] = arr
    np.savez(path, **arrays)


def load_graph(path, spec: ProblemSpec) -> LayeredGraph:
    with np.load(path) as f:
        layers = json.loads(bytes(f["nodes_json"]).decode())
        states = [[_decode_state(s) for s in layer] for layer in layers]
        h = len(states) - 1
        get = lambda name: [f[f"{name}_{k}"] for k in range(h)]
        risk = [[f[f"risk_{j}_{k}"] for k in range(h + 1)] for j in range(len(spec.risks))]
        g = LayeredGraph(spec, states, [{s: i for i, s in enumerate(layer)} for layer in states],
                         get("node_ptr"), get("pair_action"), get("pair_node"), get("arc_ptr"),
                         get("arc_succ"), get("arc_prob"), get("utility"), risk)
    return g


def graph_digest(graph: LayeredGraph) -> str:
    """SHA-256 over the node table and every arc array (zip metadata excluded)."""
    hsh = hashlib.sha256(json.dumps([[_encode_state(s) for s in layer]
                                     for layer in graph.states]).encode())
    for k in range(graph.horizon):
        for name in ("node_ptr", "pair_action", "pair_node", "arc_ptr", "arc_succ", "arc_prob", "utility"):
            hsh.update(np.ascontiguousarray(getattr(graph, name)[k]).tobytes())
    return hsh.hexdigest()
