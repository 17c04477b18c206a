"""CC-SSP integer program over a layered graph.

Variables, per criterion j in {0, 1..q}, layer k < h and (node, action)
pair p: ``x[j][k][i][a]`` in [0, 1]; per pair a selector ``z[k][i][a]``
(binary, or continuous in the relaxation). Rows:

* root flow          sum_a x_j(s0, 0, a) = 1
* layer balance      sum_a x_j(s, k, a) = sum x_j(., k-1, .) T~_j,  k = 1..h-1
* risk budget        sum_k sum x_j(s,k,a) T~_j(s,a,s') r_j(s') <= Δ_j - r_j(s0)
* binding            x_j(s,k,a) <= z(s,k,a)
* single action      sum_a z(s,k,a) <= 1
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .graph import LayeredGraph
from .model import EXPECTED, CostCriterion, Policy, ProblemSpec, RiskCriterion, Sense
from .risk import risk_coefficients


class InfeasibleAtRoot(ValueError):
    """r_j(s0) already exceeds Δ_j, so no policy can satisfy criterion j."""


@dataclass
class ModelIR:
    names: list[str]
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    A: sp.csr_matrix
    rel: np.ndarray            # '=' or '<' per row
    rhs: np.ndarray
    c: np.ndarray
    sense: Sense
    row_names: list[str]
    x_index: list[list[np.ndarray]] = field(default_factory=list)   # [j][k] -> var ids per pair
    z_index: list[np.ndarray] = field(default_factory=list)         # [k] -> var ids per pair
    relaxed: bool = False
    pair_node: list[np.ndarray] = field(default_factory=list)       # [k] -> node of each pair

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def relaxation(self) -> "ModelIR":
        return replace(self, integer=np.zeros_like(self.integer), relaxed=True)

    def violation(self, x: np.ndarray) -> float:
        """Largest constraint or bound violation of point ``x``."""
        ax = self.A @ x
        eq = self.rel == "="
        worst = 0.0
        if eq.any():
            worst = max(worst, float(np.max(np.abs(ax[eq] - self.rhs[eq]))))
        if (~eq).any():
            worst = max(worst, float(np.max(ax[~eq] - self.rhs[~eq], initial=0.0)))
        worst = max(worst, float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0)))
        return worst

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)


@dataclass(frozen=True)
class SolveCriteria:
    risks: tuple[RiskCriterion, ...] = ()
    expected_costs: tuple[CostCriterion, ...] = ()

    @classmethod
    def from_spec(cls, spec: ProblemSpec) -> "SolveCriteria":
        return cls(tuple(spec.risks), spec.expected_costs)


def build_ilp(graph: LayeredGraph, spec: ProblemSpec | None = None, criteria: SolveCriteria | None = None,
              relaxed: bool = False) -> ModelIR:
    """Emit the CC-SSP ILP (or its LP relaxation) for ``graph``.

    Risk criteria must be those the graph was expanded with (``graph.risk``
    holds their per-node values); expected-cost criteria become extra rows.
    """
    spec = graph.spec if spec is None else spec
    criteria = SolveCriteria.from_spec(spec) if criteria is None else criteria
    h = graph.horizon
    q = len(criteria.risks)
    if q != graph.n_risks:
        raise ValueError("risk criteria must match the graph's expanded risk functions")
    if h < 1 or graph.n_pairs(0) == 0:
        raise ValueError("empty graph")
    for j, rc in enumerate(criteria.risks, start=1):
        r0 = graph.risk[j - 1][0][0]
        if r0 > rc.delta:
            raise InfeasibleAtRoot(f"criterion {j}: r(s0)={r0} exceeds Δ={rc.delta}")

    n_pairs = [graph.n_pairs(k) for k in range(h)]
    per_crit = sum(n_pairs)
    offsets = np.concatenate([[0], np.cumsum(n_pairs)])
    x_index = [[np.arange(offsets[k], offsets[k + 1]) + j * per_crit for k in range(h)] for j in range(q + 1)]
    z_base = (q + 1) * per_crit
    z_index = [np.arange(offsets[k], offsets[k + 1]) + z_base for k in range(h)]
    n_vars = z_base + per_crit

    names = []
    for j in range(q + 1):
        for k in range(h):
            pn, pa = graph.pair_node[k], graph.pair_action[k]
            names.extend(f"x[{j}][{k}][{i}][{a}]" for i, a in zip(pn, pa))
    for k in range(h):
        names.extend(f"z[{k}][{i}][{a}]" for i, a in zip(graph.pair_node[k], graph.pair_action[k]))

    rows, cols, vals, rel, rhs, row_names = [], [], [], [], [], []
    n_rows = 0

    def add_block(r, c, v, nrow, relation, b, labels):
        nonlocal n_rows
        rows.append(np.asarray(r, dtype=np.int64) + n_rows)
        cols.append(np.asarray(c, dtype=np.int64))
        vals.append(np.asarray(v, dtype=float))
        rel.extend([relation] * nrow)
        rhs.append(np.broadcast_to(np.asarray(b, dtype=float), (nrow,)))
        row_names.extend(labels)
        n_rows += nrow

    for j in range(q + 1):
        xi = x_index[j]
        add_block(np.zeros(n_pairs[0]), xi[0], np.ones(n_pairs[0]), 1, "=", 1.0, [f"root[{j}]"])
        for k in range(1, h):
            n_k = graph.n_nodes(k)
            # outflow of each node at layer k
            r_out = graph.pair_node[k]
            c_out = xi[k]
            # inflow: -T~_j over arcs from layer k-1
            tm = graph.transition_matrix(k - 1).tocoo()
            surv = graph.survival(j, k - 1)
            r_in = tm.col
            c_in = xi[k - 1][tm.row]
            v_in = -tm.data * surv[tm.row]
            add_block(np.concatenate([r_out, r_in]), np.concatenate([c_out, c_in]),
                      np.concatenate([np.ones(len(r_out)), v_in]), n_k, "=", 0.0,
                      [f"flow[{j}][{k}][{i}]" for i in range(n_k)])

    for j, rc in enumerate(criteria.risks, start=1):
        coef = np.concatenate(risk_coefficients(graph, j))
        cols_j = np.concatenate(x_index[j])
        keep = coef != 0
        add_block(np.zeros(int(keep.sum())), cols_j[keep], coef[keep], 1, "<",
                  rc.delta - graph.risk[j - 1][0][0], [f"risk[{j}]"])

    zall = np.concatenate(z_index)
    for j in range(q + 1):
        xall = np.concatenate(x_index[j])
        m = len(xall)
        add_block(np.concatenate([np.arange(m), np.arange(m)]), np.concatenate([xall, zall]),
                  np.concatenate([np.ones(m), -np.ones(m)]), m, "<", 0.0,
                  [f"bind[{j}][{k}][{i}][{a}]" for k in range(h)
                   for i, a in zip(graph.pair_node[k], graph.pair_action[k])])
    for k in range(h):
        add_block(graph.pair_node[k], z_index[k], np.ones(n_pairs[k]), graph.n_nodes(k), "<", 1.0,
                  [f"one[{k}][{i}]" for i in range(graph.n_nodes(k))])

    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_rows, n_vars))
    A.sum_duplicates()
    c = np.zeros(n_vars)
    for k in range(h):
        c[x_index[0][k]] = graph.utility[k]
    integer = np.zeros(n_vars, dtype=bool)
    if not relaxed:
        integer[z_base:] = True
    model = ModelIR(names, np.zeros(n_vars), np.ones(n_vars), integer, A, np.asarray(rel),
                    np.concatenate(rhs), c, spec.sense, row_names, x_index, z_index, relaxed,
                    [np.asarray(pn) for pn in graph.pair_node])
    for cc in criteria.expected_costs:
        model = add_expected_cost_constraint(model, graph, cc)
    return model


def add_expected_cost_constraint(model: ModelIR, graph: LayeredGraph, cost: CostCriterion) -> ModelIR:
    """Append sum_{k,s,a} x_0(s,k,a) C(s,a) <= P over the utility flows."""
    if cost.kind != EXPECTED:
        raise ValueError("only expected-budget criteria are linear in the flows")
    vals = np.concatenate(graph.pair_values(cost.cost))
    cols = np.concatenate(model.x_index[0])
    row = sp.csr_matrix((vals, (np.zeros(len(cols), dtype=np.int64), cols)), shape=(1, model.n_vars))
    idx = sum(1 for n in model.row_names if n.startswith("budget"))
    return replace(model, A=sp.vstack([model.A, row], format="csr"),
                   rel=np.append(model.rel, "<"), rhs=np.append(model.rhs, float(cost.bound)),
                   row_names=model.row_names + [f"budget[{idx}]"])


def _fallback_action(graph: LayeredGraph, k: int, i: int) -> int:
    lo, hi = int(graph.node_ptr[k][i]), int(graph.node_ptr[k][i + 1])
    u = graph.utility[k][lo:hi]
    acts = graph.pair_action[k][lo:hi]
    best = u.max() if graph.spec.sense == Sense.MAX else u.min()
    return int(min(a for a, v in zip(acts, u) if v == best))


def extract_policy(x: np.ndarray, graph: LayeredGraph, model: ModelIR, int_tol: float = 1e-6) -> Policy:
    """Policy encoded by a solution vector.

    Integral z gives a deterministic policy (z = 1 action per node). Otherwise
    the policy is the normalized utility flow x_0. Nodes the solution leaves
    without mass get the immediate-utility-optimal action (deterministic) or
    a uniform distribution (stochastic), and are listed in ``fallback``.
    """
    zall = x[np.concatenate(model.z_index)]
    integral = bool(np.all(np.minimum(np.abs(zall), np.abs(zall - 1.0)) <= int_tol))
    table, fallback = {}, set()
    for k in range(graph.horizon):
        acts = graph.pair_action[k]
        zk = x[model.z_index[k]]
        xk = x[model.x_index[0][k]]
        for i, s in enumerate(graph.states[k]):
            lo, hi = int(graph.node_ptr[k][i]), int(graph.node_ptr[k][i + 1])
            if integral:
                chosen = [int(acts[p]) for p in range(lo, hi) if zk[p] > 0.5]
                if chosen:
                    table[(s, k)] = chosen[0]
                else:
                    table[(s, k)] = _fallback_action(graph, k, i)
                    fallback.add((s, k))
            else:
                w = np.clip(xk[lo:hi], 0.0, None)
                tot = w.sum()
                if tot > 1e-12:
                    table[(s, k)] = {int(a): float(v / tot) for a, v in zip(acts[lo:hi], w) if v > 0}
                else:
                    table[(s, k)] = {int(a): 1.0 / (hi - lo) for a in acts[lo:hi]}
                    fallback.add((s, k))
    return Policy(table, stochastic=not integral, fallback=frozenset(fallback))
