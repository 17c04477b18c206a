"""Execution risk of a policy, computed three independent ways.

* ``exec_risk_recursive``: backward induction Er(s_k) = r(s_k) +
  sum_a pi(s_k, a) sum_s' T~(s_k, a, s') Er(s'), with Er(s_h) = r(s_h).
* ``exec_risk_linear``: the closed form linear in survival-weighted flows.
* ``exec_risk_sampled``: Monte Carlo with per-visit Bernoulli failures.

Criterion index ``j`` is 1-based for risk criteria; ``j = 0`` denotes the
plain (unweighted) occupancy flow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import LayeredGraph
from .model import Policy, ProblemSpec, StateId

Z99 = 2.5758293035489004
CONSERVATION_TOL = 1e-6
SAMPLE_CHUNK = 4096


def risk_adjusted_transition(spec: ProblemSpec, j: int, s: StateId, a: int, s_next: StateId) -> float:
    """T~_j(s, a, s') = T(s, a, s') * (1 - r_j(s)); plain T for j = 0."""
    p = 0.0
    for t, q in spec.successors(s, a):
        if t == s_next:
            p += q
    if j == 0:
        return p
    return p * (1.0 - spec.risks[j - 1].risk(s))


@dataclass
class FlowAssignment:
    """x[j][k] holds the per-pair flow of criterion j at layer k."""

    x: dict[int, list[np.ndarray]]

    def __getitem__(self, j):
        return self.x[j]


def _check_criterion(graph: LayeredGraph, j: int):
    if not 0 <= j <= graph.n_risks:
        raise ValueError(f"criterion index {j} outside 0..{graph.n_risks}")


def exec_risk_recursive(graph: LayeredGraph, policy: Policy | list[np.ndarray], j: int) -> float:
    """Er_j(s_0) by backward induction over the layers."""
    if j < 1 or j > graph.n_risks:
        raise ValueError(f"risk criterion index {j} outside 1..{graph.n_risks}")
    probs = policy if isinstance(policy, list) else graph.policy_probs(policy)
    r = graph.risk[j - 1]
    er = r[graph.horizon].copy()
    for k in range(graph.horizon - 1, -1, -1):
        pair_er = graph.transition_matrix(k) @ er
        node_er = np.bincount(graph.pair_node[k], weights=probs[k] * pair_er, minlength=graph.n_nodes(k))
        er = r[k] + (1.0 - r[k]) * node_er
    return float(np.clip(er[0], 0.0, 1.0))


def node_exec_risk(graph: LayeredGraph, policy: Policy, j: int) -> list[np.ndarray]:
    """Er_j at every node of every layer."""
    probs = graph.policy_probs(policy)
    r = graph.risk[j - 1]
    out = [None] * (graph.horizon + 1)
    out[graph.horizon] = r[graph.horizon].copy()
    for k in range(graph.horizon - 1, -1, -1):
        pair_er = graph.transition_matrix(k) @ out[k + 1]
        out[k] = r[k] + (1.0 - r[k]) * np.bincount(graph.pair_node[k], weights=probs[k] * pair_er,
                                                   minlength=graph.n_nodes(k))
    return out


def flows_from_policy(graph: LayeredGraph, policy: Policy | list[np.ndarray], j: int) -> list[np.ndarray]:
    """Forward-propagate criterion-j flows: x(s,0,a) = pi(s0,a) and
    x(s,k,a) = pi(s_k,a) * sum of incoming x * T~_j."""
    _check_criterion(graph, j)
    probs = policy if isinstance(policy, list) else graph.policy_probs(policy)
    inflow = np.ones(1)
    out = []
    for k in range(graph.horizon):
        x = probs[k] * inflow[graph.pair_node[k]]
        out.append(x)
        if k + 1 < graph.horizon:
            inflow = graph.transition_matrix(k).T @ (x * graph.survival(j, k))
    return out


def flow_assignment(graph: LayeredGraph, policy: Policy) -> FlowAssignment:
    probs = graph.policy_probs(policy)
    return FlowAssignment({j: flows_from_policy(graph, probs, j) for j in range(graph.n_risks + 1)})


def conservation_residual(graph: LayeredGraph, flows: list[np.ndarray], j: int) -> float:
    """Max violation of the root and layer flow-balance equations."""
    worst = abs(flows[0].sum() - 1.0)
    for k in range(1, graph.horizon):
        inflow = graph.transition_matrix(k - 1).T @ (flows[k - 1] * graph.survival(j, k - 1))
        out = np.bincount(graph.pair_node[k], weights=flows[k], minlength=graph.n_nodes(k))
        if len(out):
            worst = max(worst, float(np.max(np.abs(out - inflow))))
    return worst


def risk_coefficients(graph: LayeredGraph, j: int) -> list[np.ndarray]:
    """Per-pair coefficient sum_s' T~_j(s,a,s') r_j(s') of x_j(s,k,a)."""
    r = graph.risk[j - 1]
    return [graph.survival(j, k) * (graph.transition_matrix(k) @ r[k + 1]) for k in range(graph.horizon)]


def exec_risk_linear(graph: LayeredGraph, flows: list[np.ndarray] | FlowAssignment, j: int,
                     check: bool = True) -> float:
    """Er_j(s_0) = r_j(s_0) + sum_{k,s,a,s'} r_j(s') x_j(s,k,a) T~_j(s,a,s').

    ``flows`` are the criterion-j flows (or a FlowAssignment); they must
    satisfy the balance equations to within 1e-6.
    """
    if isinstance(flows, FlowAssignment):
        flows = flows[j]
    if check:
        res = conservation_residual(graph, flows, j)
        if res > CONSERVATION_TOL:
            raise ValueError(f"flows violate conservation by {res:.3g}")
    coef = risk_coefficients(graph, j)
    total = graph.risk[j - 1][0][0] + sum(float(c @ x) for c, x in zip(coef, flows))
    return float(total)


@dataclass
class SampledRisk:
    estimate: float
    half_width: float
    n_samples: int


def _simulate(graph: LayeredGraph, probs: list[np.ndarray], j: int, n: int, rng: np.random.Generator):
    node = np.zeros(n, dtype=np.int64)
    failed = np.zeros(n, dtype=bool)
    r = graph.risk[j - 1]
    for k in range(graph.horizon + 1):
        failed |= rng.random(n) < r[k][node]
        if k == graph.horizon:
            break
        cum_pol = np.cumsum(probs[k])
        start = graph.node_ptr[k][node]
        end = graph.node_ptr[k][node + 1]
        base = np.where(start > 0, cum_pol[start - 1], 0.0)
        pair = np.searchsorted(cum_pol, base + rng.random(n) * (cum_pol[end - 1] - base), side="right")
        pair = np.clip(pair, start, end - 1)
        bad = probs[k][pair] == 0
        if bad.any():
            # round-off at a cumsum tie; fall back to the node's likeliest action
            pair[bad] = [int(np.argmax(probs[k][a:b])) + a for a, b in zip(start[bad], end[bad])]
        cum_arc = np.cumsum(graph.arc_prob[k])
        a0 = graph.arc_ptr[k][pair]
        a1 = graph.arc_ptr[k][pair + 1]
        abase = np.where(a0 > 0, cum_arc[a0 - 1], 0.0)
        arc = np.searchsorted(cum_arc, abase + rng.random(n) * (cum_arc[a1 - 1] - abase), side="right")
        arc = np.clip(arc, a0, a1 - 1)
        node = graph.arc_succ[k][arc]
    return failed


def exec_risk_sampled(graph: LayeredGraph, policy: Policy, j: int, n: int, seed: int = 0) -> SampledRisk:
    """Monte Carlo estimate of Er_j with a 99% normal-approximation half-width.

    Runs are simulated in fixed-size chunks, chunk ``c`` seeded by
    ``(seed, c)``, so results do not depend on how chunks are scheduled.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    probs = graph.policy_probs(policy)
    fails = 0
    for c, lo in enumerate(range(0, n, SAMPLE_CHUNK)):
        m = min(SAMPLE_CHUNK, n - lo)
        fails += int(_simulate(graph, probs, j, m, np.random.default_rng([seed, c])).sum())
    p = fails / n
    return SampledRisk(p, Z99 * float(np.sqrt(p * (1.0 - p) / n)), n)


@dataclass
class RiskReport:
    recursive: list[float]
    linear: list[float]
    sampled: list[SampledRisk | None] = field(default_factory=list)
    deltas: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        out = []
        for j, (rec, lin) in enumerate(zip(self.recursive, self.linear), start=1):
            row = {"criterion": j, "er_recursive": rec, "er_linear": lin,
                   "delta": self.deltas[j - 1] if self.deltas else None}
            smp = self.sampled[j - 1] if self.sampled else None
            if smp is not None:
                row.update(er_sampled=smp.estimate, half_width_99=smp.half_width, n_samples=smp.n_samples)
            out.append(row)
        return {"criteria": out}


def risk_report(graph: LayeredGraph, policy: Policy, n_samples: int = 0, seed: int = 0) -> RiskReport:
    probs = graph.policy_probs(policy)
    rec, lin, smp = [], [], []
    for j in range(1, graph.n_risks + 1):
        rec.append(exec_risk_recursive(graph, probs, j))
        lin.append(exec_risk_linear(graph, flows_from_policy(graph, probs, j), j))
        smp.append(exec_risk_sampled(graph, policy, j, n_samples, seed + j) if n_samples > 0 else None)
    return RiskReport(rec, lin, smp, [rc.delta for rc in graph.spec.risks])


def expected_value(graph: LayeredGraph, policy: Policy | list[np.ndarray], values: list[np.ndarray] | None = None) -> float:
    """E[sum_t v(S_t, A_t)] with per-pair values (default: utility)."""
    vals = graph.utility if values is None else values
    flows = flows_from_policy(graph, policy, 0)
    return float(sum(v @ x for v, x in zip(vals, flows)))
