"""Brute-force ground truth for tiny instances.

Works straight from the problem's successor generator (no layered graph, no
flows): runs are enumerated explicitly and every deterministic policy over
the nodes it actually reaches is tried.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from .model import GLOBAL, CostCriterion, Policy, ProblemSpec, Sense

RUN_CAP = 1_000_000
POLICY_CAP = 10_000_000
FEAS_TOL = 1e-12


class OracleCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Run:
    states: tuple
    prob: float
    utility: float
    costs: tuple          # cumulative cost per spec.costs entry
    survival: tuple       # prod_t (1 - r_j(s_t)) per risk criterion, t = 0..h


def _spec_of(obj) -> ProblemSpec:
    return obj if isinstance(obj, ProblemSpec) else obj.spec


def _num(exact):
    return Fraction if exact else float


def _succ(spec, s, a, num):
    merged = {}
    for t, p in spec.successors(s, a):
        if p > 0:
            merged[t] = merged.get(t, 0) + num(p)
    return list(merged.items())


def enumerate_runs(problem, policy: Policy | dict, cap: int = RUN_CAP, exact: bool = False,
                   costs: tuple[CostCriterion, ...] | None = None) -> list[Run]:
    """Every positive-probability run of a deterministic policy.

    ``problem`` is a ProblemSpec or anything with a ``.spec``; ``costs``
    overrides which cost criteria are accumulated.
    """
    spec = _spec_of(problem)
    table = policy.table if isinstance(policy, Policy) else policy
    if isinstance(policy, Policy) and policy.stochastic:
        raise ValueError("run enumeration needs a deterministic policy")
    costs = spec.costs if costs is None else costs
    num = _num(exact)
    s0 = spec.initial_state
    runs = [((s0,), num(1), num(0), tuple(num(0) for _ in costs),
             tuple(1 - num(rc.risk(s0)) for rc in spec.risks))]
    for k in range(spec.horizon):
        nxt = []
        for states, p, u, cst, surv in runs:
            s = states[-1]
            a = int(table[(s, k)])
            du = num(spec.utility(s, a))
            dc = tuple(c + num(cc.cost(s, a)) for c, cc in zip(cst, costs))
            for t, q in _succ(spec, s, a, num):
                nxt.append((states + (t,), p * q, u + du, dc,
                            tuple(v * (1 - num(rc.risk(t))) for v, rc in zip(surv, spec.risks))))
        if len(nxt) > cap:
            raise OracleCapExceeded(f"more than {cap} runs")
        runs = nxt
    return [Run(*r) for r in runs]


def exact_chance(problem, policy, criterion: CostCriterion, exact: bool = False) -> float:
    """Pr(sum_t C(S_t, pi(S_t)) > P), strict inequality, by run enumeration."""
    runs = enumerate_runs(problem, policy, exact=exact, costs=(criterion,))
    bound = Fraction(criterion.bound) if exact else criterion.bound
    return sum((r.prob for r in runs if r.costs[0] > bound), 0.0 if not exact else Fraction(0))


def failure_probability(runs: list[Run], j: int):
    """1 - sum_runs p(run) prod_t (1 - r_j(s_t)) for risk criterion j (1-based)."""
    return 1 - sum(r.prob * r.survival[j - 1] for r in runs)


@dataclass
class OracleResult:
    status: str
    objective: float | None
    policy: dict | None
    feasible_count: int
    evaluated: int


def brute_force_optimal(spec: ProblemSpec, cap: int = POLICY_CAP, tol: float = FEAS_TOL) -> OracleResult:
    """Best deterministic policy by exhaustive search.

    Policies are enumerated layer by layer over the states that the partial
    policy reaches with positive probability; for each complete policy the
    runs are enumerated and every local risk, expected-cost and global
    chance constraint is checked exactly. Ties keep the lexicographically
    first action assignment.
    """
    h = spec.horizon
    costs = spec.costs
    best = {"obj": None, "policy": None}
    counts = {"feasible": 0, "evaluated": 0}
    s0 = spec.initial_state
    init = [(s0, 1.0, 0.0, tuple(0.0 for _ in costs), tuple(1.0 - rc.risk(s0) for rc in spec.risks))]
    succ_cache: dict = {}

    def succ(s, a):
        key = (s, a)
        if key not in succ_cache:
            succ_cache[key] = _succ(spec, s, a, float)
        return succ_cache[key]

    def evaluate(runs, assignment):
        counts["evaluated"] += 1
        if counts["evaluated"] > cap:
            raise OracleCapExceeded(f"more than {cap} policies")
        obj = math.fsum(p * u for _, p, u, _, _ in runs)
        for j, rc in enumerate(spec.risks):
            fail = 1.0 - math.fsum(p * sv[j] for _, p, _, _, sv in runs)
            if fail > rc.delta + tol:
                return
        for i, cc in enumerate(costs):
            if cc.kind == GLOBAL:
                viol = math.fsum(p for _, p, _, c, _ in runs if c[i] > cc.bound)
                if viol > cc.delta + tol:
                    return
            else:
                if math.fsum(p * c[i] for _, p, _, c, _ in runs) > cc.bound + tol:
                    return
        counts["feasible"] += 1
        if best["obj"] is None or spec.better(obj, best["obj"], 1e-12):
            best["obj"] = obj
            best["policy"] = dict(assignment)

    def search(k, runs, assignment):
        if k == h:
            evaluate(runs, assignment)
            return
        reached = sorted({r[0] for r in runs}, key=_order_key)
        choices = []
        for s in reached:
            acts = [a for a in spec.available_actions(s) if succ(s, a)]
            choices.append(sorted(acts))
        for combo in itertools.product(*choices):
            pol = dict(zip(reached, combo))
            nxt = []
            for s, p, u, cst, surv in runs:
                a = pol[s]
                du = spec.utility(s, a)
                dc = tuple(c + cc.cost(s, a) for c, cc in zip(cst, costs))
                for t, q in succ(s, a):
                    nxt.append((t, p * q, u + du, dc,
                                tuple(v * (1.0 - rc.risk(t)) for v, rc in zip(surv, spec.risks))))
            assignment.update({(s, k): a for s, a in pol.items()})
            search(k + 1, nxt, assignment)
            for s in pol:
                del assignment[(s, k)]

    search(0, init, {})
    if best["obj"] is None:
        return OracleResult("infeasible", None, None, counts["feasible"], counts["evaluated"])
    return OracleResult("optimal", best["obj"], best["policy"], counts["feasible"], counts["evaluated"])


def _order_key(s):
    return (0, s) if isinstance(s, (int, float)) else (1, repr(s))


def dp_optimal(spec: ProblemSpec) -> float:
    """Unconstrained optimum by backward induction over reachable layers."""
    layers = [{spec.initial_state}]
    for _ in range(spec.horizon):
        nxt = set()
        for s in layers[-1]:
            for a in spec.available_actions(s):
                nxt.update(t for t, p in spec.successors(s, a) if p > 0)
        layers.append(nxt)
    value = {s: 0.0 for s in layers[spec.horizon]}
    pick = max if spec.sense == Sense.MAX else min
    for k in range(spec.horizon - 1, -1, -1):
        new = {}
        for s in layers[k]:
            opts = [spec.utility(s, a) + sum(p * value[t] for t, p in spec.successors(s, a) if p > 0)
                    for a in spec.available_actions(s) if spec.successors(s, a)]
            new[s] = pick(opts)
        value = new
    return value[spec.initial_state]


def complete_policy(graph, partial: dict) -> Policy:
    """Extend an oracle policy (reached nodes only) to every graph node."""
    table = {}
    for k in range(graph.horizon):
        for i, s in enumerate(graph.states[k]):
            if (s, k) in partial:
                table[(s, k)] = int(partial[(s, k)])
            else:
                table[(s, k)] = int(graph.pair_action[k][graph.node_ptr[k][i]])
    return Policy(table)
