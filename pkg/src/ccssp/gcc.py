"""Global chance constraints reduced to local ones by cost augmentation.

A global criterion bounds Pr(sum_t C(S_t, A_t) > P). Carrying the running
total g in the state turns "the run's total exceeds P" into "the run visits
a state with g > P", which the ordinary risk machinery handles.

Exact mode accumulates g with :class:`fractions.Fraction` (floats enter with
their exact binary value), so state identity never depends on rounding.
Discretized mode counts integer ticks of size K = eps * C_max / h with
per-step ticks ceil(C / K); the resulting chance constraint holds against
the inflated budget (1 + eps) * P.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable

from .model import GLOBAL, CostCriterion, ProblemSpec, RiskCriterion, Sense

DEFAULT_AUG_CAP = 200_000


class AugmentationBlowup(RuntimeError):
    """The augmented reachable set outgrew the cap; use reduce_discretized."""


@dataclass(frozen=True, order=True)
class AugmentedState:
    """Base state plus accumulated cost per global criterion.

    ``step`` is only set when some criterion has negative costs, in which
    case the violation can only be judged at the final layer.
    """

    base: object
    g: tuple
    step: int | None = None

    def __repr__(self):
        tail = f", k={self.step}" if self.step is not None else ""
        return f"<{self.base!r}, {tuple(str(v) for v in self.g)}{tail}>"


@dataclass(frozen=True)
class DiscretizationPlan:
    """Per-criterion tick sizes for the discretized reduction."""

    epsilon: float
    horizon: int
    c_max: tuple[Fraction, ...]
    tick: tuple[Fraction, ...]          # K_j
    strict: bool = False                # test against P instead of (1 + eps) P

    @property
    def tick_cap(self) -> int:
        return self.horizon * math.ceil(Fraction(self.horizon) / Fraction(self.epsilon))

    def ticks(self, j: int, c: float) -> int:
        """ceil(C / K_j), computed exactly."""
        return math.ceil(Fraction(c) / self.tick[j])

    def summary(self) -> dict:
        return {"epsilon": self.epsilon, "horizon": self.horizon, "tick_cap": self.tick_cap,
                "strict": self.strict,
                "criteria": [{"c_max": float(c), "K": float(k), "K_exact": str(k)}
                             for c, k in zip(self.c_max, self.tick)]}


def _globals(spec: ProblemSpec) -> tuple[CostCriterion, ...]:
    g = spec.global_costs
    if not g:
        raise ValueError("problem has no global chance criteria")
    return g


def reachable_pairs(spec: ProblemSpec):
    """(state, action) pairs usable within the horizon, by layer."""
    layer = {spec.initial_state}
    seen = set()
    for _ in range(spec.horizon):
        nxt = set()
        for s in layer:
            for a in spec.available_actions(s):
                succ = [t for t, p in spec.successors(s, a) if p > 0]
                if succ:
                    seen.add((s, a))
                    nxt.update(succ)
        layer = nxt
    return seen


def _has_negative(spec, crits, pairs):
    return [any(c.cost(s, a) < 0 for s, a in pairs) for c in crits]


def _augment(spec: ProblemSpec, crits, step_of: Callable, violated: Callable, neg: list[bool],
             tag: str) -> ProblemSpec:
    h = spec.horizon
    track_step = any(neg)
    base_succ = spec.successors

    def wrap(base, g, k):
        return AugmentedState(base, g, k if track_step else None)

    def successors(s: AugmentedState, a):
        inc = step_of(s.base, a)
        g = tuple(x + d for x, d in zip(s.g, inc))
        k = None if s.step is None else s.step + 1
        return [(wrap(t, g, k), p) for t, p in base_succ(s.base, a)]

    def make_risk(j):
        def risk(s: AugmentedState) -> float:
            if neg[j] and s.step != h:
                return 0.0
            return 1.0 if violated(j, s.g[j]) else 0.0
        return risk

    risks = tuple(RiskCriterion(lambda s, rc=rc: rc.risk(s.base), rc.delta, rc.name) for rc in spec.risks)
    risks += tuple(RiskCriterion(make_risk(j), c.delta, c.name or f"global[{j}]") for j, c in enumerate(crits))
    kept = tuple(CostCriterion(lambda s, a, c=c: c.cost(s.base, a), c.bound, c.kind, c.delta, c.name)
                 for c in spec.costs if c.kind != GLOBAL)
    zero = tuple(0 for _ in crits) if tag == "discretized" else tuple(Fraction(0) for _ in crits)
    actions = None if spec.actions is None else (lambda s: spec.actions(s.base))
    return ProblemSpec(successors=successors, utility=lambda s, a: spec.utility(s.base, a),
                       initial_state=wrap(spec.initial_state, zero, 0), horizon=h,
                       n_actions=spec.n_actions, sense=spec.sense, risks=risks, costs=kept,
                       actions=actions, action_names=spec.action_names,
                       meta={**spec.meta, "reduction": tag, "base_spec": spec})


def augmented_size(spec: ProblemSpec, cap: int = DEFAULT_AUG_CAP) -> int:
    """Number of reachable augmented nodes, or raise once ``cap`` is exceeded."""
    layer = {spec.initial_state}
    total = 1
    for _ in range(spec.horizon):
        nxt = set()
        for s in layer:
            for a in spec.available_actions(s):
                nxt.update(t for t, p in spec.successors(s, a) if p > 0)
        total += len(nxt)
        if total > cap:
            raise AugmentationBlowup(f"augmented state space exceeds the cap of {cap} nodes; "
                                     "use reduce_discretized instead")
        layer = nxt
    return total


def reduce_exact(spec: ProblemSpec, cap: int = DEFAULT_AUG_CAP) -> ProblemSpec:
    """CC-SSP whose risk criteria mirror the global chance criteria exactly.

    Local risk criteria keep their positions; global criterion j becomes
    risk criterion ``len(spec.risks) + j + 1`` with the same Δ and
    r(<s, g>) = 1 iff g_j > P_j. Expected-cost criteria carry over.

    Raises
    ------
    AugmentationBlowup
        If more than ``cap`` augmented nodes are reachable.
    """
    crits = _globals(spec)
    pairs = reachable_pairs(spec)
    neg = _has_negative(spec, crits, pairs)
    bounds = [Fraction(c.bound) for c in crits]

    def step_of(s, a):
        return tuple(Fraction(c.cost(s, a)) for c in crits)

    out = _augment(spec, crits, step_of, lambda j, g: g > bounds[j], neg, "exact")
    augmented_size(out, cap)
    return out


def plan_discretization(spec: ProblemSpec, epsilon: float, strict: bool = False) -> DiscretizationPlan:
    """K_j = eps * C_max_j / h with C_max_j the largest reachable |C_j|.

    Raises
    ------
    ValueError
        If eps is outside (0, 1), or C_max > P for a
        criterion with non-negative costs (the normalization the (1 + eps)
        guarantee relies on).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    crits = _globals(spec)
    pairs = reachable_pairs(spec)
    neg = _has_negative(spec, crits, pairs)
    cmax, ticks = [], []
    for j, c in enumerate(crits):
        m = max((abs(Fraction(c.cost(s, a))) for s, a in pairs), default=Fraction(0))
        if m == 0:
            m = Fraction(1)           # all-zero costs: any positive tick is lossless
        if not neg[j] and m > Fraction(c.bound):
            raise ValueError(f"criterion {j}: C_max = {float(m)} exceeds P = {c.bound}; "
                             "rescale so that every step cost is at most the budget")
        cmax.append(m)
        ticks.append(Fraction(epsilon) * m / spec.horizon)
    return DiscretizationPlan(epsilon, spec.horizon, tuple(cmax), tuple(ticks), strict)


def reduce_discretized(spec: ProblemSpec, plan: DiscretizationPlan | float, strict: bool = False) -> ProblemSpec:
    """CC-SSP over integer tick counts.

    r(<s, t>) = 1 iff K_j * t_j > (1 + eps) P_j, or > P_j when ``strict``.
    ``plan`` may be given as the bare epsilon.
    """
    if not isinstance(plan, DiscretizationPlan):
        plan = plan_discretization(spec, float(plan), strict)
    crits = _globals(spec)
    pairs = reachable_pairs(spec)
    neg = _has_negative(spec, crits, pairs)
    factor = Fraction(1) if plan.strict else 1 + Fraction(plan.epsilon)
    limits = [factor * Fraction(c.bound) for c in crits]

    def step_of(s, a):
        return tuple(plan.ticks(j, c.cost(s, a)) for j, c in enumerate(crits))

    out = _augment(spec, crits, step_of, lambda j, t: plan.tick[j] * t > limits[j], neg, "discretized")
    return replace(out, meta={**out.meta, "plan": plan})


def max_ticks(graph) -> list[int]:
    """Largest |tick| per criterion over every node of a discretized graph."""
    best = None
    for layer in graph.states:
        for s in layer:
            v = [abs(int(t)) for t in s.g]
            best = v if best is None else [max(a, b) for a, b in zip(best, v)]
    return best or []


# -- verification ----------------------------------------------------------------

@dataclass
class GuaranteeRow:
    label: str
    exact_status: str
    exact_objective: float | None
    disc_status: str
    disc_objective: float | None
    inflated_chance: list[float]
    deltas: list[float]
    max_tick: list[int]
    tick_cap: int
    super_optimal: bool
    chance_ok: bool


@dataclass
class GuaranteeReport:
    epsilon: float
    rows: list[GuaranteeRow] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)


def _specs(tiny_spec, n_random, seed):
    if isinstance(tiny_spec, ProblemSpec):
        return [("spec", tiny_spec)]
    if callable(tiny_spec):
        return [(f"seed={seed + i}", tiny_spec(seed + i)) for i in range(n_random)]
    return [(f"#{i}", s) for i, s in enumerate(tiny_spec)]


def inflated_chance(reduced: ProblemSpec, policy, base_spec: ProblemSpec, factor: float) -> list[float]:
    """Exact Pr(sum C_j > factor * P_j) of a policy over a reduced problem,
    from run enumeration with the original (not discretized) costs."""
    from .oracle import enumerate_runs

    crits = base_spec.global_costs
    lifted = tuple(CostCriterion(lambda s, a, c=c: c.cost(s.base, a), c.bound, c.kind, c.delta) for c in crits)
    runs = enumerate_runs(reduced, policy, exact=True, costs=lifted)
    out = []
    for j, c in enumerate(crits):
        limit = Fraction(factor) * Fraction(c.bound)
        out.append(float(sum((r.prob for r in runs if r.costs[j] > limit), Fraction(0))))
    return out


def verify_augmentation_guarantee(tiny_spec, epsilon: float = 0.1, n_random: int = 20, seed: int = 0,
                                  solver_config=None) -> GuaranteeReport:
    """Check super-optimality and the (1 + eps) chance guarantee.

    ``tiny_spec`` is one problem, an iterable of problems, or a callable
    ``seed -> problem`` sampled ``n_random`` times. The exact optimum comes
    from the brute-force oracle on the original problem; the discretized
    optimum from the ILP on the reduced one.
    """
    from .graph import expand
    from .ilp import InfeasibleAtRoot, build_ilp, extract_policy
    from .oracle import brute_force_optimal
    from .solver import solve_milp

    report = GuaranteeReport(epsilon)
    for label, spec in _specs(tiny_spec, n_random, seed):
        exact = brute_force_optimal(spec)
        plan = plan_discretization(spec, epsilon)
        reduced = reduce_discretized(spec, plan)
        g = expand(reduced)
        try:
            model = build_ilp(g, reduced)
            sol = solve_milp(model, solver_config)
        except InfeasibleAtRoot:
            sol = None
        ok_disc = sol is not None and sol.ok
        d_obj = sol.objective if ok_disc else None
        if exact.status == "optimal":
            if not ok_disc:
                sup = False
            elif spec.sense == Sense.MAX:
                sup = d_obj >= exact.objective - 1e-6
            else:
                sup = d_obj <= exact.objective + 1e-6
        else:
            sup = True
        chance, chance_ok = [], True
        deltas = [c.delta for c in spec.global_costs]
        if ok_disc:
            policy = extract_policy(sol.x, g, model)
            chance = inflated_chance(reduced, policy, spec, 1 + epsilon)
            chance_ok = all(p <= d + 1e-9 for p, d in zip(chance, deltas))
        mt = max_ticks(g)
        row = GuaranteeRow(label, exact.status, exact.objective, sol.status if sol is not None else "infeasible",
                           d_obj, chance, deltas, mt, plan.tick_cap, sup, chance_ok)
        report.rows.append(row)
        if not sup:
            report.violations.append(f"{label}: discretized optimum {d_obj} not super-optimal vs {exact.objective}")
        if not chance_ok:
            report.violations.append(f"{label}: Pr(sum C > (1+eps)P) = {chance} exceeds {deltas}")
        if any(t > plan.tick_cap for t in mt):
            report.violations.append(f"{label}: tick {mt} exceeds cap {plan.tick_cap}")
    return report
