"""Problem tuple, criteria, policies and model validation.

A problem is described lazily: transitions are a successor generator
``successors(state, action) -> [(next_state, prob), ...]`` so that huge
state spaces (the 10^8-cell grid) are never materialized. States are opaque
hashable ids; anything orderable gets deterministic graph ordering.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Mapping, Sequence

import numpy as np

StateId = Hashable
ActionId = int

PROB_TOL = 1e-12
POLICY_TOL = 1e-9


class Sense(str, enum.Enum):
    MAX = "max"
    MIN = "min"


EXPECTED = "expected"
GLOBAL = "global"


class PolicyMismatch(KeyError):
    """A policy was queried at a node outside its domain."""


@dataclass(frozen=True)
class RiskCriterion:
    """Local chance constraint: Pr(any visited state fails) <= delta.

    ``risk(s)`` is the failure probability r(s) of state ``s``.
    """

    risk: Callable[[StateId], float]
    delta: float
    name: str = ""


@dataclass(frozen=True)
class CostCriterion:
    """Secondary cost with bound ``bound``.

    ``kind == EXPECTED`` bounds the expected cumulative cost; ``kind ==
    GLOBAL`` bounds Pr(cumulative cost > bound) by ``delta``.
    """

    cost: Callable[[StateId, ActionId], float]
    bound: float
    kind: str = EXPECTED
    delta: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in (EXPECTED, GLOBAL):
            raise ValueError(f"unknown cost criterion kind {self.kind!r}")
        if self.kind == GLOBAL and self.delta is None:
            raise ValueError("a global chance criterion needs a delta")


@dataclass(frozen=True)
class ProblemSpec:
    """Finite-horizon CC-SSP (optionally C-SSP / GCC-SSP) instance.

    Risk criteria are numbered j = 1..len(risks) in order; j = 0 is the
    utility flow.
    """

    successors: Callable[[StateId, ActionId], Sequence[tuple[StateId, float]]]
    utility: Callable[[StateId, ActionId], float]
    initial_state: StateId
    horizon: int
    n_actions: int
    sense: Sense = Sense.MIN
    risks: tuple[RiskCriterion, ...] = ()
    costs: tuple[CostCriterion, ...] = ()
    actions: Callable[[StateId], Sequence[ActionId]] | None = None
    action_names: tuple[str, ...] | None = None
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sense", Sense(self.sense))
        object.__setattr__(self, "risks", tuple(self.risks))
        object.__setattr__(self, "costs", tuple(self.costs))

    def available_actions(self, s: StateId) -> Sequence[ActionId]:
        if self.actions is not None:
            return self.actions(s)
        return range(self.n_actions)

    @property
    def expected_costs(self) -> tuple[CostCriterion, ...]:
        return tuple(c for c in self.costs if c.kind == EXPECTED)

    @property
    def global_costs(self) -> tuple[CostCriterion, ...]:
        return tuple(c for c in self.costs if c.kind == GLOBAL)

    def better(self, a: float, b: float, tol: float = 0.0) -> bool:
        """True when objective ``a`` is strictly better than ``b``."""
        if self.sense == Sense.MAX:
            return a > b + tol
        return a < b - tol


class TabularModel:
    """Explicit transition/utility tables keyed by ``(state, action)``.

    Used for small instances and as the interchange form of problem files.
    """

    def __init__(self, transitions: Mapping[tuple[StateId, ActionId], Sequence[tuple[StateId, float]]],
                 utilities: Mapping[tuple[StateId, ActionId], float] | None = None):
        self.transitions = {k: [(s, float(p)) for s, p in v] for k, v in transitions.items()}
        self.utilities = dict(utilities or {})
        acts: dict[StateId, list[ActionId]] = {}
        for s, a in self.transitions:
            acts.setdefault(s, []).append(a)
        self._actions = {s: sorted(v) for s, v in acts.items()}

    def successors(self, s, a):
        return self.transitions.get((s, a), [])

    def utility(self, s, a):
        return self.utilities.get((s, a), 0.0)

    def actions(self, s):
        return self._actions.get(s, [])


def tabular_problem(transitions, utilities, initial_state, horizon, *, sense=Sense.MIN,
                    risks=(), costs=(), n_actions=None, **kw) -> ProblemSpec:
    table = TabularModel(transitions, utilities)
    if n_actions is None:
        n_actions = 1 + max((a for _, a in table.transitions), default=-1)
    return ProblemSpec(successors=table.successors, utility=table.utility,
                       initial_state=initial_state, horizon=horizon, n_actions=n_actions,
                       sense=sense, risks=tuple(risks), costs=tuple(costs),
                       actions=table.actions, meta={"table": table, **kw.pop("meta", {})}, **kw)


def risk_from_table(table: Mapping[StateId, float], default: float = 0.0) -> Callable[[StateId], float]:
    table = dict(table)

    def risk(s):
        return table.get(s, default)

    risk.table = table
    return risk


def cost_from_table(table: Mapping[tuple[StateId, ActionId], float], default: float = 0.0):
    table = dict(table)

    def cost(s, a):
        return table.get((s, a), default)

    cost.table = table
    return cost


def validate_problem(spec: ProblemSpec, node_cap: int = 1_000_000) -> list[str]:
    """Check every model invariant on the states reachable within the horizon.

    Returns human-readable violation strings; an empty list means the
    problem is well formed. Never raises on bad models.
    """
    out: list[str] = []
    if not isinstance(spec.horizon, (int, np.integer)) or spec.horizon < 1:
        out.append(f"horizon h={spec.horizon} must be an integer >= 1")
        return out
    for j, rc in enumerate(spec.risks, start=1):
        if not 0.0 <= rc.delta <= 1.0:
            out.append(f"risk criterion {j}: Δ out of [0,1] (Δ={rc.delta})")
    for j, cc in enumerate(spec.costs, start=1):
        if cc.kind == GLOBAL and not 0.0 <= cc.delta <= 1.0:
            out.append(f"cost criterion {j}: Δ out of [0,1] (Δ={cc.delta})")
        if cc.kind == EXPECTED and cc.bound < 0:
            out.append(f"cost criterion {j}: negative budget P={cc.bound}")

    layer = [spec.initial_state]
    seen = 0
    for k in range(spec.horizon + 1):
        nxt: dict[StateId, None] = {}
        for s in layer:
            for j, rc in enumerate(spec.risks, start=1):
                r = rc.risk(s)
                if not 0.0 <= r <= 1.0:
                    out.append(f"risk criterion {j}: r({s!r})={r} out of [0,1]")
            if k == spec.horizon:
                continue
            n_ok = 0
            for a in spec.available_actions(s):
                if not 0 <= a < spec.n_actions:
                    out.append(f"action {a} at state {s!r} outside 0..{spec.n_actions - 1}")
                    continue
                succ = list(spec.successors(s, a))
                if not succ:
                    continue
                n_ok += 1
                ids = [t for t, _ in succ]
                if len(set(ids)) != len(ids):
                    out.append(f"(s={s!r}, a={a}): duplicate successor ids")
                probs = [p for _, p in succ]
                if any(p < 0 for p in probs):
                    out.append(f"(s={s!r}, a={a}): negative transition probability")
                total = math.fsum(probs)
                if abs(total - 1.0) > PROB_TOL:
                    out.append(f"(s={s!r}, a={a}): probabilities sum to {total!r}, not 1")
                u = spec.utility(s, a)
                if not u >= 0:
                    out.append(f"(s={s!r}, a={a}): negative utility U={u}")
                for j, cc in enumerate(spec.costs, start=1):
                    if cc.kind == EXPECTED and not cc.cost(s, a) >= 0:
                        out.append(f"cost criterion {j}: negative cost at (s={s!r}, a={a})")
                for t, p in succ:
                    if p > 0:
                        nxt[t] = None
            if n_ok == 0:
                where = "initial state" if k == 0 else f"state {s!r} at step {k}"
                out.append(f"{where} has no action with successors")
        seen += len(nxt)
        if seen > node_cap:
            out.append(f"reachable set exceeds node cap {node_cap}; validation truncated")
            break
        layer = list(nxt)
    return out


@dataclass(frozen=True)
class Policy:
    """Time-dependent policy over (state, step) nodes.

    ``table[(s, k)]`` is an action id (deterministic) or a mapping
    ``{action: prob}`` (stochastic). ``fallback`` lists nodes whose entry
    was filled in without solver support (zero-flow nodes).
    """

    table: Mapping[tuple[StateId, int], Any]
    stochastic: bool = False
    fallback: frozenset = frozenset()

    @property
    def kind(self) -> str:
        return "stochastic" if self.stochastic else "deterministic"

    def distribution(self, s: StateId, k: int) -> dict[ActionId, float]:
        try:
            entry = self.table[(s, k)]
        except KeyError:
            raise PolicyMismatch(f"policy has no entry for state {s!r} at step {k}") from None
        if self.stochastic:
            return dict(entry)
        return {int(entry): 1.0}

    def __contains__(self, node):
        return node in self.table


def _stable_digest(s: StateId) -> int:
    return int.from_bytes(hashlib.blake2b(repr(s).encode(), digest_size=8).digest(), "little")


def policy_action(policy: Policy, s: StateId, k: int, rng_seed: int) -> ActionId:
    """Action taken at node ``(s, k)``; stochastic policies sample from a
    generator seeded by ``(rng_seed, k, digest(s))``."""
    if not policy.stochastic:
        try:
            return int(policy.table[(s, k)])
        except KeyError:
            raise PolicyMismatch(f"policy has no entry for state {s!r} at step {k}") from None
    dist = policy.distribution(s, k)
    acts = sorted(dist)
    probs = np.array([dist[a] for a in acts], dtype=float)
    rng = np.random.default_rng([int(rng_seed) & (2**63 - 1), int(k), _stable_digest(s)])
    u = rng.random() * probs.sum()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return acts[min(idx, len(acts) - 1)]
