"""Randomized rounding of the LP relaxation into a deterministic policy.

One sweep visits layers k = 0..h-1 and, at every node carrying selector mass,
samples an action with probability z(s,k,a) / sum_a z(s,k,a). Downstream
flows are then re-propagated under the partly fixed policy. Re-propagation
rescales a node's flows but never changes its z ratios, so a sweep is
equivalent to sampling every node independently and pushing the flows
forward once under the resulting policy; that is how it is computed here.
A sweep whose policy violates a risk budget is discarded and the next one
starts again from the LP solution with fresh randomness.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .graph import LayeredGraph, expand
from .ilp import ModelIR, SolveCriteria, _fallback_action, build_ilp
from .model import Policy, ProblemSpec, Sense
from .risk import exec_risk_linear, exec_risk_recursive, expected_value, flows_from_policy
from .solver import Solution, SolverConfig, solve_lp, solve_milp

RISK_TOL = 1e-9
MASS_TOL = 1e-12


@dataclass(frozen=True)
class RoundingConfig:
    seed: int = 0
    max_outer_iterations: int = 1000
    record_trace: bool = False

    def __post_init__(self):
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be at least 1")


@dataclass
class RoundingOutcome:
    policy: Policy
    objective: float
    iterations: int
    risks: tuple[float, ...]
    expected_costs: tuple[float, ...] = ()
    trace: list = field(default_factory=list)


class NoFeasibleRounding(RuntimeError):
    """Every sweep violated some risk budget; ``best`` is the sweep with the
    smallest worst-case violation."""

    def __init__(self, message, best: RoundingOutcome | None):
        super().__init__(message)
        self.best = best


def selector_masses(x: np.ndarray, graph: LayeredGraph, model: ModelIR) -> list[np.ndarray]:
    """Per-pair sampling weights from an LP point.

    The selectors are free of the objective, so an LP optimum may leave them
    anywhere in [max_j x_j, 1]. They are snapped to max_j x_j, the tightest
    value the binding rows allow; this leaves the LP point optimal and makes
    the weights a function of the flows alone.
    """
    out = []
    for k in range(graph.horizon):
        w = np.max(np.stack([x[xj[k]] for xj in model.x_index]), axis=0)
        w = np.clip(w, 0.0, None)
        w[w < MASS_TOL] = 0.0
        out.append(w)
    return out


def sample_policy(graph: LayeredGraph, masses: list[np.ndarray], rng: np.random.Generator):
    """Sample one action per node proportionally to ``masses``.

    Returns per-pair 0/1 probability arrays and the set of (layer, node)
    pairs that had no mass and received the fallback action instead.
    """
    probs, fallback = [], set()
    for k in range(graph.horizon):
        m = masses[k]
        ptr = graph.node_ptr[k]
        n = graph.n_nodes(k)
        start, end = ptr[:-1], ptr[1:]
        cum = np.cumsum(m)
        base = np.where(start > 0, cum[start - 1], 0.0)
        tot = cum[end - 1] - base
        u = rng.random(n)
        pick = np.searchsorted(cum, base + u * tot, side="right")
        pick = np.clip(pick, start, end - 1)
        p = np.zeros(len(m))
        for i in range(n):
            if tot[i] <= MASS_TOL:
                a = _fallback_action(graph, k, i)
                q = int(start[i]) + int(np.flatnonzero(graph.pair_action[k][start[i]:end[i]] == a)[0])
                fallback.add((k, i))
            else:
                q = int(pick[i])
                if m[q] == 0.0:
                    # cumsum tie at a zero-mass pair: take the next pair that has mass
                    q = int(start[i]) + int(np.flatnonzero(m[start[i]:end[i]] > 0)[0])
            p[q] = 1.0
        probs.append(p)
    return probs, fallback


def _to_policy(graph: LayeredGraph, probs, fallback) -> Policy:
    table = {}
    for k in range(graph.horizon):
        acts = graph.pair_action[k]
        for i, s in enumerate(graph.states[k]):
            lo, hi = int(graph.node_ptr[k][i]), int(graph.node_ptr[k][i + 1])
            table[(s, k)] = int(acts[lo + int(np.argmax(probs[k][lo:hi]))])
    fb = frozenset((graph.states[k][i], k) for k, i in fallback)
    return Policy(table, fallback=fb)


def round_solution(lp_solution: Solution | np.ndarray, graph: LayeredGraph, spec: ProblemSpec | None = None,
                   criteria: SolveCriteria | None = None, config: RoundingConfig | None = None,
                   model: ModelIR | None = None) -> RoundingOutcome:
    """Round an LP-relaxation optimum into a deterministic, risk-feasible policy.

    ``model`` is the relaxed model the LP point belongs to; it is rebuilt
    from ``graph`` when omitted. Only the risk rows are checked; expected
    cost budgets are reported in the outcome but may be exceeded.

    Raises
    ------
    NoFeasibleRounding
        After ``max_outer_iterations`` sweeps without a feasible policy.
    """
    spec = graph.spec if spec is None else spec
    criteria = SolveCriteria.from_spec(spec) if criteria is None else criteria
    config = config or RoundingConfig()
    if model is None:
        model = build_ilp(graph, spec, criteria, relaxed=True)
    x = lp_solution.x if isinstance(lp_solution, Solution) else np.asarray(lp_solution, dtype=float)
    if x is None:
        raise ValueError("LP solution carries no point")
    if model.violation(x) > 1e-6:
        raise ValueError(f"LP point violates the relaxation by {model.violation(x):.3g}")
    masses = selector_masses(x, graph, model)
    rng = np.random.default_rng(config.seed)
    deltas = [rc.delta for rc in criteria.risks]
    cost_vals = [graph.pair_values(cc.cost) for cc in criteria.expected_costs]
    trace = []
    best, best_excess = None, np.inf
    for it in range(1, config.max_outer_iterations + 1):
        probs, fallback = sample_policy(graph, masses, rng)
        risks = tuple(exec_risk_linear(graph, flows_from_policy(graph, probs, j), j)
                      for j in range(1, graph.n_risks + 1))
        excess = max((r - d for r, d in zip(risks, deltas)), default=-np.inf)
        if config.record_trace:
            trace.append({"iteration": it, "risks": risks, "feasible": excess <= RISK_TOL})
        if excess <= RISK_TOL:
            # independent re-check with the recursive evaluator
            rec = tuple(exec_risk_recursive(graph, probs, j) for j in range(1, graph.n_risks + 1))
            if all(r <= d + RISK_TOL for r, d in zip(rec, deltas)):
                return RoundingOutcome(_to_policy(graph, probs, fallback), expected_value(graph, probs), it, rec,
                                       tuple(expected_value(graph, probs, v) for v in cost_vals), trace)
        if excess < best_excess:
            best_excess = excess
            best = RoundingOutcome(_to_policy(graph, probs, fallback), expected_value(graph, probs), it, risks,
                                   tuple(expected_value(graph, probs, v) for v in cost_vals), trace)
    raise NoFeasibleRounding(f"no risk-feasible rounding in {config.max_outer_iterations} sweeps "
                             f"(best excess {best_excess:.3g})", best)


def approximation_ratio(spec: ProblemSpec, ilp_objective: float, rounded_objective: float) -> float:
    """Rounding quality in (0, 1]: rounded/ILP for max sense, ILP/rounded for min."""
    num, den = (rounded_objective, ilp_objective) if spec.sense == Sense.MAX else (ilp_objective, rounded_objective)
    if den == 0.0:
        return 1.0 if num == 0.0 else math.inf
    return num / den


@dataclass
class TrialRow:
    trial: int
    seed: int
    ratio: float
    iterations: int
    objective: float
    seconds: float
    risks: tuple[float, ...]


@dataclass
class RatioExperiment:
    mean: float
    ci_half_width: float
    min_ratio: float
    trials: list[TrialRow]
    ilp_objective: float
    ilp_seconds: float
    lp_seconds: float
    confidence: float

    def to_csv(self, fh=None, timing: bool = True) -> str:
        """Trial table as CSV (columns trial, seed, ratio, iterations, risk_1..);
        ``timing=False`` drops wall-clock columns for byte-stable output."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        q = len(self.trials[0].risks) if self.trials else 0
        head = ["trial", "seed", "ratio", "iterations"] + [f"risk_{j}" for j in range(1, q + 1)] + ["objective"]
        if timing:
            head.append("seconds")
        w.writerow(head)
        for t in self.trials:
            row = [t.trial, t.seed, repr(t.ratio), t.iterations] + [repr(r) for r in t.risks] + [repr(t.objective)]
            if timing:
                row.append(f"{t.seconds:.6f}")
            w.writerow(row)
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def trial_seeds(seed: int, n: int) -> list[int]:
    return [int(v) for v in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint32)]


def approximation_ratio_experiment(spec: ProblemSpec, n_trials: int = 100, seed: int = 0, confidence: float = 0.99,
                                   solver_config: SolverConfig | None = None, graph: LayeredGraph | None = None,
                                   max_outer_iterations: int = 1000) -> RatioExperiment:
    """Round the same LP ``n_trials`` times and compare with the ILP optimum.

    The LP is solved once; each trial's ``seconds`` is that LP time plus
    its own sampling time, i.e. the cost of one LP-and-round run.
    The confidence half-width uses Student's t (NaN for a single trial).
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    graph = expand(spec) if graph is None else graph
    config = solver_config or SolverConfig()
    ilp = build_ilp(graph, spec)
    t0 = time.perf_counter()
    sol = solve_milp(ilp, config)
    ilp_seconds = time.perf_counter() - t0
    if not sol.ok:
        raise ValueError(f"ILP status {sol.status}: approximation ratio undefined")
    relaxed = build_ilp(graph, spec, relaxed=True)
    t0 = time.perf_counter()
    lp = solve_lp(relaxed, config)
    lp_seconds = time.perf_counter() - t0
    if not lp.ok:
        raise ValueError(f"LP status {lp.status}")
    rows = []
    for t, s in enumerate(trial_seeds(seed, n_trials)):
        t1 = time.perf_counter()
        out = round_solution(lp, graph, spec, config=RoundingConfig(seed=s, max_outer_iterations=max_outer_iterations),
                             model=relaxed)
        dt = lp_seconds + time.perf_counter() - t1
        rows.append(TrialRow(t, s, approximation_ratio(spec, sol.objective, out.objective), out.iterations,
                             out.objective, dt, out.risks))
    ratios = np.array([r.ratio for r in rows])
    mean = float(ratios.mean())
    if n_trials > 1:
        half = float(stats.t.ppf(0.5 + confidence / 2, n_trials - 1) * ratios.std(ddof=1) / math.sqrt(n_trials))
    else:
        half = math.nan
    return RatioExperiment(mean, half, float(ratios.min()), rows, sol.objective, ilp_seconds, lp_seconds, confidence)
