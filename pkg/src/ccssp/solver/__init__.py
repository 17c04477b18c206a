"""Exact LP / MILP solving of a :class:`~ccssp.ilp.ModelIR`.

``solve_lp`` runs the built-in Bland simplex (``lp_backend="simplex"``) or
HiGHS through scipy (``lp_backend="highs"``, used for benchmark-scale
models the dense tableau cannot hold). ``solve_milp`` is a best-first
branch-and-bound over the integer-flagged variables using either LP backend.
``highs_milp`` hands the whole model to scipy's MILP solver; it is the
external reference backend for conformance checks.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from ..model import Sense
from .simplex import INFEASIBLE, ITERATION_LIMIT, NUMERICAL, OPTIMAL, UNBOUNDED, LPResult, simplex

HEURISTIC_EVERY = 16
NODE_LIMIT = "node_limit"
TIME_LIMIT = "time_limit"

__all__ = ["Solution", "SolverConfig", "solve_lp", "solve_milp", "highs_milp", "OPTIMAL",
           "lp_backend_for", "INFEASIBLE", "ITERATION_LIMIT", "NODE_LIMIT", "TIME_LIMIT", "UNBOUNDED", "NUMERICAL", "simplex"]


@dataclass(frozen=True)
class SolverConfig:
    feasibility_tol: float = 1e-6
    integrality_tol: float = 1e-6
    node_limit: int = 100_000
    time_limit: float = float("inf")
    max_iterations: int = 200_000
    branching: str = "most_fractional"
    pivot_rule: str = "bland"
    lp_backend: str = "auto"          # "simplex", "highs", or "auto" (by model size)
    record_trace: bool = False
    optimality_gap: float = 1e-7       # relative; nodes within it of the incumbent are pruned

    def __post_init__(self):
        if self.feasibility_tol <= 0 or self.integrality_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.lp_backend not in ("simplex", "highs", "auto"):
            raise ValueError(f"unknown LP backend {self.lp_backend!r}")


@dataclass
class Solution:
    status: str
    objective: float
    x: np.ndarray | None
    stats: dict = field(default_factory=dict)
    certificate: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


AUTO_SIMPLEX_ROWS = 400


def lp_backend_for(model, config: SolverConfig) -> str:
    """Resolve ``"auto"``: the built-in simplex (dense basis inverse, Bland
    pricing) for models up to ``AUTO_SIMPLEX_ROWS`` rows, HiGHS beyond."""
    if config.lp_backend != "auto":
        return config.lp_backend
    return "simplex" if model.n_rows <= AUTO_SIMPLEX_ROWS else "highs"


def _lp(model, lb, ub, config: SolverConfig, c_min: np.ndarray, warm=None) -> LPResult:
    if lp_backend_for(model, config) == "simplex":
        res = simplex(c_min, model.A, model.rel, model.rhs, lb, ub,
                      max_iter=config.max_iterations, warm=warm)
        if res.status != NUMERICAL or config.lp_backend == "simplex":
            return res
        # auto mode: hand numerically troubled LPs to HiGHS
    return _highs_lp(model, lb, ub, c_min)


def _highs_lp(model, lb, ub, c_min) -> LPResult:
    eq = model.rel == "="
    A = model.A
    res = linprog(c_min, A_ub=A[~eq] if (~eq).any() else None, b_ub=model.rhs[~eq] if (~eq).any() else None,
                  A_eq=A[eq] if eq.any() else None, b_eq=model.rhs[eq] if eq.any() else None,
                  bounds=np.column_stack([lb, ub]), method="highs",
                  options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9})
    iters = int(getattr(res, "nit", 0) or 0)
    if res.status == 0:
        x = np.clip(res.x, lb, ub)
        return LPResult(OPTIMAL, x, float(c_min @ x), iters)
    if res.status == 2:
        return LPResult(INFEASIBLE, None, np.nan, iters)
    if res.status == 1:
        return LPResult(ITERATION_LIMIT, None, np.nan, iters)
    return LPResult(UNBOUNDED if res.status == 3 else INFEASIBLE, None, np.nan, iters)


def _signed_cost(model):
    return -model.c if model.sense == Sense.MAX else model.c


def solve_lp(model, config: SolverConfig | None = None) -> Solution:
    """Optimal basic solution of a continuous model."""
    config = config or SolverConfig()
    if model.integer.any():
        raise ValueError("solve_lp needs a continuous model; build it with relaxed=True")
    t0 = time.perf_counter()
    res = _lp(model, model.lb, model.ub, config, _signed_cost(model))
    stats = {"simplex_iterations": res.iterations, "bb_nodes": 0, "seconds": time.perf_counter() - t0}
    if res.status != OPTIMAL:
        return Solution(res.status, np.nan, res.x, stats, res.certificate)
    return Solution(OPTIMAL, model.objective(res.x), res.x, stats)


def solve_milp(model, config: SolverConfig | None = None) -> Solution:
    """Best-first branch-and-bound on integer-flagged variables.

    The node with the best LP bound is expanded next (ties: deeper first,
    then creation order). On CC-SSP models the selectors are canonicalized
    to max_j x_j and branching picks the most fractional action share in
    the earliest layer; on other models, the most fractional integer
    variable, ties to the lowest index. A dominant-action LP dive supplies
    early incumbents. Nodes within ``optimality_gap`` (relative) of the
    incumbent are pruned; incumbents are only replaced by strictly better
    points.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    c_min = _signed_cost(model)
    int_idx = np.flatnonzero(model.integer)
    stats = {"simplex_iterations": 0, "bb_nodes": 0, "lp_solves": 0, "seconds": 0.0}
    trace = [] if config.record_trace else None

    def lp(lb, ub, warm=None):
        res = _lp(model, lb, ub, config, c_min, warm)
        stats["simplex_iterations"] += res.iterations
        stats["lp_solves"] += 1
        return res

    root = lp(model.lb.copy(), model.ub.copy())
    stats["bb_nodes"] = 1
    if root.status == INFEASIBLE:
        stats["seconds"] = time.perf_counter() - t0
        return Solution(INFEASIBLE, np.nan, None, stats, root.certificate)
    if root.status != OPTIMAL:
        stats["seconds"] = time.perf_counter() - t0
        return Solution(root.status, np.nan, None, stats)

    best_x, best_val = None, np.inf

    def prunable(bound):
        return bound >= best_val - config.optimality_gap * max(1.0, abs(best_val))

    counter = 0
    heap = [(root.objective, 0, counter, model.lb.copy(), model.ub.copy(), root.x, root.basis)]
    status = OPTIMAL
    expanded = 0
    while heap:
        bound, depth, _, lb, ub, x, basis = heapq.heappop(heap)
        if prunable(bound):
            continue
        if trace is not None:
            trace.append((bound, best_val))
        expanded += 1
        point, v = _branch_choice(model, x, int_idx, config.integrality_tol)
        if v < 0:
            val = float(c_min @ point)
            if val < best_val - 1e-9:
                best_x, best_val = point, val
            continue
        if model.z_index and (best_x is None or expanded % HEURISTIC_EVERY == 1):
            fix = _dominant_selectors(model, x, lb, ub, c_min, config.integrality_tol)
            if fix is not None:
                res = lp(*fix, warm=basis)
                if res.status == OPTIMAL and res.objective < best_val - 1e-9:
                    xr = res.x.copy()
                    xr[int_idx] = np.round(xr[int_idx])
                    best_x, best_val = xr, float(c_min @ xr)
                    if prunable(bound):
                        continue
        if stats["bb_nodes"] >= config.node_limit:
            status = NODE_LIMIT
            break
        if time.perf_counter() - t0 > config.time_limit:
            status = TIME_LIMIT
            break
        for side in (1, 0):
            clb, cub = lb.copy(), ub.copy()
            if side == 0:
                cub[v] = np.floor(x[v])
            else:
                clb[v] = np.ceil(x[v])
            res = lp(clb, cub, warm=basis)
            stats["bb_nodes"] += 1
            if res.status == OPTIMAL and not prunable(res.objective):
                counter += 1
                heapq.heappush(heap, (res.objective, -(depth + 1), counter, clb, cub, res.x, res.basis))
    stats["seconds"] = time.perf_counter() - t0
    if trace is not None:
        stats["trace"] = trace
    if best_x is None:
        return Solution(INFEASIBLE if status == OPTIMAL else status, np.nan, None, stats)
    return Solution(status, model.objective(best_x), best_x, stats)


def _canonical_z(model, x):
    """Smallest selector vector compatible with the flows: z = 1 wherever some
    criterion routes flow through the pair, else 0. The selectors carry no
    objective weight, so this never changes the objective value."""
    xs = np.stack([np.concatenate([x[ix] for ix in xj]) for xj in model.x_index])
    zall = np.concatenate(model.z_index)
    return zall, xs.max(axis=0)


def _dominant_selectors(model, x, lb, ub, c_min, tol):
    """Bounds fixing every selector to its node's largest-flow action.

    Nodes without flow take the action with the best immediate objective
    coefficient. Returns None when the current bounds rule that out.
    """
    zall, flow = _canonical_z(model, x)
    c0 = np.concatenate([c_min[ix] for ix in model.x_index[0]])
    flb, fub = lb.copy(), ub.copy()
    off = 0
    for k, zk in enumerate(model.z_index):
        node = model.pair_node[k]
        n = len(zk)
        f = flow[off:off + n]
        order = np.lexsort((np.arange(n), c0[off:off + n], -np.round(f / tol) * tol, node))
        seen = set()
        for p in order:
            i = int(node[p])
            if i in seen:
                continue
            v = zk[p]
            cand = [q for q in order if node[q] == i] if ub[v] < 1 else [p]
            pick = next((q for q in cand if ub[zk[q]] >= 1), None)
            if pick is None:
                return None
            seen.add(i)
            for q in np.flatnonzero(node == i):
                flb[zk[q]] = fub[zk[q]] = 1.0 if q == pick else 0.0
                if q != pick and lb[zk[q]] > 0:
                    return None
        off += n
    return flb, fub


def _branch_choice(model, x, int_idx, tol):
    """Return (point, var): an integral point and -1, or the branching variable.

    For CC-SSP models the selectors are first snapped to the flows they
    bind; if that yields an integral, feasible point it is accepted.
    Otherwise the branching selector is the most fractional one (normalized
    flow share at its node) within the earliest layer that has a split
    node, ties to the lowest index.
    """
    if len(int_idx) == 0:
        return x, -1
    frac = np.abs(x[int_idx] - np.round(x[int_idx]))
    if frac.max() <= tol:
        xr = x.copy()
        xr[int_idx] = np.round(xr[int_idx])
        return xr, -1
    if not model.z_index:
        score = np.minimum(frac, 1.0 - frac)
        return None, int(int_idx[int(np.argmax(score))])
    zall, flow = _canonical_z(model, x)
    used = flow > tol
    xr = x.copy()
    xr[zall] = used.astype(float)
    if model.violation(xr) <= 1e-9:
        return xr, -1
    # flow share of each pair among the pairs of its node (per layer)
    share = np.zeros(len(zall))
    off = 0
    for k, zk in enumerate(model.z_index):
        n = len(zk)
        f = flow[off:off + n]
        node = model.pair_node[k]
        tot = np.bincount(node, weights=f)
        share[off:off + n] = np.where(tot[node] > tol, f / np.maximum(tot[node], tol), 0.0)
        off += n
    free = model.lb[zall] < model.ub[zall]
    score = np.minimum(share, 1.0 - share)
    split = free & (score > tol)
    if split.any():
        # decide the earliest undecided layer first: upstream choices move the most mass
        layer = np.concatenate([np.full(len(zk), k) for k, zk in enumerate(model.z_index)])
        split &= layer == layer[split].min()
    score = np.where(split, score, -1.0)
    best = int(np.argmax(score))
    if score[best] <= tol:
        # flows are deterministic yet the snapped point is infeasible: plain rule
        score = np.minimum(frac, 1.0 - frac)
        return None, int(int_idx[int(np.argmax(score))])
    return None, int(zall[best])


def highs_milp(model, time_limit: float | None = None) -> Solution:
    """Solve the whole model with scipy's HiGHS MILP (reference backend)."""
    t0 = time.perf_counter()
    eq = model.rel == "="
    lo = np.where(eq, model.rhs, -np.inf)
    cons = LinearConstraint(sp.csr_matrix(model.A), lo, model.rhs)
    opts = {"mip_rel_gap": 1e-9}
    if time_limit is not None:
        opts["time_limit"] = time_limit
    res = milp(_signed_cost(model), constraints=cons, integrality=model.integer.astype(int),
               bounds=Bounds(model.lb, model.ub), options=opts)
    stats = {"seconds": time.perf_counter() - t0, "backend": "highs"}
    if res.status == 0:
        x = np.clip(res.x, model.lb, model.ub)
        x[model.integer] = np.round(x[model.integer])
        return Solution(OPTIMAL, model.objective(x), x, stats)
    if res.status == 2:
        return Solution(INFEASIBLE, np.nan, None, stats)
    return Solution(TIME_LIMIT if res.status == 1 else ITERATION_LIMIT, np.nan, None, stats)
