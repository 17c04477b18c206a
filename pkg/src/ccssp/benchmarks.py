"""Seeded benchmark generators: grid robot, three-lane highway, random tiny
instances, and the horizon/Δ monotonicity table.

Cell attributes of the grid are drawn lazily from a counter-based PRNG
(SplitMix64 over ``(seed, stream, cell)``), so a 10000x10000 board is never
materialized and a cell's class is identical across runs and platforms.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .model import (EXPECTED, GLOBAL, CostCriterion, ProblemSpec, RiskCriterion, Sense,
                    cost_from_table, risk_from_table, tabular_problem)

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def cell_uniform(seed: int, stream: int, cell: int) -> float:
    """Uniform [0, 1) draw keyed by (seed, stream, cell)."""
    x = splitmix64(splitmix64(splitmix64(seed & _MASK) ^ stream) ^ cell)
    return (x >> 11) * (1.0 / (1 << 53))


_RISK_STREAM = 0x5253
_COST_STREAM = 0x434F


# -- grid ----------------------------------------------------------------------

GRID_MOVES = ((0, 1), (0, -1), (-1, 0), (1, 0))
GRID_ACTIONS = ("up", "down", "left", "right")


@dataclass(frozen=True)
class GridParams:
    width: int = 10_000
    height: int = 10_000
    start: tuple[int, int] = (5_000, 5_000)
    success_prob: float = 0.8
    risky_fraction: float = 0.05
    cheap_fraction: float = 0.10
    cheap_cost: float = 1.0
    default_cost: float = 2.0
    seed: int = 0

    def __post_init__(self):
        x, y = self.start
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise ValueError(f"start {self.start} outside the {self.width}x{self.height} board")
        for name in ("risky_fraction", "cheap_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.success_prob <= 1.0:
            raise ValueError("success_prob must lie in (0, 1]")


class GridWorld:
    """Lazy grid dynamics; states are packed ints ``x * height + y``."""

    def __init__(self, params: GridParams):
        self.p = params
        self._start = self.encode(*params.start)
        # interior cells: all four moves stay on the board, so no renormalization
        fail = (1.0 - params.success_prob) / 3.0
        step = [dx * params.height + dy for dx, dy in GRID_MOVES]
        self._interior = [[(step[b], params.success_prob if b == a else fail) for b in range(4)
                           if b == a or fail > 0] for a in range(4)]

    def encode(self, x: int, y: int) -> int:
        return x * self.p.height + y

    def decode(self, s: int) -> tuple[int, int]:
        return divmod(s, self.p.height)

    def is_risky(self, s: int) -> bool:
        if s == self._start:
            return False
        return cell_uniform(self.p.seed, _RISK_STREAM, s) < self.p.risky_fraction

    def cell_cost(self, s: int) -> float:
        if cell_uniform(self.p.seed, _COST_STREAM, s) < self.p.cheap_fraction:
            return self.p.cheap_cost
        return self.p.default_cost

    def risk(self, s: int) -> float:
        return 1.0 if self.is_risky(s) else 0.0

    def utility(self, s: int, a: int) -> float:
        return self.cell_cost(s)

    def successors(self, s: int, a: int):
        x, y = self.decode(s)
        if 0 < x < self.p.width - 1 and 0 < y < self.p.height - 1:
            return [(s + d, p) for d, p in self._interior[a]]
        fail = (1.0 - self.p.success_prob) / 3.0
        out = []
        for b, (dx, dy) in enumerate(GRID_MOVES):
            p = self.p.success_prob if b == a else fail
            nx, ny = x + dx, y + dy
            if p > 0 and 0 <= nx < self.p.width and 0 <= ny < self.p.height:
                out.append((self.encode(nx, ny), p))
        total = sum(p for _, p in out)
        if abs(total - 1.0) > 1e-15:
            out = [(t, p / total) for t, p in out]
        return out


def gen_grid(params: GridParams = GridParams(), horizon: int = 10, delta: float = 0.05) -> ProblemSpec:
    """Grid robot CC-SSP (minimization): 4 moves, one risk criterion."""
    world = GridWorld(params)
    return ProblemSpec(successors=world.successors, utility=world.utility,
                       initial_state=world.encode(*params.start), horizon=horizon,
                       n_actions=4, sense=Sense.MIN,
                       risks=(RiskCriterion(world.risk, delta, "collision"),),
                       action_names=GRID_ACTIONS,
                       meta={"benchmark": "grid", "world": world, "params": params})


def small_grid(seed: int = 0, size: int = 100, horizon: int = 10, delta: float = 0.05) -> ProblemSpec:
    """``size`` x ``size`` grid started at its centre."""
    return gen_grid(GridParams(width=size, height=size, start=(size // 2, size // 2), seed=seed),
                    horizon=horizon, delta=delta)


# -- highway -----------------------------------------------------------------

HIGHWAY_ACTIONS = ("maintain", "speed_up", "slow_down", "left_lane", "right_lane")
_EGO_ADVANCE = (1, 2, 0, 1, 1)
_EGO_LANE = (0, 0, 0, -1, 1)


@dataclass(frozen=True)
class HV:
    """Human-driven vehicle: start cell and the lane it may drift into
    (``None`` keeps its lane)."""

    lane: int
    pos: int
    target_lane: int | None = None
    speed: int = 1


DEFAULT_HVS = (HV(0, 4, 1), HV(1, 5), HV(2, 4, 1), HV(0, 9), HV(1, 10, 2), HV(2, 8))


@dataclass(frozen=True)
class HighwayParams:
    """Three-lane highway. HV lateral probabilities are non-normative
    defaults (keep/deviate from a lane centre, complete/abort once deviated)."""

    lanes: int = 3
    length: int = 60
    ego_lane: int = 1
    ego_pos: int = 2
    hvs: tuple[HV, ...] = DEFAULT_HVS
    p_keep: float = 0.8
    p_complete: float = 0.7
    costs: tuple[float, ...] = (2.0, 1.0, 4.0, 3.0, 3.0)
    seed: int = 0

    def __post_init__(self):
        occupied = {(self.ego_lane, self.ego_pos)}
        for hv in self.hvs:
            if not (0 <= hv.lane < self.lanes and 0 <= hv.pos < self.length):
                raise ValueError(f"{hv} is off-road")
            if hv.target_lane is not None and abs(hv.target_lane - hv.lane) != 1:
                raise ValueError(f"{hv}: target lane must neighbour the start lane")
            if (hv.lane, hv.pos) in occupied:
                raise ValueError(f"{hv} overlaps another vehicle at t=0")
            occupied.add((hv.lane, hv.pos))
        if not (0.0 <= self.p_keep <= 1.0 and 0.0 <= self.p_complete <= 1.0):
            raise ValueError("HV probabilities must lie in [0, 1]")
        if len(self.costs) != 5:
            raise ValueError("need one cost per ego action")


class Highway:
    """Joint dynamics. State: ``(ego_lane, ego_pos, ((lane, pos, dev), ...))``
    where ``dev`` is the HV's lateral offset toward its target (0 or +/-1)."""

    def __init__(self, params: HighwayParams):
        self.p = params

    @property
    def initial_state(self):
        return (self.p.ego_lane, self.p.ego_pos, tuple((hv.lane, hv.pos, 0) for hv in self.p.hvs))

    def actions(self, s):
        lane = s[0]
        return [a for a in range(5) if 0 <= lane + _EGO_LANE[a] < self.p.lanes]

    def hv_step(self, i: int, hv_state):
        """Distribution over the next (lane, pos, dev) of HV ``i``."""
        spec = self.p.hvs[i]
        lane, pos, dev = hv_state
        pos = min(pos + spec.speed, self.p.length - 1)
        if dev != 0:
            out = [((lane + dev, pos, 0), self.p.p_complete), ((lane, pos, 0), 1.0 - self.p.p_complete)]
        elif spec.target_lane is None or lane == spec.target_lane:
            out = [((lane, pos, 0), 1.0)]
        else:
            d = 1 if spec.target_lane > lane else -1
            out = [((lane, pos, 0), self.p.p_keep), ((lane, pos, d), 1.0 - self.p.p_keep)]
        return [(st, p) for st, p in out if p > 0]

    def successors(self, s, a):
        lane, pos, hvs = s
        nlane = lane + _EGO_LANE[a]
        if not 0 <= nlane < self.p.lanes:
            return []
        npos = min(pos + _EGO_ADVANCE[a], self.p.length - 1)
        per_hv = [self.hv_step(i, st) for i, st in enumerate(hvs)]
        out = []
        for combo in itertools.product(*per_hv):
            prob = 1.0
            for _, p in combo:
                prob *= p
            out.append(((nlane, npos, tuple(st for st, _ in combo)), prob))
        return out

    def collides(self, s) -> bool:
        lane, pos, hvs = s
        for hl, hp, dev in hvs:
            if hp == pos and (hl == lane or (dev != 0 and hl + dev == lane)):
                return True
        return False

    def risk(self, s) -> float:
        return 1.0 if self.collides(s) else 0.0

    def utility(self, s, a) -> float:
        return self.p.costs[a]


def gen_highway(params: HighwayParams = HighwayParams(), horizon: int = 4, delta: float = 0.05) -> ProblemSpec:
    """Ego vehicle among stochastic HVs; collision states carry r = 1."""
    hw = Highway(params)
    return ProblemSpec(successors=hw.successors, utility=hw.utility, initial_state=hw.initial_state,
                       horizon=horizon, n_actions=5, sense=Sense.MIN,
                       risks=(RiskCriterion(hw.risk, delta, "collision"),), actions=hw.actions,
                       action_names=HIGHWAY_ACTIONS,
                       meta={"benchmark": "highway", "world": hw, "params": params})


def small_highway(horizon: int = 3, delta: float = 0.05) -> ProblemSpec:
    params = HighwayParams(length=20, hvs=(HV(1, 4), HV(0, 3, 1), HV(2, 6, 1)))
    return gen_highway(params, horizon=horizon, delta=delta)


# -- random tiny instances ------------------------------------------------------

def random_tiny_problem(seed: int, *, max_states: int = 6, max_actions: int = 3, max_horizon: int = 4,
                        n_risks: int | None = None, sense: Sense | None = None,
                        max_branch: int = 2, risk_prob: float = 0.4) -> ProblemSpec:
    """Random explicit-table CC-SSP for oracle comparisons.

    Risk values are 0 or drawn from [0.05, 0.6]; budgets Δ are drawn so that
    the chance constraint binds for some but not all policies.
    """
    rng = np.random.default_rng(seed)
    n_s = int(rng.integers(2, max_states + 1))
    n_a = int(rng.integers(2, max_actions + 1))
    h = int(rng.integers(2, max_horizon + 1))
    q = int(rng.integers(1, 3)) if n_risks is None else n_risks
    if sense is None:
        sense = Sense.MAX if rng.random() < 0.5 else Sense.MIN
    trans, util = {}, {}
    for s in range(n_s):
        for a in range(n_a):
            k = int(rng.integers(1, min(max_branch, n_s) + 1))
            succ = sorted(rng.choice(n_s, size=k, replace=False).tolist())
            w = rng.dirichlet(np.ones(k))
            trans[(s, a)] = list(zip(succ, w.tolist()))
            util[(s, a)] = float(np.round(rng.uniform(0, 10), 3))
    risks = []
    for _ in range(q):
        table = {s: (float(np.round(rng.uniform(0.05, 0.6), 3)) if rng.random() < risk_prob else 0.0)
                 for s in range(1, n_s)}
        table[0] = 0.0
        risks.append(RiskCriterion(risk_from_table(table), float(np.round(rng.uniform(0.05, 0.6), 3))))
    return tabular_problem(trans, util, 0, h, sense=sense, risks=risks, n_actions=n_a)


def random_gcc_problem(seed: int, *, max_states: int = 4, max_actions: int = 2, max_horizon: int = 3,
                       integer_costs: bool = False) -> ProblemSpec:
    """Random tiny GCC-SSP: one global chance criterion with costs in [0, P]."""
    rng = np.random.default_rng(seed)
    n_s = int(rng.integers(2, max_states + 1))
    n_a = int(rng.integers(2, max_actions + 1))
    h = int(rng.integers(2, max_horizon + 1))
    sense = Sense.MAX if rng.random() < 0.5 else Sense.MIN
    trans, util, cost = {}, {}, {}
    for s in range(n_s):
        for a in range(n_a):
            k = int(rng.integers(1, min(2, n_s) + 1))
            succ = sorted(rng.choice(n_s, size=k, replace=False).tolist())
            w = rng.dirichlet(np.ones(k))
            trans[(s, a)] = list(zip(succ, w.tolist()))
            util[(s, a)] = float(np.round(rng.uniform(0, 10), 2))
            cost[(s, a)] = float(rng.integers(0, 4)) if integer_costs else float(np.round(rng.uniform(0, 3), 2))
    cmax = max(cost.values()) or 1.0
    bound = float(np.round(rng.uniform(max(cmax, 0.9 * h), 1.8 * h), 2))
    if integer_costs:
        bound = float(math.floor(bound))
    bound = max(bound, cmax)
    crit = CostCriterion(cost_from_table(cost), bound, kind=GLOBAL,
                         delta=float(np.round(rng.uniform(0.1, 0.6), 2)))
    return tabular_problem(trans, util, 0, h, sense=sense, costs=[crit], n_actions=n_a)


# -- monotonicity table ---------------------------------------------------------

@dataclass
class TableRow:
    horizon: int
    delta: float
    status: str
    objective: float | None
    seconds: float
    graph_nodes: int
    tree_nodes: int
    note: str = ""


@dataclass
class MonotonicityTable:
    rows: list[TableRow] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)


def monotonicity_suite(make_spec, horizons, deltas, solver_config=None) -> MonotonicityTable:
    """Solve the ILP for every (horizon, Δ) cell of ``make_spec(h, Δ)``.

    Records Δ-monotonicity (objective never worse at larger Δ) and the
    objective/horizon trend; broken patterns are listed in ``violations``.
    """
    from .graph import census, expand
    from .ilp import build_ilp, InfeasibleAtRoot
    from .solver import solve_milp

    table = MonotonicityTable()
    best: dict[tuple[int, float], float] = {}
    for h in horizons:
        for d in deltas:
            spec = make_spec(h, d)
            t0 = time.perf_counter()
            g = expand(spec)
            c = census(g)
            try:
                sol = solve_milp(build_ilp(g, spec), solver_config)
                status, obj = sol.status, (sol.objective if sol.status == "optimal" else None)
                note = ""
            except InfeasibleAtRoot as exc:
                status, obj, note = "infeasible", None, str(exc)
            row = TableRow(h, d, status, obj, time.perf_counter() - t0, c.graph_nodes, c.tree_nodes, note)
            table.rows.append(row)
            if obj is not None:
                best[(h, d)] = obj
            sense = spec.sense
    sign = 1.0 if not best or sense == Sense.MIN else -1.0
    for h in horizons:
        ds = sorted(d for d in deltas if (h, d) in best)
        for d0, d1 in zip(ds, ds[1:]):
            if sign * best[(h, d1)] > sign * best[(h, d0)] + 1e-6:
                table.violations.append(f"h={h}: objective at Δ={d1} worse than at Δ={d0}")
    for d in deltas:
        hs = sorted(h for h in horizons if (h, d) in best)
        for h0, h1 in zip(hs, hs[1:]):
            if sign * best[(h1, d)] / h1 > sign * best[(h0, d)] / h0 + 1e-9:
                table.violations.append(f"Δ={d}: objective/h rises from h={h0} to h={h1}")
    return table
