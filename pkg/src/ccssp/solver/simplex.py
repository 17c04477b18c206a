"""Two-phase revised primal simplex for bounded variables, Bland's rule.

Solves ``min c.x  s.t.  A x (= | <=) b,  lb <= x <= ub`` with finite
lower bounds. Nonbasic variables sit at either bound; a bound flip replaces
a pivot when the entering variable hits its own opposite bound first.
Bland's smallest-index rule for both entering and leaving choices makes the
method finite on degenerate problems and fully deterministic.

A solve returns its final basis as a :class:`Basis`; passing it back as
``warm`` with changed bounds restarts from that basis with a dual simplex
(smallest-index choices as well), which is how branch-and-bound children
are re-solved in a handful of pivots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
NUMERICAL = "numerical_error"
PIVOT_TOL = 1e-7
REFACTOR_EVERY = 50
SMALL_PIVOT = 1e-3
DUAL_TOL = 1e-7
DUAL_GREEDY_ITERS = 200       # most-infeasible leaving row first, then Bland-style lowest index


@dataclass
class Basis:
    """Column layout and basis status of a finished solve (for warm starts)."""

    M: sp.csc_matrix        # [A | slacks | artificials]
    b: np.ndarray
    n: int                  # structural columns
    n_s: int                # slack columns
    basis: np.ndarray
    at_upper: np.ndarray


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int
    certificate: list[int] = field(default_factory=list)
    basis: Basis | None = None


class _Revised:
    """Bounded-variable revised simplex on an explicit basis inverse.

    The inverse gets a product-form (rank-one) update per pivot and is
    recomputed from scratch every ``REFACTOR_EVERY`` pivots; basic values
    are recomputed from the inverse each iteration, so drift stays bounded.
    """

    def __init__(self, M, b, lo, hi, basis, at_upper, cost):
        self.M = M
        self.MT = M.T.tocsr()
        self.b = b
        self.lo = lo
        self.hi = hi
        self.basis = basis
        self.cost = cost
        self.at_upper = at_upper
        self.is_basic = np.zeros(M.shape[1], dtype=bool)
        self.is_basic[basis] = True
        self.refactor()

    def refactor(self):
        self.Binv = la.inv(self.M[:, self.basis].toarray(), check_finite=False)
        self.since = 0

    def nonbasic_values(self):
        v = np.where(self.at_upper, self.hi, self.lo)
        v[self.is_basic] = 0.0
        return v

    def basic_values(self):
        return self.Binv @ (self.b - self.M @ self.nonbasic_values())

    def values(self):
        v = self.nonbasic_values()
        v[self.basis] = self.basic_values()
        return v

    def _column(self, j):
        col = np.zeros(self.M.shape[0])
        lo, hi = self.M.indptr[j], self.M.indptr[j + 1]
        col[self.M.indices[lo:hi]] = self.M.data[lo:hi]
        return self.Binv @ col

    def _pivot(self, r, j, alpha):
        basis = self.basis
        self.is_basic[basis[r]] = False
        self.is_basic[j] = True
        self.at_upper[j] = False
        basis[r] = j
        row = self.Binv[r] / alpha[r]
        self.Binv -= np.outer(alpha, row)
        self.Binv[r] = row
        self.since += 1
        if self.since >= REFACTOR_EVERY:
            self.refactor()

    def _suspect(self, alpha, r):
        """A small pivot computed through updates may be round-off; refactor
        and redo the iteration before trusting it."""
        if self.since and abs(alpha[r]) < SMALL_PIVOT * np.abs(alpha).max():
            self.refactor()
            return True
        return False

    def reduced_costs(self):
        y = self.cost[self.basis] @ self.Binv
        return self.cost - self.MT @ y

    def primal(self, max_iter, tol, stop_at=None):
        basis, lo, hi, cost = self.basis, self.lo, self.hi, self.cost
        movable = hi > lo
        it = 0
        while True:
            xb = np.clip(self.basic_values(), lo[basis], hi[basis])
            if stop_at is not None and cost[basis] @ xb <= stop_at:
                return OPTIMAL, it
            d = self.reduced_costs()
            cand = ~self.is_basic & movable & (((~self.at_upper) & (d < -tol)) | (self.at_upper & (d > tol)))
            idx = np.flatnonzero(cand)
            if len(idx) == 0:
                return OPTIMAL, it
            if it >= max_iter:
                return ITERATION_LIMIT, it
            j = int(idx[0])
            sigma = -1.0 if self.at_upper[j] else 1.0
            alpha = self._column(j)
            sa = sigma * alpha
            ptol = PIVOT_TOL * max(1.0, float(np.abs(sa).max()))
            dec = sa > ptol
            inc = sa < -ptol
            lim = np.full(len(xb), np.inf)
            lim[dec] = (xb[dec] - lo[basis][dec]) / sa[dec]
            ub_b = hi[basis]
            fin = inc & np.isfinite(ub_b)
            lim[fin] = (ub_b[fin] - xb[fin]) / (-sa[fin])
            np.maximum(lim, 0.0, out=lim)
            t_row, r = np.inf, -1
            if np.isfinite(lim).any():
                t_row = lim.min()
                ties = np.flatnonzero(lim <= t_row + 1e-12)
                r = int(ties[np.argmin(basis[ties])])
            it += 1
            if hi[j] - lo[j] <= t_row:
                if not np.isfinite(hi[j]):
                    return UNBOUNDED, it
                self.at_upper[j] = not self.at_upper[j]
                continue
            if self._suspect(alpha, r):
                continue
            self.at_upper[int(basis[r])] = bool(sa[r] < 0)
            self._pivot(r, j, alpha)

    def dual(self, max_iter, tol):
        """Dual simplex from a dual-feasible basis; returns (status, iterations, row)."""
        basis, lo, hi = self.basis, self.lo, self.hi
        movable = hi > lo
        it = 0
        while True:
            xb = self.basic_values()
            below = xb < lo[basis] - tol
            above = xb > hi[basis] + tol
            bad = np.flatnonzero(below | above)
            if len(bad) == 0:
                return OPTIMAL, it, -1
            if it >= max_iter:
                return ITERATION_LIMIT, it, -1
            if it < DUAL_GREEDY_ITERS:
                viol = np.maximum(lo[basis[bad]] - xb[bad], xb[bad] - hi[basis[bad]])
                r = int(bad[np.argmax(viol)])
            else:
                # lowest-index leaving rule: cannot cycle
                r = int(bad[np.argmin(basis[bad])])
            row = self.MT @ self.Binv[r]
            d = self.reduced_costs()
            up = bool(below[r])          # leaving variable rises to its lower bound
            nb = ~self.is_basic & movable
            ptol = PIVOT_TOL * max(1.0, float(np.abs(row).max()))
            if up:
                ok = nb & (((~self.at_upper) & (row < -ptol)) | (self.at_upper & (row > ptol)))
            else:
                ok = nb & (((~self.at_upper) & (row > ptol)) | (self.at_upper & (row < -ptol)))
            idx = np.flatnonzero(ok)
            if len(idx) == 0:
                return INFEASIBLE, it, r
            ratio = np.abs(d[idx]) / np.abs(row[idx])
            j = int(idx[np.flatnonzero(ratio <= ratio.min() + 1e-12)[0]])
            it += 1
            alpha = self._column(j)
            if self._suspect(alpha, r):
                continue
            self.at_upper[int(basis[r])] = not up
            self._pivot(r, j, alpha)


def _dual_tol(c):
    # reduced costs below this are round-off; a tighter test lets noise cycle
    return DUAL_TOL * max(1.0, float(np.abs(c).max(initial=0.0)))


def simplex(c, A, rel, rhs, lb, ub, max_iter: int = 50_000, tol: float = 1e-9,
            warm: Basis | None = None) -> LPResult:
    """Minimize ``c @ x`` over the box-bounded polyhedron.

    ``A`` may be dense or sparse. ``warm`` is the basis of an earlier solve
    over the same rows; only the variable bounds may differ.
    """
    c = np.asarray(c, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if not np.all(np.isfinite(lb)):
        raise ValueError("simplex requires finite lower bounds")
    if np.any(ub < lb - tol):
        return LPResult(INFEASIBLE, None, np.nan, 0, [])
    try:
        if warm is not None:
            return _warm(c, lb, ub, max_iter, tol, warm)
        return _cold(c, A, rel, rhs, lb, ub, max_iter, tol)
    except la.LinAlgError:
        # a basis went singular despite the pivot safeguards
        return LPResult(NUMERICAL, None, np.nan, 0)


def _cold(c, A, rel, rhs, lb, ub, max_iter, tol) -> LPResult:
    A = sp.csr_matrix(A, dtype=float)
    m, n = A.shape
    rhs = np.asarray(rhs, dtype=float)
    resid = rhs - A @ lb
    is_le = np.asarray(rel) == "<"
    n_s = int(is_le.sum())
    slack_rows = np.flatnonzero(is_le)
    use_slack = is_le & (resid >= 0)
    art_rows = np.flatnonzero(~use_slack)
    n_a = len(art_rows)
    N = n + n_s + n_a
    slack = sp.csr_matrix((np.ones(n_s), (slack_rows, np.arange(n_s))), shape=(m, n_s))
    art = sp.csr_matrix((np.where(resid[art_rows] >= 0, 1.0, -1.0), (art_rows, np.arange(n_a))),
                        shape=(m, n_a))
    M = sp.hstack([A, slack, art], format="csc")
    lo = np.concatenate([lb, np.zeros(n_s + n_a)])
    hi = np.concatenate([np.maximum(ub, lb), np.full(n_s + n_a, np.inf)])
    basis = np.empty(m, dtype=np.int64)
    basis[slack_rows] = n + np.arange(n_s)
    basis[art_rows] = n + n_s + np.arange(n_a)

    cost1 = np.zeros(N)
    cost1[n + n_s:] = 1.0
    tab = _Revised(M, rhs, lo, hi, basis, np.zeros(N, dtype=bool), cost1)
    iters = 0
    if n_a:
        # phase 1 stops as soon as every artificial is (numerically) zero
        scale = max(1.0, float(np.abs(resid).max(initial=0.0)))
        status, it = tab.primal(max_iter, max(tol, DUAL_TOL), stop_at=1e-11 * scale)
        iters += it
        if status == ITERATION_LIMIT:
            return LPResult(status, None, np.nan, iters)
        vals = tab.values()
        if float(vals[n + n_s:].sum()) > 1e-7 * scale:
            cert = [int(art_rows[a]) for a in range(n_a) if vals[n + n_s + a] > 1e-9]
            return LPResult(INFEASIBLE, None, np.nan, iters, cert)
        hi[n + n_s:] = 0.0
        tab.at_upper[n + n_s:] = False
    tab.cost = np.concatenate([c, np.zeros(n_s + n_a)])
    status, it = tab.primal(max_iter - iters, _dual_tol(c))
    return _finish(tab, status, c, lb, ub, n, n_s, iters + it)


def _finish(tab, status, c, lb, ub, n, n_s, iters):
    x = np.minimum(np.maximum(tab.values()[:n], lb), ub)
    state = Basis(tab.M, tab.b, n, n_s, tab.basis.copy(), tab.at_upper.copy()) if status == OPTIMAL else None
    return LPResult(status, x, float(c @ x), iters, basis=state)


def _warm(c, lb, ub, max_iter, tol, warm: Basis) -> LPResult:
    n, n_s = warm.n, warm.n_s
    N = warm.M.shape[1]
    lo = np.zeros(N)
    hi = np.full(N, np.inf)
    lo[:n], hi[:n] = lb, np.maximum(ub, lb)
    hi[n + n_s:] = 0.0
    at_upper = warm.at_upper & np.isfinite(hi)
    tab = _Revised(warm.M, warm.b, lo, hi, warm.basis.copy(), at_upper,
                   np.concatenate([c, np.zeros(N - n)]))
    status, iters, r = tab.dual(max_iter, max(tol, 1e-9))
    if status == INFEASIBLE:
        # Farkas row: the leaving row of B^-1 combines these constraints into a contradiction
        cert = [int(i) for i in np.flatnonzero(np.abs(tab.Binv[r]) > 1e-9)]
        return LPResult(INFEASIBLE, None, np.nan, iters, cert)
    if status != OPTIMAL:
        return LPResult(status, None, np.nan, iters)
    status, it = tab.primal(max_iter - iters, _dual_tol(c))
    return _finish(tab, status, c, lb, ub, n, n_s, iters + it)
