"""Dense bounded-variable simplex.

Solves ``min c@x  s.t.  A x (<=,=,>=) b,  lower <= x <= upper`` with a
tableau that is rebuilt from a stored basis when warm starting.  Primal
simplex uses Dantzig pricing and falls back to Bland's rule after a run of
degenerate pivots; the dual simplex re-optimises after bound changes, which is
all branch-and-bound needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9
COST_TOL = 1e-10
DEGENERATE_SWITCH = 50


class LPStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LPProblem:
    c: np.ndarray
    A: np.ndarray
    senses: str
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, float)
        self.A = np.atleast_2d(np.asarray(self.A, float))
        self.b = np.asarray(self.b, float)
        self.lower = np.asarray(self.lower, float)
        self.upper = np.asarray(self.upper, float)
        m, n = self.A.shape
        if len(self.senses) != m or self.b.shape != (m,) or self.c.shape != (n,):
            raise ValueError("inconsistent LP dimensions")
        if not np.all(np.isfinite(self.lower)):
            raise ValueError("every variable needs a finite lower bound")
        if set(self.senses) - {"E", "L", "G"}:
            raise ValueError("row senses must be E, L or G")


@dataclass
class Basis:
    """Warm-start information: basic column per row and which nonbasics sit at their upper bound."""

    basic: np.ndarray
    at_upper: np.ndarray


@dataclass
class LPResult:
    status: LPStatus
    x: np.ndarray | None
    objective: float
    basis: Basis | None
    iterations: int


class BoundedSimplex:
    """Simplex engine bound to one constraint matrix; bounds may change per solve."""

    def __init__(self, problem: LPProblem, max_iter: int = 20000):
        self.problem = problem
        self.max_iter = max_iter
        A, m, n = problem.A, *problem.A.shape
        slack_rows = [i for i, s in enumerate(problem.senses) if s != "E"]
        ns = len(slack_rows)
        self.n, self.ns, self.m = n, ns, m
        full = np.zeros((m, n + ns + m))
        full[:, :n] = A
        self.slack_coef = np.zeros(m)
        self.slack_col = -np.ones(m, dtype=int)
        for k, i in enumerate(slack_rows):
            coef = 1.0 if problem.senses[i] == "L" else -1.0
            full[i, n + k] = coef
            self.slack_coef[i] = coef
            self.slack_col[i] = n + k
        self.art0 = n + ns
        full[:, self.art0:] = np.eye(m)
        self.A_full = full
        self.N = n + ns + m
        self.cost = np.concatenate([problem.c, np.zeros(ns + m)])
        self.iterations = 0

    # -- bounds helpers -----------------------------------------------------

    def _full_bounds(self, lower, upper, art_upper):
        lo = np.concatenate([lower, np.zeros(self.ns + self.m)])
        up = np.concatenate([upper, np.full(self.ns, np.inf), np.full(self.m, art_upper)])
        return lo, up

    # -- tableau operations -------------------------------------------------

    def _pivot(self, r: int, j: int) -> None:
        T = self.T
        piv = T[r, j]
        T[r] /= piv
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.d -= self.d[j] * T[r]
        self.d[j] = 0.0
        self.is_basic[self.basic[r]] = False
        self.basic[r] = j
        self.is_basic[j] = True

    def _reduced_costs(self, cost):
        self.d = cost - cost[self.basic] @ self.T
        self.d[self.basic] = 0.0

    def _nonbasic_values(self):
        x = np.where(self.at_upper, self.up, self.lo)
        x[self.basic] = 0.0
        return x

    def _refresh(self, cost) -> bool:
        """Recompute tableau, basic values and reduced costs from the basis."""
        B = self.A_full[:, self.basic]
        try:
            self.T = np.linalg.solve(B, self.A_full)
            x = self._nonbasic_values()
            rhs = self.problem.b - self.A_full @ x
            x[self.basic] = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError:
            return False
        if not np.all(np.isfinite(self.T)):
            return False
        self.x = x
        self._reduced_costs(cost)
        return True

    # -- primal simplex -----------------------------------------------------

    def _primal(self, cost) -> LPStatus:
        bland = False
        degenerate = 0
        fixed = self.up - self.lo <= 0
        while True:
            if self.iterations >= self.max_iter:
                return LPStatus.ITERATION_LIMIT
            d = self.d
            cand = ~self.is_basic & ~fixed & (
                (~self.at_upper & (d < -COST_TOL)) | (self.at_upper & (d > COST_TOL)))
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return LPStatus.OPTIMAL
            j = int(idx[0]) if bland else int(idx[np.argmax(np.abs(d[idx]))])
            sigma = -1.0 if self.at_upper[j] else 1.0
            delta = -sigma * self.T[:, j]
            xb = self.x[self.basic]
            lb, ub = self.lo[self.basic], self.up[self.basic]
            with np.errstate(divide="ignore", invalid="ignore"):
                lim = np.full(self.m, np.inf)
                dec = delta < -PIVOT_TOL
                inc = delta > PIVOT_TOL
                lim[dec] = (xb[dec] - lb[dec]) / -delta[dec]
                lim[inc] = (ub[inc] - xb[inc]) / delta[inc]
            lim = np.maximum(lim, 0.0)
            t_row = lim.min() if self.m else np.inf
            t_flip = self.up[j] - self.lo[j]
            if not np.isfinite(t_row) and not np.isfinite(t_flip):
                return LPStatus.UNBOUNDED
            self.iterations += 1
            if t_flip <= t_row:
                self.x[self.basic] = xb + delta * t_flip
                self.x[j] = self.lo[j] if self.at_upper[j] else self.up[j]
                self.at_upper[j] = not self.at_upper[j]
                degenerate = 0
                bland = False
                continue
            ties = np.flatnonzero(lim <= t_row + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basic[ties])])
            else:
                r = int(ties[np.argmax(np.abs(delta[ties]))])
            t = lim[r]
            leaving = self.basic[r]
            self.x[self.basic] = xb + delta * t
            self.x[j] = self.x[j] + sigma * t
            hit_upper = delta[r] > 0
            self.x[leaving] = self.up[leaving] if hit_upper else self.lo[leaving]
            self.at_upper[leaving] = hit_upper
            self.at_upper[j] = False
            self._pivot(r, j)
            if t <= 1e-12:
                degenerate += 1
                if degenerate >= DEGENERATE_SWITCH:
                    bland = True
            else:
                degenerate = 0
                bland = False

    # -- dual simplex -------------------------------------------------------

    def _dual(self) -> LPStatus:
        fixed = self.up - self.lo <= 0
        while True:
            if self.iterations >= self.max_iter:
                return LPStatus.ITERATION_LIMIT
            xb = self.x[self.basic]
            lb, ub = self.lo[self.basic], self.up[self.basic]
            below = lb - xb
            above = xb - ub
            viol = np.maximum(below, above)
            r = int(np.argmax(viol)) if self.m else 0
            if self.m == 0 or viol[r] <= FEAS_TOL:
                return LPStatus.OPTIMAL
            raise_it = below[r] > above[r]
            target = lb[r] if raise_it else ub[r]
            row = self.T[r]
            nb = ~self.is_basic & ~fixed
            if raise_it:
                ok = nb & ((~self.at_upper & (row < -PIVOT_TOL)) | (self.at_upper & (row > PIVOT_TOL)))
            else:
                ok = nb & ((~self.at_upper & (row > PIVOT_TOL)) | (self.at_upper & (row < -PIVOT_TOL)))
            idx = np.flatnonzero(ok)
            if idx.size == 0:
                return LPStatus.INFEASIBLE
            ratio = np.abs(self.d[idx]) / np.abs(row[idx])
            best = ratio.min()
            ties = idx[ratio <= best + 1e-12]
            j = int(ties[np.argmax(np.abs(row[ties]))])
            self.iterations += 1
            leaving = self.basic[r]
            step = (self.x[leaving] - target) / row[j]
            self.x[self.basic] -= self.T[:, j] * step
            self.x[j] += step
            self.x[leaving] = target
            self.at_upper[leaving] = not raise_it
            self.at_upper[j] = False
            self._pivot(r, j)

    # -- drivers ------------------------------------------------------------

    def _result(self, status: LPStatus) -> LPResult:
        if status is not LPStatus.OPTIMAL:
            return LPResult(status, None, np.inf, None, self.iterations)
        x = self.x[: self.n].copy()
        basis = Basis(self.basic.copy(), self.at_upper.copy())
        return LPResult(status, x, float(self.problem.c @ x), basis, self.iterations)

    def solve(self, lower=None, upper=None, basis: Basis | None = None) -> LPResult:
        """Solve with the given bounds, warm starting from ``basis`` when possible."""
        p = self.problem
        lower = p.lower if lower is None else np.asarray(lower, float)
        upper = p.upper if upper is None else np.asarray(upper, float)
        self.iterations = 0
        if np.any(lower > upper + FEAS_TOL):
            return LPResult(LPStatus.INFEASIBLE, None, np.inf, None, 0)
        if basis is not None:
            res = self._warm(lower, upper, basis)
            if res is not None:
                return res
        return self._cold(lower, upper)

    def _warm(self, lower, upper, basis: Basis) -> LPResult | None:
        self.lo, self.up = self._full_bounds(lower, upper, 0.0)
        self.basic = basis.basic.copy()
        self.is_basic = np.zeros(self.N, bool)
        self.is_basic[self.basic] = True
        self.at_upper = basis.at_upper.copy() & np.isfinite(self.up)
        self.at_upper[self.basic] = False
        if not self._refresh(self.cost):
            return None
        fixed = self.up - self.lo <= 0
        nb = ~self.is_basic & ~fixed
        dual_ok = not np.any(nb & ((~self.at_upper & (self.d < -1e-7)) | (self.at_upper & (self.d > 1e-7))))
        if dual_ok:
            status = self._dual()
            if status is LPStatus.INFEASIBLE:
                return self._result(status)
            if status is not LPStatus.OPTIMAL:
                return None
        xb = self.x[self.basic]
        if np.any(xb < self.lo[self.basic] - 1e-7) or np.any(xb > self.up[self.basic] + 1e-7):
            return None
        status = self._primal(self.cost)
        if status is not LPStatus.OPTIMAL:
            return None
        if not self._refresh(self.cost):
            return None
        return self._result(LPStatus.OPTIMAL)

    def _cold(self, lower, upper) -> LPResult:
        p = self.problem
        self.lo, self.up = self._full_bounds(lower, upper, np.inf)
        self.at_upper = np.zeros(self.N, bool)
        x = np.where(np.isfinite(self.lo), self.lo, 0.0)
        x[self.art0:] = 0.0
        resid = p.b - self.A_full[:, : self.art0] @ x[: self.art0]
        basic = np.empty(self.m, dtype=int)
        for i in range(self.m):
            sc = self.slack_col[i]
            if sc >= 0 and resid[i] * self.slack_coef[i] >= 0:
                basic[i] = sc
                x[sc] = resid[i] / self.slack_coef[i]
                self.up[self.art0 + i] = 0.0
            else:
                basic[i] = self.art0 + i
                if resid[i] < 0:
                    self.A_full[i, self.art0 + i] = -1.0
                else:
                    self.A_full[i, self.art0 + i] = 1.0
                x[self.art0 + i] = abs(resid[i])
        self.basic = basic
        self.is_basic = np.zeros(self.N, bool)
        self.is_basic[basic] = True
        self.x = x
        coef = self.A_full[np.arange(self.m), basic]
        self.T = self.A_full / coef[:, None]
        phase1 = np.zeros(self.N)
        phase1[self.art0:] = 1.0
        self._reduced_costs(phase1)
        status = self._primal(phase1)
        if status is not LPStatus.OPTIMAL:
            return self._result(status)
        infeas = float(self.x[self.art0:].sum())
        scale = 1.0 + float(np.abs(p.b).max(initial=0.0))
        if infeas > 1e-9 * scale:
            return self._result(LPStatus.INFEASIBLE)
        self.up[self.art0:] = 0.0
        self.x[self.art0:] = 0.0
        # drive zero-level artificials out of the basis where a pivot exists
        for r in range(self.m):
            if self.basic[r] >= self.art0:
                row = np.abs(self.T[r, : self.art0]) * ~self.is_basic[: self.art0]
                j = int(np.argmax(row)) if row.size else -1
                if j >= 0 and row[j] > 1e-7:
                    self._pivot(r, j)
        self._reduced_costs(self.cost)
        status = self._primal(self.cost)
        if status is not LPStatus.OPTIMAL:
            return self._result(status)
        if not self._refresh(self.cost):
            return self._result(LPStatus.INFEASIBLE)
        return self._result(LPStatus.OPTIMAL)


def solve_lp(problem: LPProblem) -> LPResult:
    return BoundedSimplex(problem).solve()
