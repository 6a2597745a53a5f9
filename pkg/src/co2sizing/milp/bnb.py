"""Best-first branch-and-bound over 0/1 columns of an :class:`LPProblem`."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .simplex import Basis, BoundedSimplex, LPProblem, LPStatus

INT_TOL = 1e-6


@dataclass
class BranchStats:
    nodes: int = 0
    lp_iterations: int = 0
    max_queue: int = 0


@dataclass
class BranchResult:
    status: LPStatus
    x: np.ndarray | None
    objective: float
    stats: BranchStats = field(default_factory=BranchStats)


def absolute_gap(incumbent: float) -> float:
    """Pruning tolerance: 1e-6 absolute, widened to float resolution for large totals."""
    return max(1e-6, 1e-9 * abs(incumbent))


def branch_and_bound(problem: LPProblem, binary: np.ndarray, *,
                     exact_objective: Callable[[np.ndarray], float],
                     tie_key: Callable[[np.ndarray], tuple],
                     objective_scale: float = 1.0,
                     tie_groups: list[list[int]] | None = None,
                     max_nodes: int = 200000) -> BranchResult:
    """Minimise over ``x[binary] in {0, 1}``.

    ``problem.c`` is the scaled objective used by the LP; ``exact_objective``
    recomputes the true cost of an integral point and ``objective_scale``
    converts true costs into LP units for pruning.  Among solutions of equal
    true cost (within the gap) the one with the smallest ``tie_key`` wins, so
    nodes whose bound ties the incumbent are still explored.

    ``tie_groups`` lists the selection columns of each choice in ``tie_key``
    order, smallest option first.  An integral node is only a leaf once no
    group could still switch to a smaller option; otherwise it is split on
    that group's chosen column so equal-cost alternatives are not missed.
    """
    binary = np.asarray(binary, dtype=int)
    engine = BoundedSimplex(problem)
    stats = BranchStats()
    root = engine.solve()
    stats.lp_iterations += root.iterations
    if root.status is not LPStatus.OPTIMAL:
        return BranchResult(root.status, None, np.inf, stats)

    best_x: np.ndarray | None = None
    best_obj = np.inf
    best_key: tuple | None = None
    seq = itertools.count()
    heap: list = [(root.objective, next(seq), problem.lower.copy(), problem.upper.copy(), root.x, root.basis)]

    def prunable(bound: float) -> bool:
        if best_x is None:
            return False
        return bound > (best_obj + absolute_gap(best_obj)) * objective_scale

    while heap:
        if stats.nodes >= max_nodes:
            return BranchResult(LPStatus.ITERATION_LIMIT, best_x, best_obj, stats)
        bound, _, lo, up, x, basis = heapq.heappop(heap)
        stats.nodes += 1
        if prunable(bound):
            continue
        vals = x[binary]
        frac = np.abs(vals - np.round(vals))
        if frac.max(initial=0.0) <= INT_TOL:
            xi = x.copy()
            xi[binary] = np.round(vals)
            obj = exact_objective(xi)
            key = tie_key(xi)
            gap = absolute_gap(min(obj, best_obj)) if best_x is not None else 0.0
            if best_x is None or obj < best_obj - gap or (abs(obj - best_obj) <= gap and key < best_key):
                best_x, best_obj, best_key = xi, obj, key
            col = _tie_split(tie_groups, xi, lo, up)
            if col is None:
                continue
        else:
            dist = np.minimum(vals - np.floor(vals), np.ceil(vals) - vals)
            col = int(binary[int(np.argmax(dist))])  # first index on ties
        for child in (0, 1):
            clo, cup = lo.copy(), up.copy()
            if child == 0:
                cup[col] = 0.0
            else:
                clo[col] = 1.0
            res = engine.solve(clo, cup, basis)
            stats.lp_iterations += res.iterations
            if res.status is LPStatus.OPTIMAL and not prunable(res.objective):
                heapq.heappush(heap, (res.objective, next(seq), clo, cup, res.x, res.basis))
        stats.max_queue = max(stats.max_queue, len(heap))

    if best_x is None:
        return BranchResult(LPStatus.INFEASIBLE, None, np.inf, stats)
    return BranchResult(LPStatus.OPTIMAL, best_x, best_obj, stats)


def _tie_split(groups, x, lo, up) -> int | None:
    """Chosen column of the first group that could still take a smaller option."""
    for cols in groups or ():
        chosen = next(c for c in cols if x[c] > 0.5)
        if lo[chosen] >= 1.0:
            continue
        if any(up[c] > 0.0 for c in cols[:cols.index(chosen)]):
            return chosen
    return None


def resolve_fixed(problem: LPProblem, lower: np.ndarray, upper: np.ndarray, c: np.ndarray | None = None,
                  basis: Basis | None = None):
    """Solve the LP with tightened bounds and an optional replacement objective."""
    if c is not None:
        problem = LPProblem(c, problem.A, problem.senses, problem.b, problem.lower, problem.upper)
    return BoundedSimplex(problem).solve(lower, upper, basis)
