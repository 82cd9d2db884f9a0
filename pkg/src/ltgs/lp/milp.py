"""Best-bound branch-and-bound over 0-1 variables."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from .program import LinearProgram, LpSolution, relax
from .simplex import solve_lp

ROUND_EVERY = 16  # nodes between rounding attempts once an incumbent exists


@dataclass(frozen=True)
class MilpOptions:
    int_tol: float = 1e-6
    gap: float = 1e-6
    node_limit: int = 100_000
    branching: str = "most_fractional"
    exploration: str = "best_bound"

    def __post_init__(self):
        if self.int_tol <= 0 or self.gap <= 0:
            raise ValueError("tolerances must be positive")
        if self.node_limit < 1:
            raise ValueError("node_limit must be at least 1")
        if self.branching != "most_fractional" or self.exploration != "best_bound":
            raise ValueError("only most-fractional branching with best-bound search is available")


def _fractional(x, idx, tol):
    f = x[idx] - np.floor(x[idx])
    dist = np.minimum(f, 1.0 - f)
    k = int(np.argmax(dist))
    return (int(idx[k]), dist[k]) if dist[k] > tol else (None, 0.0)


def solve_milp(lp: LinearProgram, markings, opts: MilpOptions | None = None, basis=None) -> LpSolution:
    """Minimize over x with the marked variables restricted to {0, 1}.

    Row duals and reduced costs come from the LP re-solved with every binary
    fixed at its incumbent value.
    """
    opts = opts or MilpOptions()
    mark = np.zeros(lp.n, bool) if markings is None else np.asarray(markings, dtype=bool)
    if mark.size != lp.n:
        raise ValueError("markings must have one entry per variable")
    if np.any(lp.lower[mark] < 0) or np.any(lp.upper[mark] > 1):
        raise ValueError("marked variables must have bounds within [0, 1]")
    root = relax(lp, mark)
    idx = np.flatnonzero(mark)
    if idx.size == 0:
        return solve_lp(root, basis=basis)

    tiebreak = itertools.count()
    inc_x, inc_obj = None, np.inf
    nodes = 0
    heap = [(-np.inf, 0, next(tiebreak), root.lower, root.upper, basis)]
    best_bound = -np.inf

    def gap_closed(bound):
        return bound >= inc_obj - opts.gap * max(1.0, abs(inc_obj))

    while heap:
        bound, negdepth, _, lower, upper, warm = heapq.heappop(heap)
        if inc_x is not None and gap_closed(bound):
            heap.clear()
            break
        if nodes >= opts.node_limit:
            heapq.heappush(heap, (bound, negdepth, next(tiebreak), lower, upper, warm))
            break
        nodes += 1
        sol = solve_lp(root.with_bounds(lower, upper), basis=warm)
        if sol.status == "unbounded":
            return LpSolution(status="unbounded", nodes=nodes)
        if sol.status != "optimal":
            continue
        if inc_x is not None and gap_closed(sol.objective):
            continue
        j, _ = _fractional(sol.x, idx, opts.int_tol)
        if j is None:
            inc_x, inc_obj = sol.x.copy(), sol.objective
            continue
        if inc_x is None or nodes % ROUND_EVERY == 1:
            # rounding heuristic: fix every marked variable at its rounded value
            lo, hi = lower.copy(), upper.copy()
            lo[idx] = hi[idx] = np.round(sol.x[idx])
            rounded = solve_lp(root.with_bounds(lo, hi), basis=sol.basis)
            if rounded.optimal and rounded.objective < inc_obj:
                inc_x, inc_obj = rounded.x.copy(), rounded.objective
                if gap_closed(sol.objective):
                    continue
        for val in (0.0, 1.0):
            lo, hi = lower.copy(), upper.copy()
            lo[j] = hi[j] = val
            heapq.heappush(heap, (sol.objective, negdepth - 1, next(tiebreak), lo, hi, sol.basis))

    if heap:
        best_bound = min(h[0] for h in heap)
        best_bound = min(best_bound, inc_obj)
        status = "node_limit"
    else:
        best_bound = inc_obj
        status = "optimal"
    if inc_x is None:
        if status == "node_limit":
            return LpSolution(status=status, bound=best_bound, nodes=nodes)
        return LpSolution(status="infeasible", nodes=nodes)

    fixed = np.round(inc_x[idx])
    lo, hi = root.lower.copy(), root.upper.copy()
    lo[idx] = hi[idx] = fixed
    final = solve_lp(root.with_bounds(lo, hi))
    if not final.optimal:
        # The incumbent itself is feasible for the fixed LP; fall back to it.
        return LpSolution(status=status, x=inc_x, objective=inc_obj, bound=best_bound, nodes=nodes)
    final.status = status
    final.bound = best_bound
    final.nodes = nodes
    return final
