"""Bounded-variable revised primal simplex.

The program is brought to the computational form ``A x - r = 0`` where each
row activity ``r_i`` is a logical variable carrying the row's sense as bounds.
Structural and logical variables are handled uniformly: nonbasic variables
sit at a bound (or at zero when free) and the basis inverse is kept dense and
updated in product form, with periodic refactorization. The iteration
kernel is compiled with numba.

Phase 1 minimizes the sum of bound infeasibilities of the basic variables with
a long-step ratio test; phase 2 uses Dantzig pricing and a Harris ratio test.
Bland's rule takes over after a long run of nonimproving pivots.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .program import LinearProgram, LpSolution, SolverError

BASIC, AT_LOWER, AT_UPPER, AT_ZERO = 0, 1, 2, 3

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
HARRIS_TOL = 1e-10
REFACTOR_EVERY = 64
BLAND_AFTER = 1000
SCALE_NOISE = 1e-12
SCALE_MAX_LOG2 = 20


_STATUS = {0: "optimal", 1: "infeasible", 2: "unbounded"}


def scale_factors(A, passes=4):
    """Geometric-mean row/column scale factors, rounded to powers of two."""
    A = np.ascontiguousarray(A, dtype=float)
    if A.size == 0:
        return np.ones(A.shape[0]), np.ones(A.shape[1])
    lr, lc = _scale_logs(A, passes)
    return np.exp2(np.round(lr)), np.exp2(np.round(lc))


@njit(cache=True)
def _scale_logs(A, passes):
    m, n = A.shape
    big = 0.0
    for i in range(m):
        for j in range(n):
            big = max(big, abs(A[i, j]))
    lr = np.zeros(m)
    lc = np.zeros(n)
    if big == 0.0:
        return lr, lc
    # entries far below the largest one are round-off noise; they would drag
    # the factors to extremes, so they take no part in the scaling
    cut = SCALE_NOISE * big
    logA = np.zeros((m, n))
    nz = np.zeros((m, n), dtype=np.bool_)
    for i in range(m):
        for j in range(n):
            if abs(A[i, j]) > cut:
                nz[i, j] = True
                logA[i, j] = np.log2(abs(A[i, j]))
    for _ in range(passes):
        for i in range(m):
            lo, hi = np.inf, -np.inf
            for j in range(n):
                if nz[i, j]:
                    v = logA[i, j] + lr[i] + lc[j]
                    lo, hi = min(lo, v), max(hi, v)
            if hi >= lo:
                lr[i] -= 0.5 * (lo + hi)
        for j in range(n):
            lo, hi = np.inf, -np.inf
            for i in range(m):
                if nz[i, j]:
                    v = logA[i, j] + lr[i] + lc[j]
                    lo, hi = min(lo, v), max(hi, v)
            if hi >= lo:
                lc[j] -= 0.5 * (lo + hi)
    for i in range(m):
        lr[i] = min(max(lr[i], -SCALE_MAX_LOG2), SCALE_MAX_LOG2)
    for j in range(n):
        lc[j] = min(max(lc[j], -SCALE_MAX_LOG2), SCALE_MAX_LOG2)
    return lr, lc


def _row_bounds(senses, b):
    m = len(b)
    lo = np.full(m, -np.inf)
    hi = np.full(m, np.inf)
    for i, s in enumerate(senses):
        if s == "<=":
            hi[i] = b[i]
        elif s == ">=":
            lo[i] = b[i]
        else:
            lo[i] = hi[i] = b[i]
    return lo, hi


class SimplexSolver:
    """Private working state for one solve. Create one per solve or per thread."""

    def __init__(self, scale=True, max_iter=None):
        self.scale = scale
        self.max_iter = max_iter

    def solve(self, lp: LinearProgram, basis=None) -> LpSolution:
        m, n = lp.m, lp.n
        if self.scale and m and n:
            R, C = scale_factors(lp.A)
        else:
            R, C = np.ones(m), np.ones(n)
        A = lp.A * R[:, None] * C[None, :]
        c = lp.c * C
        # Bring the largest cost near 1 so the dual tolerance acts relative to the costs.
        big = np.abs(c).max(initial=0.0)
        cscale = 2.0 ** -np.round(np.log2(big)) if self.scale and big > 0 else 1.0
        c = c * cscale
        rlo, rhi = _row_bounds(lp.senses, lp.b * R)
        lo = np.concatenate([lp.lower / C, rlo])
        hi = np.concatenate([lp.upper / C, rhi])
        cost = np.concatenate([c, np.zeros(m)])
        max_iter = self.max_iter or max(10000, 50 * (m + n))

        A = np.ascontiguousarray(A)
        status, basic = self._initial_basis(m, n, basis)
        x = np.zeros(n + m)
        y = np.zeros(m)
        code, iters = _primal_simplex(A, cost, lo, hi, status, basic, max_iter, x, y)
        if code == 4 and basis is not None:
            # the warm basis was singular; start over from the slack basis
            status, basic = self._initial_basis(m, n, None)
            code, iters = _primal_simplex(A, cost, lo, hi, status, basic, max_iter, x, y)
        if code == 3:
            raise SolverError(f"simplex iteration limit {max_iter} reached")
        if code == 4:
            raise SolverError("singular basis")
        if code != 0:
            return LpSolution(status=_STATUS[code], iterations=iters, basis=status)
        xs = x[:n] * C
        # Snap values that drifted marginally outside their box.
        xs = np.minimum(np.maximum(xs, lp.lower), lp.upper)
        duals = y * R / cscale
        red = lp.c - lp.A.T @ duals
        return LpSolution(
            status="optimal",
            x=xs,
            duals=duals,
            reduced_costs=red,
            objective=float(lp.c @ xs),
            iterations=iters,
            basis=status,
        )

    @staticmethod
    def _initial_basis(m, n, basis):
        N = n + m
        if basis is not None:
            basis = np.asarray(basis, dtype=np.int8)
            if basis.size == N and int(np.count_nonzero(basis == BASIC)) == m:
                status = basis.copy()
                return status, np.flatnonzero(status == BASIC)
        status = np.empty(N, dtype=np.int8)
        status[:n] = AT_LOWER
        status[n:] = BASIC
        return status, np.arange(n, N)


@njit(cache=True)
def _place_nonbasic(lo, hi, status, x):
    for j in range(status.size):
        if status[j] == BASIC:
            continue
        if status[j] == AT_UPPER and np.isfinite(hi[j]):
            x[j] = hi[j]
        elif np.isfinite(lo[j]):
            x[j], status[j] = lo[j], AT_LOWER
        elif np.isfinite(hi[j]):
            x[j], status[j] = hi[j], AT_UPPER
        else:
            x[j], status[j] = 0.0, AT_ZERO


@njit(cache=True)
def _column(A, q, out):
    """Column q of the computational matrix [A | -I]."""
    m, n = A.shape
    if q < n:
        for i in range(m):
            out[i] = A[i, q]
    else:
        out[:] = 0.0
        out[q - n] = -1.0


@njit(cache=True)
def _refactor(A, basic, status, x, Binv):
    """Invert the basis by Gauss-Jordan with partial pivoting and recompute x_B.

    Returns False when the basis is numerically singular.
    """
    m, n = A.shape
    B = np.empty((m, m))
    col = np.empty(m)
    for k in range(m):
        _column(A, basic[k], col)
        B[:, k] = col
    Binv[:, :] = 0.0
    for i in range(m):
        Binv[i, i] = 1.0
    big = 0.0
    for i in range(m):
        for k in range(m):
            big = max(big, abs(B[i, k]))
    for k in range(m):
        p = k
        for i in range(k + 1, m):
            if abs(B[i, k]) > abs(B[p, k]):
                p = i
        if abs(B[p, k]) <= 1e-13 * max(big, 1.0):
            return False
        if p != k:
            for j in range(m):
                B[k, j], B[p, j] = B[p, j], B[k, j]
                Binv[k, j], Binv[p, j] = Binv[p, j], Binv[k, j]
        piv = B[k, k]
        for j in range(m):
            B[k, j] /= piv
            Binv[k, j] /= piv
        for i in range(m):
            if i != k and B[i, k] != 0.0:
                f = B[i, k]
                for j in range(m):
                    B[i, j] -= f * B[k, j]
                    Binv[i, j] -= f * Binv[k, j]
    # x_B = -Binv (N x_N)
    r = np.zeros(m)
    for j in range(n):
        if status[j] != BASIC and x[j] != 0.0:
            for i in range(m):
                r[i] += A[i, j] * x[j]
    for i in range(m):
        j = n + i
        if status[j] != BASIC:
            r[i] -= x[j]
    for k in range(m):
        acc = 0.0
        for i in range(m):
            acc += Binv[k, i] * r[i]
        x[basic[k]] = -acc
    return True


@njit(cache=True)
def _ratio_harris(xb, lob, hib, rate, span, bland, basic):
    """Two-pass Harris ratio test. Returns (step, leaving position, value, status); step < 0 means unbounded."""
    m = rate.size
    theta = np.inf
    for i in range(m):
        if rate[i] > PIVOT_TOL and np.isfinite(hib[i]):
            theta = min(theta, (hib[i] + HARRIS_TOL - xb[i]) / rate[i])
        elif rate[i] < -PIVOT_TOL and np.isfinite(lob[i]):
            theta = min(theta, (lob[i] - HARRIS_TOL - xb[i]) / rate[i])
    if np.isfinite(span) and span <= theta:
        return span, -1, 0.0, 0
    if not np.isfinite(theta):
        return -1.0, -1, 0.0, 0
    p = -1
    best = -1.0
    for i in range(m):
        if rate[i] > PIVOT_TOL and np.isfinite(hib[i]):
            ex = (hib[i] - xb[i]) / rate[i]
        elif rate[i] < -PIVOT_TOL and np.isfinite(lob[i]):
            ex = (lob[i] - xb[i]) / rate[i]
        else:
            continue
        if ex > theta:
            continue
        if bland:
            if p < 0 or basic[i] < basic[p]:
                p = i
        elif abs(rate[i]) > best:
            best = abs(rate[i])
            p = i
    if rate[p] > 0:
        return max((hib[p] - xb[p]) / rate[p], 0.0), p, hib[p], AT_UPPER
    return max((lob[p] - xb[p]) / rate[p], 0.0), p, lob[p], AT_LOWER


@njit(cache=True)
def _ratio_phase1(xb, lob, hib, rate, span, slope0):
    """Long-step ratio test on the piecewise-linear sum of infeasibilities."""
    m = rate.size
    ts = np.empty(2 * m + 1)
    incs = np.empty(2 * m + 1)
    pos = np.empty(2 * m + 1, dtype=np.int64)
    kind = np.empty(2 * m + 1, dtype=np.int64)
    nb = 0
    for i in range(m):
        r = rate[i]
        if abs(r) <= PIVOT_TOL:
            continue
        below = xb[i] < lob[i] - PRIMAL_TOL
        above = xb[i] > hib[i] + PRIMAL_TOL
        if r > 0:
            if below:
                ts[nb], incs[nb], pos[nb], kind[nb] = (lob[i] - xb[i]) / r, abs(r), i, AT_LOWER
                nb += 1
            if np.isfinite(hib[i]) and not above:
                ts[nb], incs[nb], pos[nb], kind[nb] = max((hib[i] - xb[i]) / r, 0.0), abs(r), i, AT_UPPER
                nb += 1
        else:
            if above:
                ts[nb], incs[nb], pos[nb], kind[nb] = (hib[i] - xb[i]) / r, abs(r), i, AT_UPPER
                nb += 1
            if np.isfinite(lob[i]) and not below:
                ts[nb], incs[nb], pos[nb], kind[nb] = max((lob[i] - xb[i]) / r, 0.0), abs(r), i, AT_LOWER
                nb += 1
    if np.isfinite(span):
        ts[nb], incs[nb], pos[nb], kind[nb] = span, np.inf, -1, -1
        nb += 1
    if nb == 0:
        return -1.0, -1, 0.0, 0
    order = np.argsort(ts[:nb], kind="mergesort")
    slope = slope0
    stop = nb - 1
    for s in range(nb):
        slope += incs[order[s]]
        if slope >= -DUAL_TOL:
            stop = s
            break
    t = ts[order[stop]]
    # Among breakpoints tied with the step, prefer a bound flip, then the largest pivot.
    tie = t - 1e-12 * max(1.0, abs(t))
    k = -1
    for s in range(stop + 1):
        j = order[s]
        if ts[j] < tie:
            continue
        if pos[j] < 0:
            return max(t, 0.0), -1, 0.0, 0
        if k < 0 or incs[j] > incs[k]:
            k = j
    p = pos[k]
    val = lob[p] if kind[k] == AT_LOWER else hib[p]
    return max(ts[k], 0.0), p, val, kind[k]


@njit(cache=True)
def _primal_simplex(A, cost, lo, hi, status, basic, max_iter, x, y):
    """Composite two-phase primal simplex on [A | -I].

    Fills x (all variables) and y (row duals). Returns (code, iterations)
    with code 0 optimal, 1 infeasible, 2 unbounded, 3 iteration limit,
    4 singular basis.
    """
    m, n = A.shape
    N = n + m
    _place_nonbasic(lo, hi, status, x)
    Binv = np.empty((m, m))
    if not _refactor(A, basic, status, x, Binv):
        return 4, 0
    since_refactor = 0
    stall = 0
    last_obj = np.inf
    was_phase1 = True
    reentries = 0
    xb = np.empty(m)
    lob = np.empty(m)
    hib = np.empty(m)
    cB = np.empty(m)
    d = np.empty(N)
    col = np.empty(m)
    alpha = np.empty(m)
    rate = np.empty(m)

    for it in range(max_iter):
        for k in range(m):
            xb[k] = x[basic[k]]
            lob[k] = lo[basic[k]]
            hib[k] = hi[basic[k]]
        phase1 = False
        for k in range(m):
            if xb[k] < lob[k] - PRIMAL_TOL or xb[k] > hib[k] + PRIMAL_TOL:
                phase1 = True
                break
        if phase1 and not was_phase1:
            # feasibility lost in phase 2 is usually drift in x_B; recompute it,
            # and fall back to Bland's rule if the phases keep alternating
            reentries += 1
            if not _refactor(A, basic, status, x, Binv):
                return 4, it
            since_refactor = 0
            phase1 = False
            for k in range(m):
                xb[k] = x[basic[k]]
                if xb[k] < lob[k] - PRIMAL_TOL or xb[k] > hib[k] + PRIMAL_TOL:
                    phase1 = True
        was_phase1 = phase1
        obj = 0.0
        if phase1:
            for k in range(m):
                if xb[k] < lob[k] - PRIMAL_TOL:
                    cB[k] = -1.0
                    obj += lob[k] - xb[k]
                elif xb[k] > hib[k] + PRIMAL_TOL:
                    cB[k] = 1.0
                    obj += xb[k] - hib[k]
                else:
                    cB[k] = 0.0
        else:
            for k in range(m):
                cB[k] = cost[basic[k]]
            for j in range(N):
                obj += cost[j] * x[j]
        for i in range(m):
            acc = 0.0
            for k in range(m):
                acc += cB[k] * Binv[k, i]
            y[i] = acc
        for j in range(n):
            acc = 0.0 if phase1 else cost[j]
            for i in range(m):
                acc -= y[i] * A[i, j]
            d[j] = acc
        for i in range(m):
            d[n + i] = (0.0 if phase1 else cost[n + i]) + y[i]
        for k in range(m):
            d[basic[k]] = 0.0

        if obj < last_obj - 1e-12 * max(1.0, abs(last_obj)):
            stall = 0
        else:
            stall += 1
        last_obj = obj
        bland = stall >= BLAND_AFTER or reentries >= BLAND_AFTER // 20
        q = -1
        best = 0.0
        for j in range(N):
            st = status[j]
            if st == BASIC or lo[j] == hi[j]:
                continue
            dj = d[j]
            if (st == AT_LOWER and dj < -DUAL_TOL) or (st == AT_UPPER and dj > DUAL_TOL) or \
                    (st == AT_ZERO and abs(dj) > DUAL_TOL):
                if bland:
                    q = j
                    break
                if abs(dj) > best:
                    best = abs(dj)
                    q = j
        if q < 0:
            return (1 if phase1 else 0), it
        sigma = 1.0 if d[q] < 0 else -1.0

        _column(A, q, col)
        for k in range(m):
            acc = 0.0
            for i in range(m):
                acc += Binv[k, i] * col[i]
            alpha[k] = acc
            rate[k] = -sigma * alpha[k]
        span = hi[q] - lo[q]

        if phase1:
            t, p, leave_val, leave_st = _ratio_phase1(xb, lob, hib, rate, span, sigma * d[q])
        else:
            t, p, leave_val, leave_st = _ratio_harris(xb, lob, hib, rate, span, bland, basic)
        if t < 0:
            if phase1:
                # Phase-1 objective is bounded below; an unblocked ray means
                # numerical trouble. Refactor and retry.
                if not _refactor(A, basic, status, x, Binv):
                    return 4, it
                since_refactor = 0
                continue
            return 2, it

        x[q] += sigma * t
        for k in range(m):
            x[basic[k]] += rate[k] * t
        if p < 0:
            if sigma > 0:
                status[q] = AT_UPPER
                x[q] = hi[q]
            else:
                status[q] = AT_LOWER
                x[q] = lo[q]
            continue

        leaving = basic[p]
        x[leaving] = leave_val
        status[leaving] = leave_st
        status[q] = BASIC
        basic[p] = q
        since_refactor += 1
        if since_refactor >= REFACTOR_EVERY:
            if not _refactor(A, basic, status, x, Binv):
                return 4, it
            since_refactor = 0
        else:
            piv = alpha[p]
            for j in range(m):
                Binv[p, j] /= piv
            for k in range(m):
                if k != p and alpha[k] != 0.0:
                    f = alpha[k]
                    for j in range(m):
                        Binv[k, j] -= f * Binv[p, j]
    return 3, max_iter


def solve_lp(lp: LinearProgram, basis=None, scale=True) -> LpSolution:
    """Solve a linear program; optional warm-start basis status array (length n + m)."""
    sol = SimplexSolver(scale=scale).solve(lp, basis=basis)
    _notify(lp, sol)
    return sol


_observers = []


def add_observer(fn):
    """Register a callback invoked with (lp, solution) after every solve."""
    _observers.append(fn)
    return fn


def remove_observer(fn):
    if fn in _observers:
        _observers.remove(fn)


def _notify(lp, sol):
    for fn in _observers:
        fn(lp, sol)
