"""Containers for linear programs and their solutions."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

SENSES = ("<=", ">=", "=")


class SolverError(RuntimeError):
    """Raised when the simplex cannot finish (iteration limit, numerical breakdown)."""


@dataclass
class LinearProgram:
    """min c'x  s.t.  A x (sense) b,  lower <= x <= upper."""

    c: np.ndarray
    A: np.ndarray
    senses: tuple[str, ...]
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    var_names: list[str] | None = None
    row_names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n) if n else np.zeros((len(self.b), 0))
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        self.senses = tuple(self.senses)
        m = self.b.size
        if self.A.shape != (m, n):
            raise ValueError(f"A has shape {self.A.shape}, expected {(m, n)}")
        if len(self.senses) != m:
            raise ValueError(f"{len(self.senses)} senses for {m} rows")
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bound vectors must have one entry per variable")
        bad = [s for s in self.senses if s not in SENSES]
        if bad:
            raise ValueError(f"unknown row sense {bad[0]!r}")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A))):
            raise ValueError("objective and constraint coefficients must be finite")
        if not np.all(np.isfinite(self.b)):
            raise ValueError("right-hand sides must be finite")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds must not be NaN")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise ValueError("lower bounds of +inf or upper bounds of -inf are not allowed")
        if np.any(self.lower > self.upper):
            j = int(np.argmax(self.lower > self.upper))
            raise ValueError(f"variable {j} has lower bound above upper bound")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size

    def with_bounds(self, lower, upper) -> "LinearProgram":
        return replace(self, lower=np.asarray(lower, dtype=float), upper=np.asarray(upper, dtype=float))

    def objective(self, x) -> float:
        return float(self.c @ x)

    def residuals(self, x) -> np.ndarray:
        """Signed violation of each row at x (positive means violated)."""
        ax = self.A @ x
        out = np.zeros(self.m)
        for i, s in enumerate(self.senses):
            if s == "<=":
                out[i] = ax[i] - self.b[i]
            elif s == ">=":
                out[i] = self.b[i] - ax[i]
            else:
                out[i] = abs(ax[i] - self.b[i])
        return out


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    objective: float = float("nan")
    iterations: int = 0
    basis: np.ndarray | None = field(default=None, repr=False)
    bound: float = float("nan")
    nodes: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def relax(lp: LinearProgram, markings) -> LinearProgram:
    """Replace 0-1 markings by continuous [0, 1] boxes. The program itself is unchanged."""
    markings = np.asarray(markings, dtype=bool) if markings is not None else np.zeros(lp.n, bool)
    if not markings.any():
        return lp
    lower, upper = lp.lower.copy(), lp.upper.copy()
    lower[markings] = np.maximum(lower[markings], 0.0)
    upper[markings] = np.minimum(upper[markings], 1.0)
    return lp.with_bounds(lower, upper)


def certificate(lp: LinearProgram, sol: LpSolution) -> dict[str, float]:
    """Primal residual, duality gap and complementarity violation of an optimal solution.

    Row duals follow the convention d(objective)/d(rhs). The dual objective uses
    each reduced cost against the bound it prices, so the gap is a genuine
    certificate rather than an algebraic identity.
    """
    x, y, d = sol.x, sol.duals, sol.reduced_costs
    scale = max(1.0, float(np.max(np.abs(lp.b), initial=0.0)), float(np.max(np.abs(x), initial=0.0)))
    primal = float(np.max(np.maximum(lp.residuals(x), 0.0), initial=0.0)) / scale
    if lp.n:
        primal = max(primal, float(np.max(np.maximum(lp.lower - x, 0.0))) / scale)
        primal = max(primal, float(np.max(np.maximum(x - lp.upper, 0.0))) / scale)

    cmax = max(1.0, float(np.max(np.abs(lp.c), initial=0.0)))
    sign_viol = 0.0
    for i, s in enumerate(lp.senses):
        if s == "<=":
            sign_viol = max(sign_viol, y[i])
        elif s == ">=":
            sign_viol = max(sign_viol, -y[i])
    dual_obj = float(y @ lp.b)
    comp = 0.0
    for j in range(lp.n):
        dj = d[j]
        if dj > 0:
            bnd = lp.lower[j]
        elif dj < 0:
            bnd = lp.upper[j]
        else:
            continue
        if np.isinf(bnd):
            sign_viol = max(sign_viol, abs(dj))
            continue
        dual_obj += dj * bnd
        comp = max(comp, abs(dj * (x[j] - bnd)))
    ax = lp.A @ x
    for i in range(lp.m):
        comp = max(comp, abs(y[i] * (ax[i] - lp.b[i])))
    primal_obj = float(lp.c @ x)
    denom = max(1.0, abs(primal_obj))
    return {
        "primal_residual": primal,
        "duality_gap": abs(primal_obj - dual_obj) / denom,
        "complementarity": comp / denom,
        "dual_sign": sign_viol / cmax,
    }


def write_lp(lp: LinearProgram, path, integer=None) -> None:
    """Dump a program in CPLEX-LP-like text for cross-checking with external solvers."""
    names = lp.var_names or [f"x{j}" for j in range(lp.n)]
    rnames = lp.row_names or [f"r{i}" for i in range(lp.m)]
    names = [_lp_name(s) for s in names]

    def term(coef, name):
        return f"{'-' if coef < 0 else '+'} {abs(coef):.17g} {name}"

    obj = " ".join(term(v, names[j]) for j, v in enumerate(lp.c) if v != 0)
    lines = ["Minimize", " obj: " + (obj or "0")]
    lines.append("Subject To")
    op = {"<=": "<=", ">=": ">=", "=": "="}
    for i in range(lp.m):
        row = lp.A[i]
        body = " ".join(term(v, names[j]) for j, v in enumerate(row) if v != 0) or "0 " + names[0]
        lines.append(f" {_lp_name(rnames[i])}: {body} {op[lp.senses[i]]} {lp.b[i]:.17g}")
    lines.append("Bounds")
    for j in range(lp.n):
        lo, hi = lp.lower[j], lp.upper[j]
        lo_s = "-inf" if np.isinf(lo) else f"{lo:.17g}"
        hi_s = "+inf" if np.isinf(hi) else f"{hi:.17g}"
        lines.append(f" {lo_s} <= {names[j]} <= {hi_s}")
    if integer is not None and np.any(integer):
        lines.append("Binaries")
        lines.extend(" " + names[j] for j in np.flatnonzero(integer))
    lines.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _lp_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "_.[]" else "_" for ch in name)
