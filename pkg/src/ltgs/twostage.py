"""Two-stage single-reservoir laboratory for future cost functions and water values.

Storage and hydro generation share one unit here, so outflow limits are
generation limits and no flow conversion is applied.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .lp import LinearProgram, SolverError, solve_lp

CASES = ("none", "min300", "max250", "statedep", "nonconvex")


@dataclass(frozen=True)
class TwoStageSpec:
    """Data of the illustrative second-stage problem.

    ``penalty`` prices slack on minimum-outflow rows. ``max_penalty`` prices
    slack on maximum-outflow rows; ``None`` keeps them hard, which is what
    gives a null water value above the cap. ``deficit_cost`` adds a priced
    deficit to the demand row; ``None`` omits it (thermal capacity alone
    covers demand).
    """

    costs: tuple = (100.0, 200.0, 300.0, 400.0)
    caps: tuple = (100.0, 100.0, 100.0, 100.0)
    demand: float = 400.0
    storage_cap: float = 400.0
    discharge_cap: float = 400.0
    inflows: tuple = (100.0, 0.0)
    probabilities: tuple = (0.5, 0.5)
    penalty: float = 50.0
    max_penalty: float | None = None
    deficit_cost: float | None = None
    case: str = "none"

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; expected one of {CASES}")
        if len(self.costs) != len(self.caps):
            raise ValueError("costs and caps differ in length")
        if len(self.inflows) != len(self.probabilities) or not self.inflows:
            raise ValueError("inflows and probabilities differ in length")
        if abs(sum(self.probabilities) - 1.0) > 1e-12 or min(self.probabilities) < 0:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        if min(self.caps) < 0 or self.storage_cap < 0 or self.discharge_cap < 0:
            raise ValueError("capacities must be nonnegative")
        if self.penalty < 0 or (self.max_penalty is not None and self.max_penalty < 0):
            raise ValueError("penalties must be nonnegative")

    def with_case(self, case: str) -> "TwoStageSpec":
        return replace(self, case=case)


def max_generation(case: str, v_init: float) -> float | None:
    """Upper limit on hydro generation imposed by the case, or None."""
    if case == "max250":
        return 250.0
    if case == "statedep":
        return 250.0 + 0.3 * v_init
    if case == "nonconvex":
        return 250.0 if v_init <= 300.0 else 10.0 + 0.8 * v_init
    return None


def min_generation(case: str) -> float | None:
    return 300.0 if case == "min300" else None


def scenario_lp(spec: TwoStageSpec, v_init: float, inflow: float) -> LinearProgram:
    """Second-stage LP for one inflow. Variables: pt_1..pt_G, ph, v_out, slacks."""
    G = len(spec.costs)
    c = list(spec.costs) + [0.0, 0.0]
    lo = [0.0] * (G + 2)
    hi = list(spec.caps) + [spec.discharge_cap, spec.storage_cap]
    names = [f"pt{g + 1}" for g in range(G)] + ["ph", "v_out"]
    rows = []  # (coefs by name, sense, rhs, row name)

    def add_var(name, cost, upper=np.inf):
        names.append(name)
        c.append(cost)
        lo.append(0.0)
        hi.append(upper)

    demand = {f"pt{g + 1}": 1.0 for g in range(G)} | {"ph": 1.0}
    if spec.deficit_cost is not None:
        add_var("deficit", spec.deficit_cost)
        demand["deficit"] = 1.0
    rows.append((demand, "=", spec.demand, "demand"))
    rows.append(({"v_out": 1.0, "ph": 1.0}, "=", v_init + inflow, "balance"))

    qmin = min_generation(spec.case)
    if qmin is not None:
        add_var("s_min", spec.penalty)
        rows.append(({"ph": 1.0, "s_min": 1.0}, ">=", qmin, "min_generation"))
    qmax = max_generation(spec.case, v_init)
    if qmax is not None:
        coefs = {"ph": 1.0}
        if spec.max_penalty is not None:
            add_var("s_max", spec.max_penalty)
            coefs["s_max"] = -1.0
        rows.append((coefs, "<=", qmax, "max_generation"))

    col = {nm: j for j, nm in enumerate(names)}
    A = np.zeros((len(rows), len(names)))
    for i, (coefs, _, _, _) in enumerate(rows):
        for nm, a in coefs.items():
            A[i, col[nm]] = a
    return LinearProgram(
        c=np.array(c), A=A, senses=[r[1] for r in rows], b=np.array([r[2] for r in rows]),
        lower=np.array(lo), upper=np.array(hi), var_names=names, row_names=[r[3] for r in rows],
    )


def scenario_cost(spec: TwoStageSpec, v_init: float, inflow: float) -> float:
    sol = solve_lp(scenario_lp(spec, v_init, inflow))
    if not sol.optimal:
        raise SolverError(f"second stage {sol.status} at storage {v_init}, inflow {inflow}")
    return float(sol.objective)


def fcf(spec: TwoStageSpec, v_grid) -> np.ndarray:
    """Expected second-stage cost at each initial storage of the grid."""
    v_grid = np.asarray(v_grid, float)
    if np.any(v_grid < 0) or np.any(v_grid > spec.storage_cap):
        raise ValueError(f"storage grid must lie in [0, {spec.storage_cap}]")
    out = np.empty(v_grid.size)
    for k, v in enumerate(v_grid):
        out[k] = sum(p * scenario_cost(spec, v, y) for y, p in zip(spec.inflows, spec.probabilities))
    return out


def water_values(values, v_grid) -> np.ndarray:
    """Derivative of the future cost in storage: central inside, one-sided at the ends."""
    values = np.asarray(values, float)
    v_grid = np.asarray(v_grid, float)
    if v_grid.size < 2 or values.shape != v_grid.shape:
        raise ValueError("need at least two grid points matching the values")
    step = np.diff(v_grid)
    if np.any(step == 0):
        raise ValueError("duplicate grid points")
    if np.any(step < 0):
        raise ValueError("grid must be sorted")
    return np.gradient(values, v_grid)


def second_differences(values, v_grid) -> np.ndarray:
    """Divided second differences over consecutive grid triples."""
    values = np.asarray(values, float)
    v_grid = np.asarray(v_grid, float)
    slopes = np.diff(values) / np.diff(v_grid)
    return np.diff(slopes) / (0.5 * (v_grid[2:] - v_grid[:-2]))


def default_grid(step: float = 10.0, top: float = 400.0) -> np.ndarray:
    return np.arange(0.0, top + 0.5 * step, step)


@dataclass
class Curve:
    case: str
    v: np.ndarray
    cost: np.ndarray
    water_value: np.ndarray = field(init=False)
    nonconvex: np.ndarray = field(init=False)

    def __post_init__(self):
        self.water_value = water_values(self.cost, self.v)
        flag = np.zeros(self.v.size, dtype=bool)
        if self.v.size >= 3:
            flag[1:-1] = second_differences(self.cost, self.v) < -1e-6
        self.nonconvex = flag


def study(spec: TwoStageSpec | None = None, v_grid=None, cases=CASES) -> dict:
    """Future cost curves for several cases on a common grid."""
    spec = spec or TwoStageSpec()
    v_grid = default_grid() if v_grid is None else np.asarray(v_grid, float)
    return {case: Curve(case, v_grid, fcf(spec.with_case(case), v_grid)) for case in cases}


def write_curve(curve: Curve, path) -> None:
    """Write (storage, cost, water value, nonconvex flag) rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "v_init", "fcf", "water_value", "nonconvex"])
        for v, f, wv, nc in zip(curve.v, curve.cost, curve.water_value, curve.nonconvex):
            w.writerow([curve.case, repr(float(v)), repr(float(f)), repr(float(wv)), int(nc)])
