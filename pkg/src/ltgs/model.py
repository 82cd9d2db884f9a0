"""Hydrothermal system description and the base monthly dispatch subproblem.

Units: volumes in hm³, flows in m³/s, power in MW, costs per MWmonth.
Productivity is expressed in MWmonth/hm³, so hydro output is ``rho * K * q``
where ``K`` converts one m³/s sustained over a period into hm³.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .lp import LinearProgram


class ConfigurationError(ValueError):
    """Inconsistent system data or references to unknown plants."""


@dataclass(frozen=True)
class HydroPlant:
    id: int
    name: str
    max_generation: float
    useful_volume: float
    productivity: float
    max_turbined_outflow: float  # hm³ per month
    initial_volume: float
    upstream_ids: frozenset = frozenset()
    reference_id: int | None = None
    ec_flag: bool = False

    @property
    def reference(self) -> int:
        return self.id if self.reference_id is None else self.reference_id


@dataclass(frozen=True)
class ThermalPlant:
    id: int
    name: str
    max_generation: float
    unit_cost: float  # per MWmonth


@dataclass(frozen=True)
class SystemConfig:
    hydros: tuple
    thermals: tuple
    demand: tuple  # MW, one entry per stage of the horizon
    deficit_cost: float
    ec_penalty_min: float = 0.0
    ec_penalty_max: float = 0.0
    horizon_months: int = 24
    analysis_months: int = 12
    openings_per_stage: tuple = ()
    period_hours: float = 730.0
    q_sup: float | None = None
    start_month: int = 1
    ec_penalty_res: float | None = None  # None prices the restricted-range slack like the max slack

    @property
    def K(self) -> float:
        """hm³ delivered by 1 m³/s over one period."""
        return self.period_hours * 3600.0 / 1e6

    @property
    def period_seconds(self) -> float:
        return self.period_hours * 3600.0

    @property
    def Q_sup(self) -> float:
        if self.q_sup is not None:
            return float(self.q_sup)
        qmax = max((h.max_turbined_outflow for h in self.hydros), default=0.0)
        return 10.0 * qmax / self.K if qmax > 0 else 1e4

    @property
    def res_penalty(self) -> float:
        return self.ec_penalty_max if self.ec_penalty_res is None else self.ec_penalty_res

    def openings(self, stage: int) -> int:
        return self.openings_per_stage[stage - 1] if self.openings_per_stage else (1 if stage == 1 else 4)

    def month_of(self, stage: int) -> int:
        """Calendar month (1-12) of a 1-based stage."""
        return (self.start_month - 1 + stage - 1) % 12 + 1

    def hydro_index(self) -> dict:
        return {h.id: i for i, h in enumerate(self.hydros)}

    def hydro(self, key) -> HydroPlant:
        for h in self.hydros:
            if h.id == key or h.name == key:
                return h
        raise ConfigurationError(f"unknown hydro plant {key!r}")

    def with_(self, **changes) -> "SystemConfig":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class InflowScenario:
    stage: int
    opening: int
    inflows: Mapping  # plant id or name -> m³/s


def validate_system(config: SystemConfig) -> list[str]:
    """Return human-readable violations; empty when the data is consistent."""
    out = []
    ids = [h.id for h in config.hydros]
    if len(set(ids)) != len(ids):
        out.append("hydros: duplicate plant id")
    names = [h.name for h in config.hydros]
    if len(set(names)) != len(names):
        out.append("hydros: duplicate plant name")
    by_id = {h.id: h for h in config.hydros}
    for h in config.hydros:
        if not 0.0 <= h.initial_volume <= h.useful_volume:
            out.append(f"{h.name}: initial volume {h.initial_volume} outside [0, {h.useful_volume}]")
        for attr in ("productivity", "max_generation", "max_turbined_outflow", "useful_volume"):
            if getattr(h, attr) < 0:
                out.append(f"{h.name}: {attr} is negative")
        for u in h.upstream_ids:
            if u not in by_id:
                out.append(f"{h.name}: unknown upstream plant {u!r}")
        if h.ec_flag:
            ref = by_id.get(h.reference)
            if ref is None:
                out.append(f"{h.name}: unknown reference plant {h.reference!r}")
            elif ref.useful_volume <= 0:
                out.append(f"{h.name}: reference plant {ref.name} has no storage")
    downstream_count: dict = {}
    for h in config.hydros:
        for u in h.upstream_ids:
            downstream_count[u] = downstream_count.get(u, 0) + 1
    for u, cnt in downstream_count.items():
        if cnt > 1 and u in by_id:
            out.append(f"{by_id[u].name}: listed upstream of {cnt} plants")
    if _has_cycle(config.hydros):
        out.append("hydros: upstream relation contains a cycle")
    for g in config.thermals:
        if g.max_generation < 0:
            out.append(f"{g.name}: max_generation is negative")
        if g.unit_cost < 0:
            out.append(f"{g.name}: unit_cost is negative")
    if config.horizon_months != 2 * config.analysis_months:
        out.append("config: horizon must be twice the analysis window")
    if len(config.demand) != config.horizon_months:
        out.append(f"config: demand has {len(config.demand)} entries for a {config.horizon_months}-stage horizon")
    if config.openings_per_stage:
        ops = config.openings_per_stage
        if len(ops) != config.horizon_months:
            out.append("config: openings must be given for every stage")
        if any(o < 1 for o in ops):
            out.append("config: every stage needs at least one opening")
        if ops and ops[0] != 1:
            out.append("config: stage 1 must have exactly one opening")
    if config.period_hours <= 0:
        out.append("config: period_hours must be positive")
    if config.deficit_cost < 0 or config.ec_penalty_min < 0 or config.ec_penalty_max < 0:
        out.append("config: costs and penalties must be nonnegative")
    return out


def _has_cycle(hydros) -> bool:
    ups = {h.id: set(h.upstream_ids) for h in hydros}
    state = {}

    def visit(n):
        if state.get(n) == 1:
            return True
        if state.get(n) == 2:
            return False
        state[n] = 1
        for u in ups.get(n, ()):
            if visit(u):
                return True
        state[n] = 2
        return False

    return any(visit(h.id) for h in hydros)


def downstream_map(config: SystemConfig) -> dict:
    """Plant id -> id of the plant directly downstream (None at the river mouth)."""
    down = {h.id: None for h in config.hydros}
    for h in config.hydros:
        for u in h.upstream_ids:
            down[u] = h.id
    return down


def stored_energy(config: SystemConfig, volumes) -> float:
    """Stored volumes valued by the productivity of every plant they will pass through."""
    volumes = np.asarray(volumes, dtype=float)
    down = downstream_map(config)
    rho = {h.id: h.productivity for h in config.hydros}
    total = 0.0
    for i, h in enumerate(config.hydros):
        acc, j = 0.0, h.id
        while j is not None:
            acc += rho[j]
            j = down[j]
        total += volumes[i] * acc
    return float(total)


@dataclass
class StageSubproblem:
    """One stage's LP/MILP with right-hand sides affine in the incoming state and inflows.

    ``rhs_i = rhs[i] + state_links[i] @ v_in + inflow_links[i] @ Y``.
    """

    stage: int
    n_hydros: int
    var_names: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    upper: list = field(default_factory=list)
    cost: list = field(default_factory=list)
    integer: list = field(default_factory=list)
    row_names: list = field(default_factory=list)
    senses: list = field(default_factory=list)
    rows: list = field(default_factory=list)  # dict var index -> coefficient
    rhs: list = field(default_factory=list)
    state: list = field(default_factory=list)  # dict hydro index -> coefficient
    inflow: list = field(default_factory=list)
    incoming: np.ndarray | None = None
    inflow_values: np.ndarray | None = None

    def __post_init__(self):
        self._index = {n: j for j, n in enumerate(self.var_names)}
        self._cache = None

    # -- construction -------------------------------------------------------
    def add_variable(self, name, lower=0.0, upper=np.inf, cost=0.0, integer=False) -> int:
        if name in self._index:
            raise ConfigurationError(f"duplicate variable {name}")
        self._index[name] = len(self.var_names)
        self.var_names.append(name)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.cost.append(float(cost))
        self.integer.append(bool(integer))
        self._cache = None
        return self._index[name]

    def add_row(self, name, coefs: Mapping, sense, rhs=0.0, state=None, inflow=None) -> int:
        row = {}
        for v, a in coefs.items():
            j = self._index[v] if isinstance(v, str) else int(v)
            row[j] = row.get(j, 0.0) + float(a)
        self.row_names.append(name)
        self.senses.append(sense)
        self.rows.append(row)
        self.rhs.append(float(rhs))
        self.state.append(dict(state or {}))
        self.inflow.append(dict(inflow or {}))
        self._cache = None
        return len(self.rows) - 1

    def copy(self) -> "StageSubproblem":
        new = copy.copy(self)
        for f in ("var_names", "lower", "upper", "cost", "integer", "row_names", "senses", "rhs"):
            setattr(new, f, list(getattr(self, f)))
        new.rows = [dict(r) for r in self.rows]
        new.state = [dict(r) for r in self.state]
        new.inflow = [dict(r) for r in self.inflow]
        new._index = dict(self._index)
        new._cache = None
        return new

    # -- queries ------------------------------------------------------------
    def index(self, name) -> int:
        return self._index[name]

    def has(self, name) -> bool:
        return name in self._index

    @property
    def n(self) -> int:
        return len(self.var_names)

    @property
    def m(self) -> int:
        return len(self.rows)

    def matrices(self):
        """Dense (A, rhs, L_state, L_inflow, cost, lower, upper, integer), cached."""
        if self._cache is None:
            m, n, H = self.m, self.n, self.n_hydros
            A = np.zeros((m, n))
            L = np.zeros((m, H))
            W = np.zeros((m, H))
            for i, row in enumerate(self.rows):
                for j, a in row.items():
                    A[i, j] = a
                for h, a in self.state[i].items():
                    L[i, h] = a
                for h, a in self.inflow[i].items():
                    W[i, h] = a
            self._cache = (
                A,
                np.asarray(self.rhs, float),
                L,
                W,
                np.asarray(self.cost, float),
                np.asarray(self.lower, float),
                np.asarray(self.upper, float),
                np.asarray(self.integer, bool),
            )
        return self._cache

    def rhs_at(self, incoming=None, inflow=None) -> np.ndarray:
        _, b, L, W, *_ = self.matrices()
        v = self.incoming if incoming is None else np.asarray(incoming, float)
        y = self.inflow_values if inflow is None else np.asarray(inflow, float)
        out = b.copy()
        if v is not None and L.size:
            out += L @ v
        if y is not None and W.size:
            out += W @ y
        return out

    def to_lp(self, incoming=None, inflow=None) -> LinearProgram:
        A, _, _, _, c, lo, hi, _ = self.matrices()
        return LinearProgram(c, A, tuple(self.senses), self.rhs_at(incoming, inflow), lo, hi,
                             var_names=list(self.var_names), row_names=list(self.row_names))

    @property
    def markings(self) -> np.ndarray:
        return np.asarray(self.integer, bool)

    def state_gradient(self, duals) -> np.ndarray:
        """d(objective)/d(incoming volume) from row duals."""
        _, _, L, *_ = self.matrices()
        return L.T @ np.asarray(duals, float)


def _inflow_vector(config: SystemConfig, inflow) -> np.ndarray:
    H = len(config.hydros)
    if inflow is None:
        return np.zeros(H)
    if isinstance(inflow, InflowScenario):
        inflow = inflow.inflows
    if isinstance(inflow, Mapping):
        y = np.full(H, np.nan)
        pos = {}
        for i, h in enumerate(config.hydros):
            pos[h.id] = i
            pos[h.name] = i
        for k, val in inflow.items():
            if k not in pos:
                raise ConfigurationError(f"inflow given for unknown plant {k!r}")
            y[pos[k]] = float(val)
        if np.isnan(y).any():
            missing = [config.hydros[i].name for i in np.flatnonzero(np.isnan(y))]
            raise ConfigurationError(f"inflow missing for {', '.join(missing)}")
        return y
    y = np.asarray(inflow, float)
    if y.shape != (H,):
        raise ConfigurationError(f"inflow vector has shape {y.shape}, expected ({H},)")
    return y


def build_base_stage(config: SystemConfig, stage: int, inflow=None, incoming_volumes=None) -> StageSubproblem:
    """Dispatch subproblem of one month: demand balance, water balances and hydro production."""
    H = len(config.hydros)
    K = config.K
    y = _inflow_vector(config, inflow)
    v_in = np.array([h.initial_volume for h in config.hydros]) if incoming_volumes is None else np.asarray(incoming_volumes, float)
    if v_in.shape != (H,):
        raise ConfigurationError("incoming volumes must have one entry per hydro plant")
    sub = StageSubproblem(stage=stage, n_hydros=H, incoming=v_in, inflow_values=y)
    for h in config.hydros:
        sub.add_variable(f"q[{h.name}]", 0.0, h.max_turbined_outflow / K)
        sub.add_variable(f"s[{h.name}]", 0.0, np.inf)
        sub.add_variable(f"v[{h.name}]", 0.0, h.useful_volume)
        sub.add_variable(f"ph[{h.name}]", 0.0, h.max_generation)
    for g in config.thermals:
        sub.add_variable(f"pt[{g.name}]", 0.0, g.max_generation, g.unit_cost)
    sub.add_variable("def", 0.0, np.inf, config.deficit_cost)

    coefs = {f"pt[{g.name}]": 1.0 for g in config.thermals}
    coefs.update({f"ph[{h.name}]": 1.0 for h in config.hydros})
    coefs["def"] = 1.0
    sub.add_row("demand", coefs, "=", config.demand[stage - 1])

    by_id = {h.id: h for h in config.hydros}
    for i, h in enumerate(config.hydros):
        row = {f"v[{h.name}]": 1.0, f"q[{h.name}]": K, f"s[{h.name}]": K}
        for u in sorted(h.upstream_ids):
            up = by_id[u]
            row[f"q[{up.name}]"] = row.get(f"q[{up.name}]", 0.0) - K
            row[f"s[{up.name}]"] = row.get(f"s[{up.name}]", 0.0) - K
        sub.add_row(f"balance[{h.name}]", row, "=", 0.0, state={i: 1.0}, inflow={i: K})
    for h in config.hydros:
        sub.add_row(f"production[{h.name}]", {f"ph[{h.name}]": 1.0, f"q[{h.name}]": -h.productivity * K}, "=", 0.0)
    return sub
