"""Stochastic dual dynamic programming over the monthly dispatch stages.

Stages are linked by end-of-month reservoir volumes. Each stage's cost-to-go
is approximated from below by a pool of affine cuts, built from the duals of
the stage subproblems solved in the backward pass (single averaged cut per
stage and iteration). Three solution modes are available:

``sddp``  pure linear stages (an error if the stages carry 0-1 variables);
``isddp`` 0-1 variables are kept in the forward pass and relaxed to [0, 1]
          when computing backward-pass cuts;
``sddip`` volumes are restricted to a binary-expansion grid and cuts are
          expressed over the bits; backward duals come from the LP with all
          binaries fixed at the MILP optimum.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import ec as ecmod
from .io import ScenarioSet
from .lp import BASIC, LinearProgram, MilpOptions, SolverError, relax, solve_lp, solve_milp
from .model import ConfigurationError, StageSubproblem, SystemConfig, build_base_stage, stored_energy

MODES = ("sddp", "isddp", "sddip")
VARIANTS = ("none", "A", "B")
CUT_TOL = 1e-9
WORKING_AGE = 10  # forward passes a cut may stay inactive before leaving a stage LP


# -- binary expansion ---------------------------------------------------------

def bits_for_steps(steps: int) -> int:
    if steps < 2:
        raise ValueError("need at least 2 discretization steps")
    return max(1, math.ceil(math.log2(steps)))


def binary_expand(volume: float, vmax: float, bits: int) -> np.ndarray:
    """Nearest grid point of ``step = vmax / (2**bits - 1)`` as bits, least significant first."""
    if bits < 1:
        raise ValueError("bits must be at least 1")
    if vmax <= 0:
        return np.zeros(bits)
    if volume < -1e-9 * vmax or volume > vmax * (1 + 1e-9):
        raise ValueError(f"volume {volume} outside [0, {vmax}]")
    step = vmax / (2**bits - 1)
    k = int(round(min(max(volume, 0.0), vmax) / step))
    return np.array([(k >> j) & 1 for j in range(bits)], dtype=float)


def reconstruct(vector, vmax: float) -> float:
    z = np.asarray(vector, float)
    bits = z.size
    step = vmax / (2**bits - 1)
    return float(step * np.sum(z * 2.0 ** np.arange(bits)))


# -- cuts and value functions -------------------------------------------------

@dataclass(frozen=True)
class Cut:
    stage: int
    intercept: float
    gradient: np.ndarray
    iteration: int

    def __post_init__(self):
        if not (np.isfinite(self.intercept) and np.all(np.isfinite(self.gradient))):
            raise ValueError("cut coefficients must be finite")

    def value(self, state) -> float:
        return float(self.intercept + self.gradient @ np.asarray(state, float))


class ValueFunction:
    """Cut pools ``pools[t]`` bounding the cost-to-go after stage t (t = 1..NT; pool NT stays empty).

    Evaluation is the maximum over the cuts and the zero function.
    """

    def __init__(self, horizon: int, dim: int):
        self.horizon = horizon
        self.dim = dim
        self.pools = {t: [] for t in range(1, horizon + 1)}
        self._mats = {}

    def add(self, cut: Cut):
        self.pools[cut.stage].append(cut)
        self._mats.pop(cut.stage, None)

    def arrays(self, t):
        if t not in self._mats:
            pool = self.pools[t]
            alpha = np.array([c.intercept for c in pool])
            G = np.array([c.gradient for c in pool]).reshape(len(pool), self.dim)
            self._mats[t] = (alpha, G)
        return self._mats[t]

    def evaluate(self, t: int, state) -> float:
        if not self.pools.get(t):
            return 0.0
        alpha, G = self.arrays(t)
        return float(max(0.0, np.max(alpha + G @ np.asarray(state, float))))

    def n_cuts(self) -> int:
        return sum(len(p) for p in self.pools.values())


# -- options and results --------------------------------------------------------

@dataclass(frozen=True)
class TrainingOptions:
    iterations: int = 400
    mode: str = "sddp"
    bits: int | None = None
    steps: int | None = None
    seed: int = 0
    forward_series: int = 1
    relaxed_forward: bool = False
    threads: int = 1
    milp: MilpOptions = field(default_factory=MilpOptions)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode == "sddip" and self.expansion_bits < 1:
            raise ValueError("sddip mode needs bits >= 1 (or steps >= 2)")
        if self.forward_series < 1 or self.threads < 1:
            raise ValueError("forward_series and threads must be positive")

    @property
    def expansion_bits(self) -> int:
        if self.bits is not None:
            return self.bits
        if self.steps is not None:
            return bits_for_steps(self.steps)
        return 0


@dataclass
class StageResult:
    objective: float
    immediate: float
    x: np.ndarray
    duals: np.ndarray
    state_out: np.ndarray
    volumes: np.ndarray
    gradient: np.ndarray  # d objective / d incoming volumes
    basis: np.ndarray | None


@dataclass
class Trajectory:
    states: list  # state after each stage (mode's representation)
    volumes: list
    results: list
    openings: list

    @property
    def cost(self) -> float:
        return float(sum(r.immediate for r in self.results))


@dataclass
class TrainingLog:
    zinf: list
    final_bound: float
    seconds: float
    iterations: int


@dataclass
class SimulationResult:
    plant_names: tuple
    cost: np.ndarray  # (series, T)
    moc: np.ndarray
    sse: np.ndarray
    hydro: np.ndarray
    thermal: np.ndarray
    deficit: np.ndarray
    volumes: np.ndarray  # (series, T, H)
    total_cost: np.ndarray  # (series,) over the whole horizon

    def summary(self) -> dict:
        out = {}
        for name in ("moc", "sse", "cost", "hydro", "thermal", "deficit"):
            a = getattr(self, name)
            q25, q50, q75 = np.quantile(a, [0.25, 0.5, 0.75], axis=0)
            out[name] = {"mean": a.mean(axis=0), "q25": q25, "q50": q50, "q75": q75}
        return out


# -- stage models ---------------------------------------------------------------

class StageModel:
    """A stage subproblem template plus its cut rows, solved at varying states and inflows."""

    def __init__(self, problem: "Problem", t: int):
        self.problem = problem
        self.t = t
        cfg = problem.config
        H = len(cfg.hydros)
        sub = build_base_stage(cfg, t, np.zeros(H), np.zeros(H))
        month = cfg.month_of(t)
        for h in cfg.hydros:
            if not h.ec_flag or problem.variant == "none":
                continue
            if h.name not in problem.rules:
                raise ConfigurationError(f"no outflow rules for {h.name}")
            ranges, table = problem.rules[h.name]
            if problem.variant == "A":
                sub = ecmod.add_variant_a(sub, cfg, h.name, ranges, table, month)
            else:
                seg = ecmod.fit_concave_segments(table.rule(month), ranges.v_res)
                sub = ecmod.add_variant_b(sub, cfg, h.name, seg, ranges, table, month)
        self.v_idx = np.array([sub.index(f"v[{h.name}]") for h in cfg.hydros], dtype=int)
        if problem.mode == "sddip":
            sub = sub.copy()
            bit_idx = []
            for i, h in enumerate(cfg.hydros):
                vmax = h.useful_volume
                if vmax <= 0:
                    continue
                nb = problem.bits
                step = vmax / (2**nb - 1)
                row = {f"v[{h.name}]": 1.0}
                for k in range(nb):
                    j = sub.add_variable(f"z[{h.name},{k}]", 0.0, 1.0, integer=True)
                    bit_idx.append(j)
                    row[j] = -step * 2.0**k
                sub.add_row(f"expansion[{h.name}]", row, "=", 0.0)
            self.out_idx = np.array(bit_idx, dtype=int)
        else:
            self.out_idx = self.v_idx
        self.theta = None
        if t < cfg.horizon_months:
            sub = sub.copy()
            self.theta = sub.add_variable("theta", 0.0, np.inf, 1.0)
        self.sub = sub
        A, b, L, W, c, lo, hi, integer = sub.matrices()
        self.A0, self.b0, self.L, self.W = A, b, L, W
        self.c, self.lo, self.hi, self.integer = c, lo, hi, integer
        self.senses0 = tuple(sub.senses)
        self.demand_row = sub.row_names.index("demand")
        self.pt_idx = np.array([sub.index(f"pt[{g.name}]") for g in cfg.thermals], dtype=int)
        self.ph_idx = np.array([sub.index(f"ph[{h.name}]") for h in cfg.hydros], dtype=int)
        self.def_idx = sub.index("def")
        self.has_integers = bool(integer.any())
        # Cut rows over the stage's variables, kept in sync with the value function pool.
        self.cut_rows = np.zeros((0, sub.n))
        self.cut_rhs = np.zeros(0)
        self.working = []  # indices of pool cuts present in the LP, in insertion order
        self.basis = None  # (status array, number of cut rows it covers)
        self.epoch = 0  # forward passes through this stage so far
        self.last_active = np.zeros(0, dtype=int)  # epoch at which each cut last had a nonzero dual

    # The pool for this stage's theta is vf.pools[t].
    def sync_cuts(self, vf: ValueFunction):
        if self.theta is None:
            return
        alpha, G = vf.arrays(self.t) if vf.pools[self.t] else (np.zeros(0), np.zeros((0, vf.dim)))
        k0 = self.cut_rows.shape[0]
        if alpha.size > k0:
            new = np.zeros((alpha.size - k0, self.sub.n))
            new[:, self.theta] = 1.0
            new[:, self.out_idx] = -G[k0:]
            self.cut_rows = np.vstack([self.cut_rows, new])
            self.cut_rhs = np.concatenate([self.cut_rhs, alpha[k0:]])
            self.last_active = np.concatenate([self.last_active, np.full(alpha.size - k0, self.epoch)])

    def prune(self, max_age: int = WORKING_AGE):
        """Drop cuts inactive for more than ``max_age`` forward passes from the working set.

        Pruned cuts stay in the pool and come back through the lazy loop when
        violated, so solutions are unaffected.
        """
        if not self.working:
            return
        stale = [self.last_active[k] < self.epoch - max_age for k in self.working]
        if not any(stale):
            return
        if self.basis is not None:
            # the basis stays valid when every dropped row has a basic logical
            status, covered = self.basis
            pos = [self.sub.n + self.A0.shape[0] + w for w in range(covered) if stale[w]]
            if all(status[p] == BASIC for p in pos):
                self.basis = (np.delete(status, pos), covered - len(pos))
            else:
                self.basis = None
        keep = [k for k, old in zip(self.working, stale) if not old]
        self.working = keep

    def _lp(self, working, v_in, inflow, lower=None, upper=None):
        b = self.b0 + self.L @ v_in + self.W @ inflow
        if working:
            A = np.vstack([self.A0, self.cut_rows[working]])
            b = np.concatenate([b, self.cut_rhs[working]])
            senses = self.senses0 + (">=",) * len(working)
        else:
            A, senses = self.A0, self.senses0
        return LinearProgram(self.c, A, senses, b, self.lo if lower is None else lower,
                             self.hi if upper is None else upper)

    def _basis_for(self, basis, n_cut_rows):
        if basis is None:
            return None
        status, k = basis
        if k == n_cut_rows:
            return status
        if k < n_cut_rows:
            return np.concatenate([status, np.full(n_cut_rows - k, BASIC, dtype=status.dtype)])
        return None

    def solve(self, v_in, inflow, kind: str, milp_opts: MilpOptions, working=None, basis=None) -> tuple:
        """Solve at an incoming volume vector. ``kind`` is lp, milp, relaxed or fixed.

        Violated cuts outside the working set are added until none remain.
        Returns (StageResult, final working list).
        """
        working = list(self.working if working is None else working)
        v_in = np.asarray(v_in, float)
        inflow = np.asarray(inflow, float)
        lower, upper = self.lo, self.hi
        if kind == "relaxed":
            lower = np.where(self.integer, np.maximum(self.lo, 0.0), self.lo)
            upper = np.where(self.integer, np.minimum(self.hi, 1.0), self.hi)
        while True:
            lp = self._lp(working, v_in, inflow, lower, upper)
            warm = self._basis_for(basis, len(working))
            if kind in ("milp", "fixed") and self.has_integers:
                sol = solve_milp(lp, self.integer, milp_opts, basis=warm)
            else:
                sol = solve_lp(lp, basis=warm)
            if sol.status not in ("optimal", "node_limit") or sol.x is None:
                raise SolverError(f"stage {self.t}: subproblem {sol.status}")
            if sol.duals is None:
                raise SolverError(f"stage {self.t}: no duals for the final subproblem")
            basis = (sol.basis, len(working)) if sol.basis is not None else None
            if self.theta is None or self.cut_rows.shape[0] == 0:
                break
            x = sol.x
            # cut k requires theta >= alpha_k + g_k' x_out, stored as theta - g_k' x_out >= alpha_k
            lhs = x[self.theta] + self.cut_rows[:, self.out_idx] @ x[self.out_idx]
            viol = self.cut_rhs - lhs
            tol = CUT_TOL * max(1.0, abs(x[self.theta]), float(np.max(np.abs(self.cut_rhs), initial=0.0)))
            in_ws = np.zeros(viol.size, bool)
            in_ws[working] = True
            viol[in_ws] = -np.inf
            cand = np.flatnonzero(viol > tol)
            if cand.size == 0:
                break
            order = cand[np.argsort(-viol[cand], kind="stable")][:8]
            working.extend(int(k) for k in sorted(order))
        if working:
            m0 = self.A0.shape[0]
            active = np.abs(sol.duals[m0:m0 + len(working)]) > 0.0
            self.last_active[np.asarray(working)[active]] = self.epoch
        x = sol.x
        theta = x[self.theta] if self.theta is not None else 0.0
        grad = self.L.T @ sol.duals[: self.A0.shape[0]]
        res = StageResult(
            objective=float(sol.objective),
            immediate=float(sol.objective - theta),
            x=x,
            duals=sol.duals,
            state_out=np.round(x[self.out_idx]) if self.problem.mode == "sddip" else x[self.out_idx].copy(),
            volumes=x[self.v_idx].copy(),
            gradient=grad,
            basis=basis,
        )
        return res, working


class Problem:
    """Stages of one system, scenario set, outflow-rule variant and solution mode."""

    def __init__(self, config: SystemConfig, scenarios: ScenarioSet, variant: str = "none", rules=None,
                 mode: str = "sddp", bits: int | None = None):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if scenarios.stages != config.horizon_months:
            raise ConfigurationError("scenario set does not cover the horizon")
        for t in range(1, config.horizon_months + 1):
            if scenarios.openings(t) != config.openings(t):
                raise ConfigurationError(f"stage {t}: scenario openings differ from the configuration")
        self.config = config
        self.scenarios = scenarios
        self.variant = variant
        self.rules = rules or {}
        self.mode = mode
        self.bits = bits or 0
        if mode == "sddip" and self.bits < 1:
            raise ValueError("sddip mode needs bits >= 1")
        self._stages = {}
        H = len(config.hydros)
        if mode == "sddip":
            cols = []
            for i, h in enumerate(config.hydros):
                if h.useful_volume <= 0:
                    continue
                step = h.useful_volume / (2**self.bits - 1)
                for k in range(self.bits):
                    col = np.zeros(H)
                    col[i] = step * 2.0**k
                    cols.append(col)
            self.E = np.array(cols).T.reshape(H, len(cols))
        else:
            self.E = np.eye(H)
        self.initial_volumes = np.array([h.initial_volume for h in config.hydros])
        if mode == "sddp" and self.stage(1).has_integers:
            raise ConfigurationError("sddp mode cannot handle 0-1 variables; use isddp or sddip")

    @property
    def horizon(self) -> int:
        return self.config.horizon_months

    @property
    def state_dim(self) -> int:
        return self.E.shape[1]

    def stage(self, t: int) -> StageModel:
        if t not in self._stages:
            self._stages[t] = StageModel(self, t)
        return self._stages[t]

    def volumes_of(self, state) -> np.ndarray:
        return self.E @ np.asarray(state, float)

    def forward_kind(self, options: TrainingOptions) -> str:
        if self.mode == "isddp" and options.relaxed_forward:
            return "relaxed"
        return "milp" if self.mode in ("isddp", "sddip") else "lp"

    def backward_kind(self) -> str:
        return {"sddp": "lp", "isddp": "relaxed", "sddip": "fixed"}[self.mode]


# -- passes ---------------------------------------------------------------------

def forward_pass(problem: Problem, vf: ValueFunction, rng: np.random.Generator, options: TrainingOptions,
                 openings=None) -> Trajectory:
    """Sample one inflow path, solving each stage at the state left by its predecessor."""
    states, vols, results, ops = [], [], [], []
    v_in = problem.initial_volumes
    kind = problem.forward_kind(options)
    for t in range(1, problem.horizon + 1):
        st = problem.stage(t)
        st.sync_cuts(vf)
        st.epoch += 1
        st.prune()
        n_open = problem.scenarios.openings(t)
        a = int(openings[t - 1]) if openings is not None else (int(rng.integers(n_open)) if n_open > 1 else 0)
        res, st.working = st.solve(v_in, problem.scenarios.inflow(t, a), kind, options.milp, basis=st.basis)
        st.basis = res.basis
        states.append(res.state_out)
        vols.append(res.volumes)
        results.append(res)
        ops.append(a)
        v_in = problem.volumes_of(res.state_out) if problem.mode == "sddip" else res.volumes
    return Trajectory(states, vols, results, ops)


def backward_pass(problem: Problem, vf: ValueFunction, trajectory: Trajectory, options: TrainingOptions,
                  iteration: int = 0, pool: ThreadPoolExecutor | None = None) -> ValueFunction:
    """Add one averaged cut per stage 1..NT-1 along the trajectory, last stage first."""
    kind = problem.backward_kind()
    for t in range(problem.horizon, 1, -1):
        st = problem.stage(t)
        st.sync_cuts(vf)
        x_prev = trajectory.states[t - 2]
        v_in = problem.volumes_of(x_prev) if problem.mode == "sddip" else np.asarray(x_prev, float)
        n_open = problem.scenarios.openings(t)
        snapshot = st.basis
        base_ws = list(st.working)

        def solve_one(a):
            return st.solve(v_in, problem.scenarios.inflow(t, a), kind, options.milp,
                            working=base_ws, basis=snapshot)

        outs = list(pool.map(solve_one, range(n_open))) if pool is not None else [solve_one(a) for a in range(n_open)]
        phis = np.array([r.objective for r, _ in outs])
        grads = np.array([problem.E.T @ r.gradient for r, _ in outs])
        added = sorted({k for _, ws in outs for k in ws} - set(base_ws))
        st.working = base_ws + added
        g = grads.mean(axis=0)
        # round-off noise in the duals would make the cut rows badly scaled
        g[np.abs(g) <= 1e-10 * np.abs(g).max(initial=0.0)] = 0.0
        alpha = float(phis.mean() - g @ np.asarray(x_prev, float))
        vf.add(Cut(t - 1, alpha, g, iteration))
    return vf


def deterministic_equivalent(problem: Problem, start: int = 1, v_in=None) -> tuple:
    """Flatten the scenario tree from stage ``start`` to the horizon into one program.

    Every opening of every stage branches the tree, so the size grows with the
    product of openings; this is meant for small instances. Future-cost
    variables are fixed at zero. The objective is the expected cost from
    ``start`` on, given incoming volumes ``v_in`` (initial volumes by default).
    Returns (LinearProgram, integer markings).
    """
    v_in = problem.initial_volumes if v_in is None else np.asarray(v_in, float)
    blocks = []  # (stage model, probability, parent block or -1, inflow)
    frontier = [(-1, 1.0)]
    for t in range(start, problem.horizon + 1):
        n_open = problem.scenarios.openings(t)
        nxt = []
        for parent, prob in frontier:
            for a in range(n_open):
                blocks.append((problem.stage(t), prob / n_open, parent, problem.scenarios.inflow(t, a)))
                nxt.append((len(blocks) - 1, prob / n_open))
        frontier = nxt
    offsets = np.cumsum([0] + [st.sub.n for st, *_ in blocks])
    row_offsets = np.cumsum([0] + [st.A0.shape[0] for st, *_ in blocks])
    A = np.zeros((row_offsets[-1], offsets[-1]))
    b = np.zeros(row_offsets[-1])
    c = np.zeros(offsets[-1])
    lo = np.zeros(offsets[-1])
    hi = np.zeros(offsets[-1])
    integer = np.zeros(offsets[-1], dtype=bool)
    senses = []
    for k, (st, prob, parent, inflow) in enumerate(blocks):
        cols = slice(offsets[k], offsets[k + 1])
        rows = slice(row_offsets[k], row_offsets[k + 1])
        A[rows, cols] = st.A0
        b[rows] = st.b0 + st.W @ inflow
        if parent < 0:
            b[rows] += st.L @ v_in
        else:
            pst = blocks[parent][0]
            A[rows, offsets[parent] + pst.v_idx] -= st.L
        c[cols] = prob * st.c
        lo[cols], hi[cols] = st.lo, st.hi
        integer[cols] = st.integer
        if st.theta is not None:
            c[offsets[k] + st.theta] = 0.0
            hi[offsets[k] + st.theta] = 0.0
        senses.extend(st.senses0)
    return LinearProgram(c, A, senses, b, lo, hi), integer


def expected_cost_to_go(problem: Problem, t: int, v_in, milp_opts: MilpOptions | None = None,
                        relaxed: bool = False) -> float:
    """Exact expected cost from stage t on at incoming volumes, by the flattened tree.

    ``relaxed`` drops integrality, giving the value function that LP-relaxed
    cuts approximate (never above the integer one).
    """
    lp, integer = deterministic_equivalent(problem, t, v_in)
    if relaxed or not integer.any():
        sol = solve_lp(relax(lp, integer))
    else:
        sol = solve_milp(lp, integer, milp_opts)
    if not sol.optimal:
        raise SolverError(f"deterministic equivalent {sol.status}")
    return float(sol.objective)


def _rngs(seed: int):
    ss = np.random.SeedSequence(seed)
    train, sim = ss.spawn(2)
    return np.random.Generator(np.random.PCG64(train)), np.random.Generator(np.random.PCG64(sim))


def first_stage_bound(problem: Problem, vf: ValueFunction, options: TrainingOptions) -> float:
    st = problem.stage(1)
    st.sync_cuts(vf)
    res, st.working = st.solve(problem.initial_volumes, problem.scenarios.inflow(1, 0),
                               problem.forward_kind(options), options.milp, basis=st.basis)
    return res.objective


def train(problem: Problem, options: TrainingOptions, vf: ValueFunction | None = None, callback=None):
    """Run forward/backward cycles for a fixed number of iterations.

    ``zinf[k]`` is the first-stage objective seen by the forward pass of
    iteration k+1, i.e. the bound given by the cuts built in the first k
    iterations. ``final_bound`` uses every cut.
    """
    if problem.mode == "sddip" and options.expansion_bits != problem.bits:
        raise ValueError("options and problem disagree on the number of expansion bits")
    vf = vf or ValueFunction(problem.horizon, problem.state_dim)
    rng, _ = _rngs(options.seed)
    zinf = []
    t0 = time.perf_counter()
    pool = ThreadPoolExecutor(options.threads) if options.threads > 1 else None
    try:
        for k in range(1, options.iterations + 1):
            trajs = [forward_pass(problem, vf, rng, options) for _ in range(options.forward_series)]
            zinf.append(trajs[0].results[0].objective)
            for tr in trajs:
                backward_pass(problem, vf, tr, options, iteration=k, pool=pool)
            if callback is not None:
                callback(k, zinf[-1])
        final = first_stage_bound(problem, vf, options)
    finally:
        if pool is not None:
            pool.shutdown()
    return vf, TrainingLog(zinf, final, time.perf_counter() - t0, options.iterations)


def simulate(problem: Problem, vf: ValueFunction, n_series: int, options: TrainingOptions,
             rng: np.random.Generator | None = None) -> SimulationResult:
    """Independent forward passes with frozen cuts; statistics over the analysis window."""
    cfg = problem.config
    if rng is None:
        _, rng = _rngs(options.seed)
    T = cfg.analysis_months
    H = len(cfg.hydros)
    # Draw every path up front so results do not depend on solve order.
    paths = [[int(rng.integers(problem.scenarios.openings(t))) if problem.scenarios.openings(t) > 1 else 0
              for t in range(1, problem.horizon + 1)] for _ in range(n_series)]
    shape = (n_series, T)
    out = {k: np.zeros(shape) for k in ("cost", "moc", "sse", "hydro", "thermal", "deficit")}
    volumes = np.zeros((n_series, T, H))
    total = np.zeros(n_series)
    for s, path in enumerate(paths):
        tr = forward_pass(problem, vf, rng, options, openings=path)
        total[s] = tr.cost
        for t in range(T):
            r = tr.results[t]
            st = problem.stage(t + 1)
            out["cost"][s, t] = r.immediate
            out["moc"][s, t] = r.duals[st.demand_row]
            out["sse"][s, t] = stored_energy(cfg, r.volumes)
            out["hydro"][s, t] = r.x[st.ph_idx].sum()
            out["thermal"][s, t] = r.x[st.pt_idx].sum()
            out["deficit"][s, t] = r.x[st.def_idx]
            volumes[s, t] = r.volumes
    return SimulationResult(tuple(h.name for h in cfg.hydros), volumes=volumes, total_cost=total, **out)
