"""Reading and writing system data, outflow rules, inflow scenarios and reports.

All files are UTF-8 comma-separated text with a header row. Hourly cost data
(thermal unit costs, deficit cost, outflow penalties) is converted to cost per
MWmonth on load by multiplying by ``period_hours``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .ec import MaxOutflowTable, MonthRule, OperationRanges
from .model import HydroPlant, SystemConfig, ThermalPlant, validate_system

LOAD_LEVELS = (8000, 9000, 10000)

HYDRO_COLUMNS = ("name", "max_generation_mw", "useful_volume_hm3", "productivity_mwmonth_per_hm3",
                 "max_turbined_outflow_hm3", "initial_volume_hm3", "upstream_names", "reference_name", "ec_flag")
THERMAL_COLUMNS = ("name", "max_generation_mw", "unit_cost")
RANGE_COLUMNS = ("plant", "v_res", "q_min_restricted", "q_min_normal")
RULE_COLUMNS = ("plant", "month", "lower_fraction", "upper_fraction", "limit_m3s", "reference_offset_m3s")
INFLOW_COLUMNS = ("stage", "opening", "plant_name", "inflow_m3s")
STATS_COLUMNS = ("name", "month", "mean_m3s", "cv")


class ParseError(ValueError):
    """Malformed input file; the message names the file and line."""


def bundled_dir(kind: str = "appendix") -> Path:
    return Path(str(resources.files("ltgs") / "data" / kind))


def _rows(path: Path, required):
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(f"{path}:1: missing column(s) {', '.join(missing)}")
        for row in reader:
            if None in row or any(row[c] is None for c in required):
                raise ParseError(f"{path}:{reader.line_num}: wrong number of fields")
            yield reader.line_num, row


def _num(text, path, line, col) -> float:
    try:
        return float(str(text).replace(",", "").strip())
    except ValueError:
        raise ParseError(f"{path}:{line}: column {col}: not a number: {text!r}") from None


def _config_table(path: Path) -> dict:
    return {row["key"].strip(): row["value"].strip() for _, row in _rows(path, ("key", "value"))}


def load_system(path=None, load_level: int = 9000, **overrides) -> SystemConfig:
    """Read hydros/thermals/load/config files from a directory into a validated system."""
    d = Path(path) if path is not None else bundled_dir()
    if load_level not in LOAD_LEVELS:
        raise ParseError(f"load level must be one of {LOAD_LEVELS}")
    cfg = _config_table(d / "config.csv")
    hours = float(cfg.get("period_hours", 730))
    horizon = int(cfg.get("horizon", 24))
    analysis = int(cfg.get("analysis", horizon // 2))
    start = int(cfg.get("start_month", 1))

    hydros, by_name = [], {}
    raw = []
    fpath = d / "hydros.csv"
    for line, row in _rows(fpath, HYDRO_COLUMNS):
        name = row["name"].strip()
        if name in by_name:
            raise ParseError(f"{fpath}:{line}: duplicate plant {name}")
        by_name[name] = len(raw) + 1
        raw.append((line, row))
    for line, row in raw:
        name = row["name"].strip()
        ups = [u.strip() for u in row["upstream_names"].split(";") if u.strip()]
        for u in ups:
            if u not in by_name:
                raise ParseError(f"{fpath}:{line}: unknown upstream plant {u}")
        ref = row["reference_name"].strip()
        if ref and ref not in by_name:
            raise ParseError(f"{fpath}:{line}: unknown reference plant {ref}")
        hydros.append(HydroPlant(
            id=by_name[name],
            name=name,
            max_generation=_num(row["max_generation_mw"], fpath, line, "max_generation_mw"),
            useful_volume=_num(row["useful_volume_hm3"], fpath, line, "useful_volume_hm3"),
            productivity=_num(row["productivity_mwmonth_per_hm3"], fpath, line, "productivity_mwmonth_per_hm3"),
            max_turbined_outflow=_num(row["max_turbined_outflow_hm3"], fpath, line, "max_turbined_outflow_hm3"),
            initial_volume=_num(row["initial_volume_hm3"], fpath, line, "initial_volume_hm3"),
            upstream_ids=frozenset(by_name[u] for u in ups),
            reference_id=by_name[ref] if ref else None,
            ec_flag=row["ec_flag"].strip() in ("1", "true", "True", "yes"),
        ))

    thermals, seen = [], set()
    fpath = d / "thermals.csv"
    for line, row in _rows(fpath, THERMAL_COLUMNS):
        name = row["name"].strip()
        if name in seen:
            raise ParseError(f"{fpath}:{line}: duplicate plant {name}")
        seen.add(name)
        thermals.append(ThermalPlant(
            id=len(thermals) + 1,
            name=name,
            max_generation=_num(row["max_generation_mw"], fpath, line, "max_generation_mw"),
            unit_cost=_num(row["unit_cost"], fpath, line, "unit_cost") * hours,
        ))

    col = f"level_{load_level}"
    fpath = d / "load.csv"
    monthly = {}
    for line, row in _rows(fpath, ("month", col)):
        monthly[int(_num(row["month"], fpath, line, "month"))] = _num(row[col], fpath, line, col)
    if sorted(monthly) != list(range(1, 13)):
        raise ParseError(f"{fpath}: need one row for each month 1-12")

    ops = [int(x) for x in cfg.get("openings", "1;4").split(";") if x.strip()]
    if len(ops) == horizon:
        openings = tuple(ops)
    elif len(ops) == 2:
        openings = (ops[0],) + (ops[1],) * (horizon - 1)
    else:
        raise ParseError(f"{d / 'config.csv'}: openings must list 2 or {horizon} values")

    kwargs = dict(
        hydros=tuple(hydros),
        thermals=tuple(thermals),
        demand=tuple(monthly[(start - 1 + t) % 12 + 1] for t in range(horizon)),
        deficit_cost=float(cfg.get("deficit_cost", 0)) * hours,
        ec_penalty_min=float(cfg.get("ec_penalty_min", 0)) * hours,
        ec_penalty_max=float(cfg.get("ec_penalty_max", 0)) * hours,
        horizon_months=horizon,
        analysis_months=analysis,
        openings_per_stage=openings,
        period_hours=hours,
        q_sup=float(cfg["q_sup"]) if cfg.get("q_sup") else None,
        start_month=start,
    )
    kwargs.update(overrides)
    config = SystemConfig(**kwargs)
    problems = validate_system(config)
    if problems:
        raise ParseError(f"{d}: " + "; ".join(problems))
    return config


def with_penalties(config: SystemConfig, penalty_per_hour: float) -> SystemConfig:
    """Set both outflow-slack prices from an hourly figure."""
    p = float(penalty_per_hour) * config.period_hours
    return config.with_(ec_penalty_min=p, ec_penalty_max=p)


def write_system(config: SystemConfig, path, load_level: int = 9000) -> None:
    """Write a system in the format read by ``load_system`` (hourly cost units)."""
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    hours = config.period_hours
    names = {h.id: h.name for h in config.hydros}
    with open(d / "hydros.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HYDRO_COLUMNS)
        for h in config.hydros:
            w.writerow([h.name, repr(h.max_generation), repr(h.useful_volume), repr(h.productivity),
                        repr(h.max_turbined_outflow), repr(h.initial_volume),
                        ";".join(names[u] for u in sorted(h.upstream_ids)),
                        names[h.reference_id] if h.reference_id is not None else "", int(h.ec_flag)])
    with open(d / "thermals.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(THERMAL_COLUMNS)
        for g in config.thermals:
            w.writerow([g.name, repr(g.max_generation), repr(g.unit_cost / hours)])
    with open(d / "load.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month", f"level_{load_level}"])
        by_month = {config.month_of(t + 1): v for t, v in enumerate(config.demand[:12])}
        for m in range(1, 13):
            w.writerow([m, repr(by_month[m])])
    with open(d / "config.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerow(["deficit_cost", repr(config.deficit_cost / hours)])
        w.writerow(["ec_penalty_min", repr(config.ec_penalty_min / hours)])
        w.writerow(["ec_penalty_max", repr(config.ec_penalty_max / hours)])
        w.writerow(["horizon", config.horizon_months])
        w.writerow(["analysis", config.analysis_months])
        w.writerow(["openings", ";".join(str(config.openings(t)) for t in range(1, config.horizon_months + 1))])
        w.writerow(["period_hours", repr(hours)])
        w.writerow(["start_month", config.start_month])
        if config.q_sup is not None:
            w.writerow(["q_sup", repr(config.q_sup)])


# -- outflow rules ------------------------------------------------------------

def load_rules(path=None) -> dict:
    """Plant name -> (OperationRanges, MaxOutflowTable)."""
    d = Path(path) if path is not None else bundled_dir("rules")
    ranges = {}
    fpath = d / "ranges.csv"
    for line, row in _rows(fpath, RANGE_COLUMNS):
        try:
            ranges[row["plant"].strip()] = OperationRanges(
                _num(row["v_res"], fpath, line, "v_res"),
                _num(row["q_min_restricted"], fpath, line, "q_min_restricted"),
                _num(row["q_min_normal"], fpath, line, "q_min_normal"),
            )
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"{fpath}:{line}: {exc}") from None
    pieces: dict = {}
    fpath = d / "max_outflow.csv"
    for line, row in _rows(fpath, RULE_COLUMNS):
        plant = row["plant"].strip()
        month = int(_num(row["month"], fpath, line, "month"))
        lim_txt = row["limit_m3s"].strip()
        lim = math.inf if lim_txt.lower() == "sup" else _num(lim_txt, fpath, line, "limit_m3s")
        pieces.setdefault(plant, {}).setdefault(month, []).append((
            line,
            _num(row["lower_fraction"], fpath, line, "lower_fraction"),
            _num(row["upper_fraction"], fpath, line, "upper_fraction"),
            lim,
            _num(row["reference_offset_m3s"], fpath, line, "reference_offset_m3s"),
        ))
    out = {}
    for plant, months in pieces.items():
        if plant not in ranges:
            raise ParseError(f"{fpath}: plant {plant} has no operation ranges")
        rules = {}
        for month, ivs in months.items():
            bps = [ivs[0][1]]
            for k, (line, lo, hi, _, _) in enumerate(ivs):
                if abs(lo - bps[-1]) > 1e-12 or hi <= lo:
                    raise ParseError(f"{fpath}:{line}: breakpoints not contiguous and increasing")
                bps.append(hi)
            offsets = {iv[4] for iv in ivs}
            if len(offsets) != 1:
                raise ParseError(f"{fpath}:{ivs[0][0]}: offset must be constant within a month")
            try:
                rules[month] = MonthRule(tuple(bps), tuple(iv[3] for iv in ivs), offsets.pop())
            except ValueError as exc:
                raise ParseError(f"{fpath}:{ivs[0][0]}: {exc}") from None
        out[plant] = (ranges[plant], MaxOutflowTable(rules))
    for plant in ranges:
        out.setdefault(plant, (ranges[plant], MaxOutflowTable({})))
    return out


def write_rules(rules: dict, path) -> None:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "ranges.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RANGE_COLUMNS)
        for plant, (rg, _) in rules.items():
            w.writerow([plant, repr(rg.v_res), repr(rg.q_min_restricted), repr(rg.q_min_normal)])
    with open(d / "max_outflow.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RULE_COLUMNS)
        for plant, (_, table) in rules.items():
            for month in sorted(table.months):
                r = table.months[month]
                for lo, hi, q in zip(r.breakpoints, r.breakpoints[1:], r.limits):
                    w.writerow([plant, month, repr(lo), repr(hi), "sup" if math.isinf(q) else repr(q), repr(r.offset)])


# -- inflow scenarios ---------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSet:
    """Stagewise-independent openings: ``values[t][a]`` is the inflow vector (m³/s) of stage t+1."""

    values: tuple

    @property
    def stages(self) -> int:
        return len(self.values)

    def openings(self, stage: int) -> int:
        return len(self.values[stage - 1])

    def inflow(self, stage: int, opening: int) -> np.ndarray:
        return self.values[stage - 1][opening]


def read_scenarios(path, config: SystemConfig) -> ScenarioSet:
    fpath = Path(path)
    names = [h.name for h in config.hydros]
    pos = {n: i for i, n in enumerate(names)}
    grid = {}
    for line, row in _rows(fpath, INFLOW_COLUMNS):
        t = int(_num(row["stage"], fpath, line, "stage"))
        a = int(_num(row["opening"], fpath, line, "opening"))
        plant = row["plant_name"].strip()
        if plant not in pos:
            raise ParseError(f"{fpath}:{line}: unknown plant {plant}")
        val = _num(row["inflow_m3s"], fpath, line, "inflow_m3s")
        if val < 0:
            raise ParseError(f"{fpath}:{line}: negative inflow")
        key = (t, a, plant)
        if key in grid:
            raise ParseError(f"{fpath}:{line}: duplicate entry for stage {t}, opening {a}, {plant}")
        grid[key] = val
    problems = scenario_problems(grid, config)
    if problems:
        raise ParseError(f"{fpath}: " + "; ".join(problems))
    vals = []
    for t in range(1, config.horizon_months + 1):
        vals.append(tuple(np.array([grid[(t, a, n)] for n in names]) for a in range(1, config.openings(t) + 1)))
    return ScenarioSet(tuple(vals))


def scenario_problems(grid: dict, config: SystemConfig) -> list:
    """Names every (stage, opening, plant) cell missing from a scenario grid (1-based openings)."""
    out = []
    for t in range(1, config.horizon_months + 1):
        for a in range(1, config.openings(t) + 1):
            for h in config.hydros:
                if (t, a, h.name) not in grid:
                    out.append(f"missing inflow for stage {t}, opening {a}, plant {h.name}")
    return out


def write_scenarios(scen: ScenarioSet, config: SystemConfig, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INFLOW_COLUMNS)
        for t, stage in enumerate(scen.values, 1):
            for a, vec in enumerate(stage, 1):
                for h, v in zip(config.hydros, vec):
                    w.writerow([t, a, h.name, repr(float(v))])


def read_inflow_stats(path=None) -> dict:
    """(plant name, month) -> (mean m³/s, coefficient of variation)."""
    fpath = Path(path) if path is not None else bundled_dir() / "inflow_stats.csv"
    out = {}
    for line, row in _rows(fpath, STATS_COLUMNS):
        key = (row["name"].strip(), int(_num(row["month"], fpath, line, "month")))
        out[key] = (_num(row["mean_m3s"], fpath, line, "mean_m3s"), _num(row["cv"], fpath, line, "cv"))
    return out


def synthetic_scenarios(config: SystemConfig, seed: int, stats=None, correlation=None, data_dir=None) -> ScenarioSet:
    """Seeded lognormal openings with monthly means/CVs and a common-factor correlation.

    Stage 1 carries its expected inflow as the single opening. Later stages
    draw ``openings(t)`` vectors; each plant's log-inflow mixes one shared
    normal factor (weight sqrt(correlation)) with an idiosyncratic one.
    """
    stats = stats if stats is not None else read_inflow_stats(None if data_dir is None else Path(data_dir) / "inflow_stats.csv")
    if correlation is None:
        cfg_path = (Path(data_dir) if data_dir is not None else bundled_dir()) / "config.csv"
        correlation = float(_config_table(cfg_path).get("inflow_correlation", 0.8)) if cfg_path.exists() else 0.8
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    H = len(config.hydros)
    vals = []
    for t in range(1, config.horizon_months + 1):
        month = config.month_of(t)
        mean = np.array([stats[(h.name, month)][0] for h in config.hydros]) if H else np.zeros(0)
        cv = np.array([stats[(h.name, month)][1] for h in config.hydros]) if H else np.zeros(0)
        n = config.openings(t)
        if t == 1 and n == 1:
            vals.append((mean.copy(),))
            continue
        s2 = np.log1p(cv ** 2)
        mu = np.log(np.maximum(mean, 1e-12)) - 0.5 * s2
        common = rng.standard_normal(n)
        own = rng.standard_normal((n, H))
        z = np.sqrt(correlation) * common[:, None] + np.sqrt(1.0 - correlation) * own
        draws = np.exp(mu + np.sqrt(s2) * z)
        draws[:, mean <= 0] = 0.0
        vals.append(tuple(draws[a] for a in range(n)))
    return ScenarioSet(tuple(vals))


# -- reports ------------------------------------------------------------------

def _f(x) -> str:
    return repr(float(x))


def write_report(zinf, sim, path) -> list:
    """Write zinf.csv, simulation.csv and summary.csv into a directory; returns the paths."""
    d = Path(path)
    try:
        d.mkdir(parents=True, exist_ok=True)
        paths = [d / "zinf.csv", d / "simulation.csv", d / "summary.csv"]
        with open(paths[0], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "zinf"])
            for k, z in enumerate(zinf, 1):
                w.writerow([k, _f(z)])
        with open(paths[1], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["series", "stage", "cost", "moc", "sse", "hydro_mw", "thermal_mw", "deficit_mw"]
                       + [f"v_{n}" for n in sim.plant_names])
            S, T = sim.cost.shape
            for s in range(S):
                for t in range(T):
                    w.writerow([s + 1, t + 1, _f(sim.cost[s, t]), _f(sim.moc[s, t]), _f(sim.sse[s, t]),
                                _f(sim.hydro[s, t]), _f(sim.thermal[s, t]), _f(sim.deficit[s, t])]
                               + [_f(v) for v in sim.volumes[s, t]])
        with open(paths[2], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            cols = ["stage"]
            for name in ("moc", "sse"):
                cols += [f"{name}_mean", f"{name}_q25", f"{name}_q50", f"{name}_q75"]
            w.writerow(cols)
            summ = sim.summary()
            for t in range(sim.cost.shape[1]):
                row = [t + 1]
                for name in ("moc", "sse"):
                    row += [_f(summ[name][stat][t]) for stat in ("mean", "q25", "q50", "q75")]
                w.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write report to {d}: {exc.strerror}") from exc
    return paths
