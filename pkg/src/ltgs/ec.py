"""State-dependent outflow rules and their two MILP formulations.

Storage fractions are active volume divided by useful volume. Flows are in
m³/s. A ``MaxOutflowTable`` stores, per calendar month, interval breakpoints
and the limit that applies inside each interval; ``inf`` marks the normal
range, which has no regulatory limit and is replaced by ``Q_sup`` in models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ConfigurationError, StageSubproblem, SystemConfig


@dataclass(frozen=True)
class OperationRanges:
    v_res: float
    q_min_restricted: float
    q_min_normal: float

    def __post_init__(self):
        if not 0.0 < self.v_res < 1.0:
            raise ValueError("v_res must lie strictly between 0 and 1")
        if not 0.0 <= self.q_min_restricted <= self.q_min_normal:
            raise ValueError("need 0 <= q_min_restricted <= q_min_normal")


@dataclass(frozen=True)
class MonthRule:
    breakpoints: tuple  # fractions, first 0, last 1
    limits: tuple  # m³/s, one per interval; inf for "no limit"
    offset: float = 0.0  # added to finite limits (reference-plant chaining)

    def __post_init__(self):
        bp, lim = self.breakpoints, self.limits
        if len(bp) < 2 or len(lim) != len(bp) - 1:
            raise ValueError("need one limit per interval between consecutive breakpoints")
        if abs(bp[0]) > 1e-12 or abs(bp[-1] - 1.0) > 1e-12:
            raise ValueError("breakpoints must start at 0 and end at 1")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(not (q > 0) for q in lim):
            raise ValueError("limits must be positive")


@dataclass(frozen=True)
class MaxOutflowTable:
    months: dict = field(default_factory=dict)  # calendar month 1..12 -> MonthRule

    def rule(self, month: int) -> MonthRule:
        try:
            return self.months[month]
        except KeyError:
            raise ConfigurationError(f"no maximum-outflow rule for month {month}") from None


@dataclass(frozen=True)
class PiecewiseSegments:
    """Concave maximum-outflow envelope over [start, 1] in storage-fraction space.

    Segment k is ``Q = slopes[k] * f + intercepts[k]`` on [breakpoints[k], breakpoints[k+1]].
    """

    breakpoints: tuple
    slopes: tuple  # m³/s per unit fraction
    intercepts: tuple  # m³/s

    def value(self, frac) -> float:
        f = np.asarray(frac, float)
        vals = np.min([a * f + b for a, b in zip(self.slopes, self.intercepts)], axis=0)
        return vals

    def slopes_per_hm3(self, useful_volume: float) -> np.ndarray:
        return np.asarray(self.slopes) / useful_volume


def rule_from_levels(levels, column_limits, v_res, q_restricted, attention_top=0.6) -> MonthRule:
    """Build a month rule from the regulation's level table.

    ``levels[k]`` is the storage fraction at which column limit ``column_limits[k]``
    starts to apply (None when the column is absent). Below ``v_res`` the
    restricted limit applies; from ``attention_top`` upward there is no limit.
    A gap between ``v_res`` and the first tabulated level takes the first
    tabulated limit.
    """
    pts = [(round(float(lv), 6), float(q)) for lv, q in zip(levels, column_limits) if lv is not None]
    if not pts:
        raise ValueError("month row has no tabulated level")
    bps, lims = [0.0, v_res], [q_restricted]
    if pts[0][0] > v_res + 1e-12:
        lims.append(pts[0][1])
        bps.append(pts[0][0])
    for k, (lv, q) in enumerate(pts):
        if lv < v_res - 1e-12 or lv >= attention_top:
            raise ValueError(f"level {lv} outside the attention range")
        lims.append(q)
        nxt = pts[k + 1][0] if k + 1 < len(pts) else attention_top
        bps.append(nxt)
    lims.append(math.inf)
    bps.append(1.0)
    return MonthRule(tuple(bps), tuple(lims))


def lookup_max_outflow(table: MaxOutflowTable, month: int, storage_fraction: float, q_sup: float = math.inf) -> float:
    """Limit of the closed-open interval containing the fraction (the last interval is closed)."""
    if not 0.0 <= storage_fraction <= 1.0:
        raise ValueError("storage fraction must lie in [0, 1]")
    rule = table.rule(month)
    bp = rule.breakpoints
    z = min(int(np.searchsorted(bp, storage_fraction, side="right")) - 1, len(rule.limits) - 1)
    lim = rule.limits[z]
    return q_sup if math.isinf(lim) else lim + rule.offset


def min_outflow_requirement(ranges: OperationRanges, storage_fraction: float) -> float:
    if not 0.0 <= storage_fraction <= 1.0:
        raise ValueError("storage fraction must lie in [0, 1]")
    return ranges.q_min_restricted if storage_fraction <= ranges.v_res else ranges.q_min_normal


def fit_concave_segments(rule: MonthRule, v_res: float) -> PiecewiseSegments:
    """Least concave majorant of the attention-range left-endpoint limits.

    Consecutive interpolation lines are kept while their slopes decrease;
    where a slope would increase, the offending knot is dropped and the chord
    over it is used instead, so the envelope never falls below a tabulated
    left-endpoint limit. The last line is extended over the normal range.
    """
    pts = [(b, q) for b, q in zip(rule.breakpoints[:-1], rule.limits)
           if b >= v_res - 1e-12 and math.isfinite(q)]
    if len(pts) < 2:
        raise ValueError("at least two attention-range breakpoints are required")
    hull = []
    for p in pts:
        hull.append(p)
        while len(hull) >= 3:
            (x0, y0), (x1, y1), (x2, y2) = hull[-3:]
            if (y1 - y0) * (x2 - x1) <= (y2 - y1) * (x1 - x0) + 1e-12:
                del hull[-2]  # slope increased (or stayed level) at the middle knot
            else:
                break
    slopes, intercepts, bps = [], [], [hull[0][0]]
    for (x0, y0), (x1, y1) in zip(hull, hull[1:]):
        a = (y1 - y0) / (x1 - x0)
        slopes.append(a)
        intercepts.append(y0 - a * x0)
        bps.append(x1)
    bps[-1] = 1.0
    return PiecewiseSegments(tuple(bps), tuple(slopes), tuple(intercepts))


def min_outflow_segments(ranges: OperationRanges, useful_volume: float, period_seconds: float):
    """Three-piece minimum-outflow rule: fractions, slopes (m³/s per hm³), intercepts (m³/s).

    In the first piece the requirement is capped by what the stored water can
    sustain over the period.
    """
    v1 = ranges.q_min_restricted * period_seconds / 1e6 / useful_volume
    if not 0.0 < v1 < ranges.v_res:
        raise ValueError("restricted minimum outflow exceeds what the restricted range can store")
    if ranges.q_min_normal * period_seconds / 1e6 > ranges.v_res * useful_volume:
        # without slack on these rows the plant must be able to release a
        # period of normal minimum outflow from the restricted level
        raise ValueError("normal minimum outflow exceeds what the restricted level can release")
    fr = (0.0, v1, ranges.v_res, 1.0)
    slopes = (1e6 / period_seconds, 0.0, 0.0)
    intercepts = (0.0, ranges.q_min_restricted, ranges.q_min_normal)
    return fr, slopes, intercepts


def _plant_context(config: SystemConfig, plant):
    h = config.hydro(plant)
    idx = config.hydro_index()
    ref = config.hydro(h.reference)
    if ref.useful_volume <= 0:
        raise ConfigurationError(f"reference plant {ref.name} has no storage")
    return h, idx[ref.id], ref, idx[h.id]


def _zone_rows(sub, name, u, v_res, i_ref, vbar):
    # v_res (1 - u) <= v/vbar <= v_res u + (1 - u)
    sub.add_row(f"zone_lo[{name}]", {u: -v_res}, "<=", -v_res, state={i_ref: 1.0 / vbar})
    sub.add_row(f"zone_hi[{name}]", {u: 1.0 - v_res}, "<=", 1.0, state={i_ref: -1.0 / vbar})


def _interval_rows(sub, label, u, lo, hi, i_ref, vbar):
    # lo * u <= v/vbar <= hi * u + (1 - u); rows that are always slack are omitted.
    if lo > 0:
        sub.add_row(f"sel_lo[{label}]", {u: lo}, "<=", 0.0, state={i_ref: 1.0 / vbar})
    if hi < 1:
        sub.add_row(f"sel_hi[{label}]", {u: 1.0 - hi}, "<=", 1.0, state={i_ref: -1.0 / vbar})


def add_variant_a(sub: StageSubproblem, config: SystemConfig, plant, ranges: OperationRanges,
                  table: MaxOutflowTable, month: int, incoming_volumes=None) -> StageSubproblem:
    """Interval 0-1 selection formulation with priced slacks on both outflow rows."""
    h = config.hydro(plant)
    if not h.ec_flag:
        return sub
    rule = table.rule(month)
    h, i_ref, ref, _ = _plant_context(config, plant)
    out = sub.copy()
    if incoming_volumes is not None:
        out.incoming = np.asarray(incoming_volumes, float)
    vbar = ref.useful_volume
    nm = h.name
    flow = {f"q[{nm}]": 1.0, f"s[{nm}]": 1.0}

    u = out.add_variable(f"u_min[{nm}]", 0.0, 1.0, integer=True)
    dmin = out.add_variable(f"def_min[{nm}]", 0.0, np.inf, config.ec_penalty_min)
    _zone_rows(out, nm, u, ranges.v_res, i_ref, vbar)
    q1, q2 = ranges.q_min_restricted, ranges.q_min_normal
    out.add_row(f"min_outflow[{nm}]", {**flow, dmin: 1.0, u: q2 - q1}, ">=", q2)

    dmax = out.add_variable(f"def_max[{nm}]", 0.0, np.inf, config.ec_penalty_max)
    bp = rule.breakpoints
    sel, cap = {}, {**flow, dmax: -1.0}
    for z, lim in enumerate(rule.limits):
        uz = out.add_variable(f"u_max[{nm},{z + 1}]", 0.0, 1.0, integer=True)
        _interval_rows(out, f"{nm},{z + 1}", uz, bp[z], bp[z + 1], i_ref, vbar)
        sel[uz] = 1.0
        cap[uz] = -(config.Q_sup if math.isinf(lim) else lim + rule.offset)
    out.add_row(f"one_interval[{nm}]", sel, "=", 1.0)
    out.add_row(f"max_outflow[{nm}]", cap, "<=", 0.0)
    return out


def add_variant_b(sub: StageSubproblem, config: SystemConfig, plant, segments: PiecewiseSegments,
                  ranges: OperationRanges, table: MaxOutflowTable, month: int,
                  incoming_volumes=None) -> StageSubproblem:
    """Concave piecewise-linear maximum outflow with a single restricted-zone binary."""
    h = config.hydro(plant)
    if not h.ec_flag:
        return sub
    rule = table.rule(month)
    h, i_ref, ref, i_own = _plant_context(config, plant)
    if h.useful_volume <= 0:
        raise ConfigurationError(f"{h.name}: minimum-outflow pieces need a storage reservoir")
    out = sub.copy()
    if incoming_volumes is not None:
        out.incoming = np.asarray(incoming_volumes, float)
    nm = h.name
    flow = {f"q[{nm}]": 1.0, f"s[{nm}]": 1.0}
    Qs = config.Q_sup
    vbar = ref.useful_volume

    u = out.add_variable(f"u_zone[{nm}]", 0.0, 1.0, integer=True)
    dmax = out.add_variable(f"def_max[{nm}]", 0.0, np.inf, config.ec_penalty_max)
    dres = out.add_variable(f"def_res[{nm}]", 0.0, np.inf, config.res_penalty)
    _zone_rows(out, nm, u, ranges.v_res, i_ref, vbar)
    slopes = segments.slopes_per_hm3(vbar)
    for k, (a, b) in enumerate(zip(slopes, segments.intercepts)):
        out.add_row(f"max_segment[{nm},{k + 1}]", {**flow, u: -Qs, dmax: -1.0}, "<=",
                    b + rule.offset, state={i_ref: a})
    q_res = rule.limits[0] + rule.offset
    out.add_row(f"max_restricted[{nm}]", {**flow, u: Qs, dres: -1.0}, "<=", q_res + Qs)

    fr, a_lo, b_lo = min_outflow_segments(ranges, h.useful_volume, config.period_seconds)
    sel = {}
    for z in range(len(a_lo)):
        uz = out.add_variable(f"u_minseg[{nm},{z + 1}]", 0.0, 1.0, integer=True)
        _interval_rows(out, f"min,{nm},{z + 1}", uz, fr[z], fr[z + 1], i_own, h.useful_volume)
        sel[uz] = 1.0
        out.add_row(f"min_segment[{nm},{z + 1}]", {**flow, uz: -Qs}, ">=", b_lo[z] - Qs,
                    state={i_own: a_lo[z]})
    out.add_row(f"one_min_interval[{nm}]", sel, "=", 1.0)
    return out
