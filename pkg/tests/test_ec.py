import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltgs.ec import (MaxOutflowTable, MonthRule, OperationRanges, add_variant_a, add_variant_b,
                     fit_concave_segments, lookup_max_outflow, min_outflow_requirement, min_outflow_segments)
from ltgs.io import load_rules
from ltgs.lp import solve_lp, solve_milp
from ltgs.model import ConfigurationError, HydroPlant, SystemConfig, ThermalPlant, build_base_stage
from instances import random_config

FEB, MAY = 2, 5
RANGES, TABLE = load_rules()["TRES MARIAS"]
VBAR = 15278.0


def plant_system(penalty=1e5, demand=2000.0):
    """One regulated reservoir that would like to release as much water as it is allowed to."""
    K = 2.628
    h = HydroPlant(1, "TRES MARIAS", max_generation=1e5, useful_volume=VBAR, productivity=0.16576,
                   max_turbined_outflow=5000.0 * K, initial_volume=VBAR / 2, ec_flag=True)
    g = ThermalPlant(1, "G", 100.0, 1e6)
    return SystemConfig(hydros=(h,), thermals=(g,), demand=(demand,) * 24, deficit_cost=1e7,
                        ec_penalty_min=penalty, ec_penalty_max=penalty, horizon_months=24, analysis_months=12)


def stage(cfg, frac, inflow=500.0, month=MAY):
    return build_base_stage(cfg, month, inflow=[inflow], incoming_volumes=[frac * VBAR])


def outflow(sub, x):
    return x[sub.index("q[TRES MARIAS]")] + x[sub.index("s[TRES MARIAS]")]


def fixed_zero(lp, sub, *names):
    upper = lp.upper.copy()
    for nm in names:
        upper[sub.index(nm)] = 0.0
    return lp.with_bounds(lp.lower, upper)


# -- lookups -------------------------------------------------------------------

def test_restricted_level_and_minimums():
    assert (RANGES.v_res, RANGES.q_min_restricted, RANGES.q_min_normal) == (0.3, 100.0, 150.0)


@pytest.mark.parametrize("month, frac, expected", [(FEB, 0.45, 250.0), (MAY, 0.20, 100.0), (MAY, 0.70, 9999.0)])
def test_lookup_max_outflow(month, frac, expected):
    assert lookup_max_outflow(TABLE, month, frac, q_sup=9999.0) == expected


def test_lookup_at_breakpoint_takes_right_interval():
    assert lookup_max_outflow(TABLE, MAY, 0.456) == 200.0
    assert lookup_max_outflow(TABLE, MAY, 1.0) == math.inf


def test_lookup_errors():
    with pytest.raises(ConfigurationError):
        lookup_max_outflow(MaxOutflowTable({}), 1, 0.5)
    with pytest.raises(ValueError):
        lookup_max_outflow(TABLE, MAY, 1.5)


@pytest.mark.parametrize("frac, expected", [(0.2, 100.0), (0.5, 150.0), (0.3, 100.0)])
def test_min_outflow_requirement(frac, expected):
    assert min_outflow_requirement(RANGES, frac) == expected


@pytest.mark.parametrize("args", [(0.0, 1, 2), (1.0, 1, 2), (0.3, 3, 2), (0.3, -1, 2)])
def test_operation_ranges_validated(args):
    with pytest.raises(ValueError):
        OperationRanges(*args)


@pytest.mark.parametrize("bps, lims", [
    ((0.0, 0.5, 0.4, 1.0), (1, 2, 3)),
    ((0.1, 1.0), (1,)),
    ((0.0, 0.5, 1.0), (1,)),
    ((0.0, 1.0), (0.0,)),
])
def test_month_rule_validated(bps, lims):
    with pytest.raises(ValueError):
        MonthRule(bps, lims)


def test_single_interval_rule():
    table = MaxOutflowTable({1: MonthRule((0.0, 1.0), (80.0,))})
    assert lookup_max_outflow(table, 1, 0.0) == lookup_max_outflow(table, 1, 1.0) == 80.0


# -- concave envelope ----------------------------------------------------------

def test_collinear_points_give_one_segment():
    seg = fit_concave_segments(MonthRule((0.0, 0.3, 0.5, 0.7, 1.0), (100.0, 150.0, 200.0, math.inf)), 0.3)
    assert len(seg.slopes) == 1
    assert seg.value(0.3) == pytest.approx(150.0)
    assert seg.value(0.5) == pytest.approx(200.0)


def test_slope_increase_is_removed():
    # the slope rises by 2% after 0.5; the fitted lines must not
    rule = MonthRule((0.0, 0.3, 0.4, 0.5, 0.6, 1.0), (100.0, 150.0, 200.0, 250.0, math.inf))
    bumped = MonthRule(rule.breakpoints, (100.0, 150.0, 200.0, 251.0, math.inf))
    for r in (rule, bumped):
        seg = fit_concave_segments(r, 0.3)
        assert all(a1 <= a0 + 1e-9 for a0, a1 in zip(seg.slopes, seg.slopes[1:]))
        for b, q in zip(r.breakpoints[1:-1], r.limits[1:-1]):
            assert seg.value(b) >= q - 1e-9


def test_fit_needs_two_attention_points():
    with pytest.raises(ValueError):
        fit_concave_segments(MonthRule((0.0, 0.3, 1.0), (100.0, math.inf)), 0.3)


def stair(rule, f):
    z = min(int(np.searchsorted(rule.breakpoints, f, side="right")) - 1, len(rule.limits) - 1)
    return rule.limits[z]


def check_envelope(rule, v_res):
    seg = fit_concave_segments(rule, v_res)
    assert all(a1 <= a0 + 1e-9 for a0, a1 in zip(seg.slopes, seg.slopes[1:]))
    # consecutive lines meet at their shared breakpoint
    for k in range(len(seg.slopes) - 1):
        b = seg.breakpoints[k + 1]
        left = seg.slopes[k] * b + seg.intercepts[k]
        right = seg.slopes[k + 1] * b + seg.intercepts[k + 1]
        assert left == pytest.approx(right, abs=1e-6)
    top = max(b for b, q in zip(rule.breakpoints[:-1], rule.limits) if math.isfinite(q))
    top = rule.breakpoints[rule.breakpoints.index(top) + 1]
    grid = np.arange(v_res, top, 1e-3)
    grid = grid[grid < top - 1e-9]
    env = seg.value(grid)
    assert np.all(env >= np.array([stair(rule, f) for f in grid]) - 1e-9)


@pytest.mark.parametrize("month", range(1, 13))
def test_bundled_envelopes_dominate_table(month):
    check_envelope(TABLE.rule(month), RANGES.v_res)


@settings(max_examples=80)
@given(st.lists(st.floats(0.01, 0.2), min_size=2, max_size=7), st.lists(st.floats(0, 80), min_size=7, max_size=7))
def test_random_envelopes_dominate_table(widths, steps):
    v_res = 0.3
    bps = [0.0, v_res]
    for w in widths:
        bps.append(min(bps[-1] + w, 0.95))
        if bps[-1] >= 0.95:
            break
    if len(set(bps)) != len(bps) or len(bps) < 4:
        return
    bps.append(1.0)
    lims = [100.0]
    for k in range(len(bps) - 3):
        lims.append(150.0 + sum(steps[:k]))
    lims.append(math.inf)
    check_envelope(MonthRule(tuple(bps), tuple(lims)), v_res)


def test_min_outflow_pieces():
    fr, slopes, intercepts = min_outflow_segments(RANGES, VBAR, 730 * 3600.0)
    assert fr[0] == 0.0 and fr[2] == 0.3 and fr[3] == 1.0
    # first piece: at most the stored water spread over the period
    assert slopes[0] == pytest.approx(1e6 / (730 * 3600.0))
    assert fr[1] == pytest.approx(100.0 * 730 * 3600 / 1e6 / VBAR)
    assert intercepts == (0.0, 100.0, 150.0)
    with pytest.raises(ValueError):
        min_outflow_segments(RANGES, 500.0, 730 * 3600.0)


# -- variant A -----------------------------------------------------------------

def binary_names(sub):
    return [n for n, b in zip(sub.var_names, sub.integer) if b]


def test_variant_a_binaries_for_may():
    cfg = plant_system()
    sub = add_variant_a(stage(cfg, 0.5), cfg, "TRES MARIAS", RANGES, TABLE, MAY)
    names = binary_names(sub)
    assert sum(n.startswith("u_min") for n in names) == 1
    assert sum(n.startswith("u_max") for n in names) == 7


def test_unregulated_plant_is_untouched():
    cfg = random_config(np.random.default_rng(0), n_hydros=1)
    base = build_base_stage(cfg, 1)
    assert add_variant_a(base, cfg, "H1", RANGES, TABLE, MAY) is base
    seg = fit_concave_segments(TABLE.rule(MAY), RANGES.v_res)
    assert add_variant_b(base, cfg, "H1", seg, RANGES, TABLE, MAY) is base


def test_missing_month_is_an_error():
    cfg = plant_system()
    with pytest.raises(ConfigurationError):
        add_variant_a(stage(cfg, 0.5), cfg, "TRES MARIAS", RANGES, MaxOutflowTable({}), MAY)


def feasible_selections(sub, lp):
    """Enumerate 0-1 assignments that satisfy every row containing only binaries and constants."""
    idx = np.flatnonzero(sub.markings)
    only_bin = [i for i in range(lp.m) if set(np.flatnonzero(lp.A[i])) <= set(idx)]
    ok = []
    for combo in itertools.product((0.0, 1.0), repeat=idx.size):
        x = np.zeros(lp.n)
        x[idx] = combo
        good = True
        for i in only_bin:
            ax, s, b = lp.A[i] @ x, lp.senses[i], lp.b[i]
            if (s == "<=" and ax > b + 1e-9) or (s == ">=" and ax < b - 1e-9) or (s == "=" and abs(ax - b) > 1e-9):
                good = False
                break
        if good:
            ok.append(dict(zip((sub.var_names[j] for j in idx), combo)))
    return ok


def test_variant_a_feb_045_selects_250_interval():
    cfg = plant_system()
    sub = add_variant_a(stage(cfg, 0.45, month=FEB), cfg, "TRES MARIAS", RANGES, TABLE, FEB)
    lp = sub.to_lp()
    choices = feasible_selections(sub, lp)
    active = {tuple(k for k, v in c.items() if k.startswith("u_max") and v == 1.0) for c in choices}
    assert active == {("u_max[TRES MARIAS,5]",)}  # [0.423, 0.474) carries 250 m³/s
    sol = solve_milp(fixed_zero(lp, sub, "def_max[TRES MARIAS]"), sub.markings)
    assert sol.optimal
    assert sol.x[sub.index("u_max[TRES MARIAS,5]")] == pytest.approx(1.0)
    assert outflow(sub, sol.x) == pytest.approx(250.0, abs=1e-6)


@settings(max_examples=40)
@given(st.floats(0.0, 1.0), st.integers(1, 12))
def test_variant_a_selection_contains_the_fraction(frac, month):
    cfg = plant_system()
    sub = add_variant_a(stage(cfg, frac, month=month), cfg, "TRES MARIAS", RANGES, TABLE, month)
    bp = TABLE.rule(month).breakpoints
    choices = feasible_selections(sub, sub.to_lp())
    assert choices
    for c in choices:
        on = [k for k, v in c.items() if k.startswith("u_max") and v == 1.0]
        assert len(on) == 1
        z = int(on[0].split(",")[1].rstrip("]")) - 1
        assert bp[z] - 1e-9 <= frac <= bp[z + 1] + 1e-9


@pytest.mark.parametrize("frac, month", [(0.2, MAY), (0.45, FEB), (0.5, MAY), (0.8, MAY)])
def test_variant_a_window_with_true_binaries(frac, month):
    cfg = plant_system(penalty=0.0)
    sub = add_variant_a(stage(cfg, frac, month=month), cfg, "TRES MARIAS", RANGES, TABLE, month)
    lp = sub.to_lp()
    bp = TABLE.rule(month).breakpoints
    z = min(int(np.searchsorted(bp, frac, side="right")) - 1, len(bp) - 2)
    lo, hi = lp.lower.copy(), lp.upper.copy()
    for name in binary_names(sub):
        if name.startswith("u_min"):
            val = 1.0 if frac <= RANGES.v_res else 0.0
        else:
            val = 1.0 if name == f"u_max[TRES MARIAS,{z + 1}]" else 0.0
        lo[sub.index(name)] = hi[sub.index(name)] = val
    d_min, d_max = 7.0, 11.0
    for name, slack in (("def_min[TRES MARIAS]", d_min), ("def_max[TRES MARIAS]", d_max)):
        lo[sub.index(name)] = hi[sub.index(name)] = slack
    fixed = lp.with_bounds(lo, hi)
    flow = np.zeros(lp.n)
    flow[[sub.index("q[TRES MARIAS]"), sub.index("s[TRES MARIAS]")]] = 1.0
    low = solve_lp(type(lp)(flow, lp.A, lp.senses, lp.b, lo, hi))
    high = solve_lp(type(lp)(-flow, lp.A, lp.senses, lp.b, lo, hi))
    assert fixed is not None and low.optimal and high.optimal
    assert low.objective == pytest.approx(min_outflow_requirement(RANGES, frac) - d_min, abs=1e-6)
    top = lookup_max_outflow(TABLE, month, frac, q_sup=cfg.Q_sup) + d_max
    water = frac * VBAR / cfg.K + 500.0  # all stored water plus the inflow
    assert -high.objective == pytest.approx(min(top, water), abs=1e-6)


@settings(max_examples=30)
@given(st.integers(0, 10**9))
def test_free_slacks_recover_the_unregulated_optimum(seed):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng, n_hydros=int(rng.integers(1, 3)), ec=True, penalty=0.0)
    v_in = np.array([rng.random() * h.useful_volume for h in cfg.hydros])
    y = rng.uniform(0, 150, len(cfg.hydros))
    month = int(rng.integers(1, 13))
    base = build_base_stage(cfg, 1, inflow=y, incoming_volumes=v_in)
    sub = add_variant_a(base, cfg, "H1", RANGES, TABLE, month)
    a = solve_milp(sub.to_lp(), sub.markings)
    b = solve_lp(base.to_lp())
    assert a.objective == pytest.approx(b.objective, rel=1e-7, abs=1e-6)


# -- variant B -----------------------------------------------------------------

def test_variant_b_empty_reservoir_selects_first_minimum_piece():
    cfg = plant_system()
    seg = fit_concave_segments(TABLE.rule(MAY), RANGES.v_res)
    sub = add_variant_b(stage(cfg, 0.0, inflow=0.0), cfg, "TRES MARIAS", seg, RANGES, TABLE, MAY)
    sol = solve_milp(sub.to_lp(), sub.markings)
    assert sol.optimal
    assert sol.x[sub.index("u_minseg[TRES MARIAS,1]")] == pytest.approx(1.0)
    # the binding requirement is v_in / T = 0, so no water can be released
    assert outflow(sub, sol.x) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("frac", [0.35, 0.42, 0.5, 0.58, 0.75, 0.95])
def test_variant_b_release_follows_envelope(frac):
    cfg = plant_system()
    seg = fit_concave_segments(TABLE.rule(MAY), RANGES.v_res)
    sub = add_variant_b(stage(cfg, frac), cfg, "TRES MARIAS", seg, RANGES, TABLE, MAY)
    lp = fixed_zero(sub.to_lp(), sub, "def_max[TRES MARIAS]")
    sol = solve_milp(lp, sub.markings)
    assert sol.optimal
    direct = min(a * frac + b for a, b in zip(seg.slopes, seg.intercepts))
    assert outflow(sub, sol.x) == pytest.approx(direct, abs=1e-6)


def test_variant_b_restricted_cap():
    cfg = plant_system()
    seg = fit_concave_segments(TABLE.rule(MAY), RANGES.v_res)
    sub = add_variant_b(stage(cfg, 0.2), cfg, "TRES MARIAS", seg, RANGES, TABLE, MAY)
    lp = fixed_zero(sub.to_lp(), sub, "def_res[TRES MARIAS]")
    sol = solve_milp(lp, sub.markings)
    assert outflow(sub, sol.x) == pytest.approx(100.0, abs=1e-6)


def test_variant_b_rejects_run_of_river():
    cfg = plant_system()
    h = cfg.hydros[0]
    import dataclasses

    ror = cfg.with_(hydros=(h, dataclasses.replace(h, id=2, name="ROR", useful_volume=0.0, initial_volume=0.0,
                                                   ec_flag=True, reference_id=1)))
    seg = fit_concave_segments(TABLE.rule(MAY), RANGES.v_res)
    base = build_base_stage(ror, MAY, inflow=[0.0, 0.0])
    with pytest.raises(ConfigurationError):
        add_variant_b(base, ror, "ROR", seg, RANGES, TABLE, MAY)
