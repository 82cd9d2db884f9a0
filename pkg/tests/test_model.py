import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltgs import load_system
from ltgs.lp import solve_lp
from ltgs.model import (ConfigurationError, HydroPlant, InflowScenario, SystemConfig, ThermalPlant,
                        build_base_stage, downstream_map, stored_energy, validate_system)
from instances import random_config


@pytest.fixture(scope="module")
def appendix():
    return load_system()


def replace_hydro(config, name, **changes):
    hydros = tuple(dataclasses.replace(h, **changes) if h.name == name else h for h in config.hydros)
    return config.with_(hydros=hydros)


def small_system(hydros=(), thermals=(), demand=0.0, horizon=2):
    return SystemConfig(hydros=tuple(hydros), thermals=tuple(thermals), demand=(demand,) * horizon,
                        deficit_cost=1000.0, horizon_months=horizon, analysis_months=horizon // 2)


def test_appendix_system_is_valid(appendix):
    assert validate_system(appendix) == []


def test_flow_conversion_follows_period_length(appendix):
    assert appendix.K == pytest.approx(2.628)
    assert appendix.period_seconds == 730 * 3600


def test_initial_volume_above_capacity_is_named(appendix):
    tm = appendix.hydro("TRES MARIAS")
    bad = replace_hydro(appendix, "TRES MARIAS", initial_volume=tm.useful_volume + 1)
    problems = validate_system(bad)
    assert len(problems) == 1
    assert "TRES MARIAS" in problems[0]


def test_self_upstream_is_a_cycle(appendix):
    sob = appendix.hydro("SOBRADINHO")
    bad = replace_hydro(appendix, "SOBRADINHO", upstream_ids=sob.upstream_ids | {sob.id})
    assert any("cycle" in p for p in validate_system(bad))


@pytest.mark.parametrize("change, word", [
    (dict(productivity=-1.0), "productivity"),
    (dict(max_generation=-1.0), "max_generation"),
    (dict(max_turbined_outflow=-1.0), "max_turbined_outflow"),
    (dict(ec_flag=True, reference_id=99), "reference"),
])
def test_hydro_rules(appendix, change, word):
    bad = replace_hydro(appendix, "QUEIMADO", **change)
    assert any(word in p and "QUEIMADO" in p for p in validate_system(bad))


def test_reference_without_storage_is_rejected(appendix):
    xingo = appendix.hydro("XINGO")
    bad = replace_hydro(appendix, "SOBRADINHO", ec_flag=True, reference_id=xingo.id)
    assert any("no storage" in p for p in validate_system(bad))


def test_config_rules(appendix):
    assert any("twice" in p for p in validate_system(appendix.with_(analysis_months=10)))
    assert any("exactly one" in p for p in validate_system(appendix.with_(openings_per_stage=(2,) * 24)))
    assert any("at least one" in p for p in validate_system(appendix.with_(openings_per_stage=(1,) + (0,) * 23)))
    bad_thermal = appendix.thermals[:1] + (ThermalPlant(99, "X", 10.0, -1.0),)
    assert any("unit_cost" in p for p in validate_system(appendix.with_(thermals=bad_thermal)))


def test_openings_default_to_one_then_four():
    cfg = small_system()
    assert [cfg.openings(t) for t in (1, 2)] == [1, 4]


def test_appendix_stage_shape(appendix):
    sub = build_base_stage(appendix, 1)
    names = sub.row_names
    assert names.count("demand") == 1
    assert sum(n.startswith("balance[") for n in names) == 7
    assert sum(n.startswith("production[") for n in names) == 7
    assert sub.m == 15
    _, _, L, *_ = sub.matrices()
    # the incoming volume enters each balance row with coefficient +1 and nowhere else
    for i, name in enumerate(names):
        expected = np.zeros(7)
        if name.startswith("balance["):
            expected[names.index(name) - 1] = 1.0
        np.testing.assert_array_equal(L[i], expected)


def test_objective_costs_are_nonnegative(appendix):
    sub = build_base_stage(appendix, 3)
    assert min(sub.cost) >= 0


def test_empty_system_costs_nothing():
    cfg = small_system(thermals=[ThermalPlant(1, "G", 100.0, 5.0)])
    sub = build_base_stage(cfg, 1)
    assert sub.m == 1
    sol = solve_lp(sub.to_lp())
    assert sol.optimal and sol.objective == 0.0


def test_no_water_means_deficit():
    h = HydroPlant(1, "H", max_generation=100.0, useful_volume=50.0, productivity=1.0,
                   max_turbined_outflow=100.0, initial_volume=0.0)
    cfg = small_system(hydros=[h], demand=30.0)
    sol = solve_lp(build_base_stage(cfg, 1, inflow=[0.0], incoming_volumes=[0.0]).to_lp())
    sub = build_base_stage(cfg, 1, inflow=[0.0], incoming_volumes=[0.0])
    for var in ("q[H]", "s[H]", "ph[H]"):
        assert sol.x[sub.index(var)] == pytest.approx(0.0, abs=1e-9)
    assert sol.x[sub.index("def")] == pytest.approx(30.0)


def test_unknown_plant_in_inflow(appendix):
    with pytest.raises(ConfigurationError):
        build_base_stage(appendix, 1, inflow={"NOWHERE": 10.0})
    with pytest.raises(ConfigurationError):
        build_base_stage(appendix, 1, inflow=InflowScenario(1, 0, {"TRES MARIAS": 1.0}))


def test_inflow_by_name_equals_vector(appendix):
    y = np.arange(7, dtype=float) * 10
    by_name = {h.name: y[i] for i, h in enumerate(appendix.hydros)}
    a = build_base_stage(appendix, 2, inflow=by_name).rhs_at()
    b = build_base_stage(appendix, 2, inflow=y).rhs_at()
    np.testing.assert_array_equal(a, b)


def test_stored_energy_examples(appendix):
    assert stored_energy(appendix, np.zeros(7)) == 0.0
    h = HydroPlant(1, "H", 10.0, 20.0, 0.5, 10.0, 0.0)
    assert stored_energy(small_system(hydros=[h]), [10.0]) == pytest.approx(5.0)
    # hand walk of the cascade: each volume times the summed productivity down to the sea
    v0 = [h.initial_volume for h in appendix.hydros]
    assert stored_energy(appendix, v0) == pytest.approx(27602.905970800002, rel=1e-12)


def test_downstream_chain(appendix):
    down = downstream_map(appendix)
    name = {h.id: h.name for h in appendix.hydros}
    chain, j = [], appendix.hydro("RETIRO BAIXO").id
    while j is not None:
        chain.append(name[j])
        j = down[j]
    assert chain == ["RETIRO BAIXO", "TRES MARIAS", "SOBRADINHO", "ITAPARICA", "COMP PAF-MOX", "XINGO"]


@settings(max_examples=40)
@given(st.integers(0, 10**9))
def test_stored_energy_is_linear_and_monotone(seed):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng, n_hydros=int(rng.integers(1, 4)))
    cap = np.array([h.useful_volume for h in cfg.hydros])
    a, b = rng.random(cap.size) * cap, rng.random(cap.size) * cap
    lam = rng.random()
    mix = stored_energy(cfg, lam * a + (1 - lam) * b)
    assert mix == pytest.approx(lam * stored_energy(cfg, a) + (1 - lam) * stored_energy(cfg, b), rel=1e-10)
    assert stored_energy(cfg, np.maximum(a, b)) >= max(stored_energy(cfg, a), stored_energy(cfg, b)) - 1e-9


@settings(max_examples=40)
@given(st.integers(0, 10**9))
def test_water_is_conserved(seed):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng, n_hydros=int(rng.integers(1, 4)))
    v_in = np.array([rng.random() * h.useful_volume for h in cfg.hydros])
    y = rng.uniform(0, 200, len(cfg.hydros))
    sub = build_base_stage(cfg, 1, inflow=y, incoming_volumes=v_in)
    sol = solve_lp(sub.to_lp())
    assert sol.optimal
    K = cfg.K
    for i, h in enumerate(cfg.hydros):
        out = sol.x[sub.index(f"q[{h.name}]")] + sol.x[sub.index(f"s[{h.name}]")]
        upstream = sum(sol.x[sub.index(f"q[{u.name}]")] + sol.x[sub.index(f"s[{u.name}]")]
                       for u in cfg.hydros if u.id in h.upstream_ids)
        resid = sol.x[sub.index(f"v[{h.name}]")] + K * out - K * upstream - v_in[i] - K * y[i]
        assert abs(resid) <= 1e-6


@settings(max_examples=40)
@given(st.integers(0, 10**9))
def test_thermals_follow_merit_order(seed):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng, n_hydros=int(rng.integers(0, 3)))
    cfg = cfg.with_(thermals=tuple(dataclasses.replace(g, unit_cost=float(c)) for g, c in
                                   zip(cfg.thermals, rng.permutation(len(cfg.thermals)) * 7.0 + 1.0)))
    sub = build_base_stage(cfg, 1, inflow=rng.uniform(0, 100, len(cfg.hydros)))
    sol = solve_lp(sub.to_lp())
    gen = {g.name: sol.x[sub.index(f"pt[{g.name}]")] for g in cfg.thermals}
    for g in cfg.thermals:
        if gen[g.name] > 1e-7:
            for other in cfg.thermals:
                if other.unit_cost < g.unit_cost:
                    assert gen[other.name] == pytest.approx(other.max_generation, abs=1e-6)
