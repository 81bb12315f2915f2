from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import assert_close, assert_feasible, small_instance
from oracles import milp_reference, oracle_weights
from pvbopt.domain import ValidationError
from pvbopt.economics import CostSet, Finance
from pvbopt.optimizer import (
    BatteryTechnology,
    ConfigurationError,
    HighsSolver,
    LPResult,
    PVBands,
    SolverFailure,
    bands_dominate,
    build_lp,
    composite_prices,
    feasible_subsets,
    lifetime_weights,
    solve_group,
)
from pvbopt.profiles import PriceBook, constant_price_book

DAY = 365  # a 24 h horizon stands for a year, so prices are scaled up to keep PV worthwhile


def random_day(rng, peak=None):
    hours = np.arange(24)
    load = np.round(rng.uniform(0.1, 1.0, 24), 1)
    peak = rng.uniform(0.6, 1.1) if peak is None else peak
    irr = np.clip(np.sin(np.pi * (hours - 6) / 12), 0, None) * peak
    return load, irr


def with_points(costs: CostSet, **items) -> CostSet:
    pts = dict(costs.points)
    for key, val in items.items():
        item, band = key.rsplit("_b", 1) if "_b" in key else (key, "0")
        pts[(item, int(band))] = ((2020, val), (2050, val))
    return CostSet(costs.variant, pts, costs.battery_inv_factor)


def test_composite_prices_closed_form():
    book = constant_price_book(20.0, 5.0, 30, 4)
    inj, ret = composite_prices(book, 0.04, 0.005, 30)
    factor = sum(0.995 ** k / 1.04 ** (k + 1) for k in range(30))
    assert np.allclose(ret, 20.0 * factor) and np.allclose(inj, 5.0 * factor)
    with pytest.raises(ValidationError):
        composite_prices(book, 0.04, 0.005, 31)


@settings(max_examples=25, deadline=None)
@given(
    year=st.sampled_from([2020, 2023, 2030, 2031, 2040, 2050]),
    wacc=st.sampled_from([0.0, 0.02, 0.04, 0.08]),
    l_bat=st.integers(5, 31),
    seed=st.integers(0, 10_000),
)
def test_lifetime_weights_match_year_by_year_oracle(base_costs, year, wacc, l_bat, seed):
    rng = np.random.default_rng(seed)
    T = 6
    book = PriceBook(year, rng.uniform(5, 30, (30, T)), rng.uniform(-2, 10, (30, T)), rng.uniform(0, 100, (30, T)))
    load, irr = np.ones(T), np.ones(T) * 0.5
    inst = small_instance(load, irr, base_costs, year=year, finance=Finance(wacc=wacc, battery_lifetime=l_bat), book=book)
    w, o = lifetime_weights(inst), oracle_weights(inst)
    assert np.allclose(w.retail, o.retail, rtol=1e-12)
    assert np.allclose(w.injection, o.injection, rtol=1e-12, atol=1e-15)
    assert np.allclose(w.pv_voc, o.pv_voc, rtol=1e-12)
    assert np.allclose(w.pv_cost, o.pv_cost, rtol=1e-12)
    assert_close(w.bat_voc, o.bat_voc, rel=1e-12)
    assert_close(w.fixed_credit, o.fixed_credit, rel=1e-12)
    assert_close(w.bat_e_cost, o.bat_e, rel=1e-12)
    assert_close(w.bat_p_cost, o.bat_p, rel=1e-12)


def test_lp_layout(base_costs):
    load, irr = random_day(np.random.default_rng(0))
    inst = small_instance(load, irr, base_costs, dep_max=5.0)
    lp = build_lp(inst, (1,))
    # X, E, P and five hourly families
    assert lp.shape[1] == 3 + 5 * 24
    lp2 = build_lp(inst, (1,), battery_allowed=False)
    assert lp2.shape[1] == 1 + 2 * 24
    multi = build_lp(inst, (1, 2))
    assert "gen" in multi.cols and multi.cols["gen"].shape == (2, 24)
    with pytest.raises(ValidationError):
        build_lp(inst, (6,))


def test_band_configuration_checks():
    with pytest.raises(ConfigurationError):
        PVBands(edges=(0.0, 6.0, 10.0, 30.0))
    with pytest.raises(ConfigurationError):
        PVBands(edges=(0.0, 10.0, 6.0, 30.0, 100.0))


def test_feasible_subsets_respect_deployment(base_costs):
    load, irr = random_day(np.random.default_rng(0))
    inst = small_instance(load, irr, base_costs, dep_max=8.0)
    subsets = feasible_subsets(inst)
    assert (1,) in subsets and (2,) in subsets and (1, 2) in subsets
    assert all(3 not in s and 4 not in s and 5 not in s for s in subsets)
    tiny = small_instance(load, irr, base_costs, dep_max=1.5)
    assert feasible_subsets(tiny) == []


def test_tiny_roof_means_do_nothing(base_costs):
    load, irr = random_day(np.random.default_rng(0))
    inst = small_instance(load, irr, base_costs, dep_max=1.5, retail=25 * DAY)
    sol = solve_group(inst)
    assert sol.pv_total == 0 and sol.objective == 0.0 and sol.subsets_solved == 0


def test_battery_disabled_gives_no_battery(base_costs):
    load, irr = random_day(np.random.default_rng(3))
    inst = small_instance(load, irr, base_costs, retail=30 * DAY, injection=1 * DAY, dep_max=4.0,
                          battery_allowed=False)
    sol = solve_group(inst)
    assert sol.bat_e == 0 and sol.bat_p == 0
    assert np.all(sol.dispatch.ch == 0) and np.all(sol.dispatch.soc == 0)


def test_depth_of_discharge_respected(base_costs):
    cheap = with_points(base_costs, bat_inv_e=1.0, bat_inv_p=1.0, bat_foc_p=0.01, bat_voc_e=0.1)
    load, irr = random_day(np.random.default_rng(5))
    bt = BatteryTechnology(dod_max=0.6)
    inst = small_instance(load, irr, cheap, retail=30 * DAY, injection=1 * DAY, dep_max=4.0, battery=bt)
    sol = solve_group(inst)
    assert sol.bat_e > 0
    assert np.all(sol.dispatch.soc >= 0.4 * sol.bat_e - 1e-7)
    assert_feasible(inst, sol)


def _milp_case(seed, base_costs, non_monotone):
    rng = np.random.default_rng(seed)
    load, irr = random_day(rng)
    costs = base_costs
    if non_monotone:
        # band 2 cheaper than band 1, band 3 dearer than band 1: mixing bands can pay
        costs = with_points(costs, pv_inv_b1=float(rng.uniform(1200, 1600)), pv_inv_b2=float(rng.uniform(700, 1000)),
                            pv_inv_b3=float(rng.uniform(1700, 2100)))
    if rng.random() < 0.5:
        costs = with_points(costs, bat_inv_e=float(rng.uniform(1, 50)), bat_inv_p=float(rng.uniform(1, 50)))
    eta = BatteryTechnology(eta_charge=float(rng.uniform(0.85, 1.0)), eta_discharge=float(rng.uniform(0.85, 1.0)))
    return small_instance(
        load * rng.uniform(1, 4), irr, costs,
        retail=float(rng.uniform(15, 35)) * DAY,
        injection=float(rng.uniform(0, 10)) * DAY,
        year=int(rng.choice([2020, 2025, 2035])),
        dep_max=float(rng.uniform(3, 15)),
        battery=eta,
    )


@pytest.mark.parametrize("seed", range(12))
def test_band_enumeration_matches_mixed_integer_model(base_costs, seed):
    inst = _milp_case(seed, base_costs, non_monotone=seed % 2 == 0)
    ref, ref_caps = milp_reference(inst)
    sol = solve_group(inst)
    assert_close(sol.objective, ref, rel=1e-6, abs_=1e-6, what=f"seed {seed} objective")
    assert_feasible(inst, sol)


def test_non_monotone_costs_disable_dominance(base_costs):
    inst = _milp_case(0, base_costs, non_monotone=True)
    assert not bands_dominate(inst, lifetime_weights(inst))
    monotone = _milp_case(1, base_costs, non_monotone=False)
    assert bands_dominate(monotone, lifetime_weights(monotone))


@pytest.mark.parametrize("seed", range(6))
def test_pruning_does_not_change_the_optimum(base_costs, seed):
    inst = _milp_case(100 + seed, base_costs, non_monotone=False)
    fast = solve_group(inst)
    full = solve_group(inst, exhaustive=True)
    assert full.subsets_solved >= fast.subsets_solved
    assert_close(fast.objective, full.objective, rel=1e-7, abs_=1e-7)


def test_cleaning_removes_simultaneous_flows_without_loss(base_costs):
    # lossless battery: the LP is indifferent to simultaneous use, cleaning must remove it
    cheap = with_points(base_costs, bat_inv_e=1.0, bat_inv_p=1.0, bat_foc_p=0.01, bat_voc_e=0.0)
    bt = BatteryTechnology(eta_charge=1.0, eta_discharge=1.0)
    for seed in range(5):
        load, irr = random_day(np.random.default_rng(seed))
        inst = small_instance(load, irr, cheap, retail=30 * DAY, injection=2 * DAY, dep_max=4.0, battery=bt)
        sol = solve_group(inst)
        d = sol.dispatch
        assert np.max(np.minimum(d.ch, d.dis)) <= 1e-9
        assert sol.objective <= sol.lp_objective + 1e-7 * max(1.0, abs(sol.lp_objective))
        assert_feasible(inst, sol)


def test_flagged_hours_for_negative_injection(base_costs):
    load, irr = random_day(np.random.default_rng(2))
    inj = np.full((30, 24), 5.0 * DAY)
    inj[:, 12] = -3.0 * DAY
    book = PriceBook(2020, np.full((30, 24), 25.0 * DAY), inj, inj * 10)
    inst = small_instance(load, irr, base_costs, dep_max=4.0, book=book)
    sol = solve_group(inst)
    assert sol.flagged_hours == (12,)
    assert sol.dispatch.pv2g[12] <= 1e-9


class _FailingSolver(HighsSolver):
    def solve(self, lp, warm=True):
        return LPResult(False, "forced failure", np.zeros(0), float("nan"), np.zeros(0))


def test_all_failures_raise_with_fingerprint(base_costs):
    load, irr = random_day(np.random.default_rng(0))
    inst = small_instance(load, irr, base_costs, dep_max=4.0, retail=25 * DAY)
    with pytest.raises(SolverFailure) as exc:
        solve_group(inst, solver=_FailingSolver())
    assert exc.value.fingerprint == inst.fingerprint()


def test_lp_dump(tmp_path, base_costs):
    load, irr = random_day(np.random.default_rng(0))
    inst = small_instance(load, irr, base_costs, dep_max=8.0, retail=25 * DAY)
    solve_group(inst, dump_dir=tmp_path, exhaustive=True)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files and all(f.endswith(".lp") and f.startswith(inst.fingerprint()) for f in files)


def test_solver_reuse_gives_same_answer(base_costs):
    solver = HighsSolver()
    objs = []
    for seed in (7, 8, 7):
        load, irr = random_day(np.random.default_rng(seed))
        inst = small_instance(load, irr, base_costs, dep_max=5.0, retail=25 * DAY, injection=4 * DAY)
        objs.append(solve_group(inst, solver=solver).objective)
    assert_close(objs[0], objs[2], rel=1e-9, abs_=1e-9)
