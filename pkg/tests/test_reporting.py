from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvbopt.domain import CustomerGroup, ValidationError
from pvbopt.profiles import HourlySeries
from pvbopt.reporting import (
    ResidualAccumulator,
    SolutionRow,
    aggregate,
    atomic_write,
    filter_by_pbp,
    pbp_curve,
    read_solutions_csv,
    required_tariff_increase,
    residual_report,
    write_aggregate_csv,
    write_curves_csv,
    write_pbp_curves_svg,
    write_residual_csv,
    write_residual_summary_csv,
    write_residual_week_svg,
    write_solutions_csv,
)


def row(area_bin=1, year=2050, count=10.0, pv=5.0, bat=2.0, pbp=8.0, npv=1000.0, error="", scenario="baseline"):
    return SolutionRow(
        scenario=scenario, region_id=1, irr_bin=1, area_bin=area_bin, load_bin=1, year=year,
        customer_count=count, median_area=60.0, median_irradiation=1200.0, median_consumption=4000.0,
        total_area=60.0 * count, dep_max_kw=10.0, pv_1=pv, bat_kwh=bat, bat_kw=bat / 2, npv=npv, pbp=pbp,
        pbp_avg=pbp, scr=0.5, ssr=0.3, invest=1000.0, savings=100.0, error=error,
    )


def test_filter_is_strict_and_skips_non_investors():
    rows = [row(1, pbp=10.0), row(2, pbp=9.99), row(3, pv=0.0, pbp=0.0), row(4, pbp=math.inf)]
    assert [r.area_bin for r in filter_by_pbp(rows, 10.0)] == [2]
    assert [r.area_bin for r in filter_by_pbp(rows, 15.0)] == [1, 2]
    with pytest.raises(ValidationError):
        filter_by_pbp(rows, 0.0)


def test_aggregate_by_hand():
    rows = [
        row(1, count=10, pv=4.0, bat=0.0, pbp=8.0, npv=100.0),
        row(2, count=30, pv=8.0, bat=4.0, pbp=12.0, npv=300.0),
        row(3, count=5, pv=0.0, bat=0.0, pbp=0.0, npv=0.0),  # does not invest
        row(4, count=7, error="solver failed"),
    ]
    (s,) = aggregate(rows).summaries
    assert (s.groups, s.failed) == (4, 1)
    assert s.customers == pytest.approx(45)
    assert s.investing_customers == pytest.approx(40)
    assert s.avg_pv_kw == pytest.approx((10 * 4 + 30 * 8) / 40)
    assert s.avg_bat_kwh == pytest.approx(30 * 4 / 40)
    assert s.avg_c_rate == pytest.approx(0.5)  # only groups with a battery
    assert s.avg_pbp == pytest.approx((10 * 8 + 30 * 12) / 40)
    assert s.cum_pv_kw == pytest.approx(280.0)
    assert s.cum_pv_band_kw[0] == pytest.approx(280.0)
    assert dict(s.cum_pv_by_threshold) == {10.0: pytest.approx(40.0), 15.0: pytest.approx(280.0)}
    assert s.potential_kw == pytest.approx(45 * 10.0)


def test_aggregate_splits_by_scenario_and_year():
    rows = [row(1, year=2020), row(1, year=2050), row(1, year=2050, scenario="SB2")]
    keys = [(s.scenario, s.region, s.year) for s in aggregate(rows).summaries]
    assert keys == [("SB2", "ZH", 2050), ("baseline", "ZH", 2020), ("baseline", "ZH", 2050)]


def test_aggregate_rejects_unknown_groups():
    g = CustomerGroup(1, 1, 2, 1, 1200.0, 60.0, 4000.0, 600.0)
    with pytest.raises(ValidationError):
        aggregate([row(1)], groups=[g])


def test_empty_aggregate():
    rep = aggregate([])
    assert rep.summaries == () and dict(rep.curves) == {}


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.1, 50.0), st.floats(0.0, 30.0), st.floats(0.0, 20.0), st.floats(1.0, 100.0)),
                min_size=1, max_size=30))
def test_pbp_curve_is_non_decreasing(items):
    rows = [row(i + 1, pbp=p, pv=pv, bat=b, count=c) for i, (p, pv, b, c) in enumerate(items)]
    curve = pbp_curve(rows)
    pbps = [c[0] for c in curve]
    assert pbps == sorted(pbps)
    for (_, pv0, b0), (_, pv1, b1) in zip(curve, curve[1:]):
        assert pv1 >= pv0 and b1 >= b0
    if curve:
        assert curve[-1][1] == pytest.approx(sum(r.customer_count * r.pv_total for r in rows if r.invests))


def _acc(rng, T=48):
    a = ResidualAccumulator(T)
    for _ in range(3):
        a.add(rng.uniform(1, 5), rng.uniform(0, 2, T), rng.uniform(0, 2, T), rng.uniform(0, 100))
    return a


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_accumulator_merge_is_associative_and_commutative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = _acc(rng), _acc(rng), _acc(rng)
    left = a.merge(b).merge(c)
    right = a.merge(b.merge(c))
    swapped = c.merge(a).merge(b)
    for x in (right, swapped):
        assert np.allclose(left.sc, x.sc) and np.allclose(left.injection, x.injection)
        assert left.savings == pytest.approx(x.savings) and left.customers == pytest.approx(x.customers)


def test_residual_load_subtracts_weighted_flows():
    T = 8760
    national = HourlySeries(np.full(T, 1000.0), "kW")
    acc = ResidualAccumulator()
    acc.add(2.0, np.full(T, 1.0), np.full(T, 3.0), 50.0)
    rep = residual_report(national, acc)
    assert np.allclose(rep.residual, 1000.0 - 2.0 - 6.0)
    assert rep.monthly_mean.shape == (12,)
    assert rep.savings == 100.0
    assert rep.required_tariff_increase == pytest.approx(100.0 / rep.total_kwh * 100)


def test_required_tariff_increase_examples():
    assert required_tariff_increase(4.2e9, 33.33e9) == pytest.approx(12.6, abs=0.05)
    with pytest.raises(ValidationError):
        required_tariff_increase(1.0, 0.0)


def test_solutions_csv_round_trip(tmp_path):
    rows = [row(1), row(2, pbp=math.inf, pv=0.0), row(3, error="boom")]
    path = tmp_path / "solutions.csv"
    assert write_solutions_csv(path, rows) == 3
    back = read_solutions_csv(path)
    assert back == rows


def test_csv_writers_are_deterministic(tmp_path):
    rows = [row(i, pbp=5.0 + i) for i in range(1, 6)]
    rep = aggregate(rows)
    for name in ("a", "b"):
        write_aggregate_csv(tmp_path / f"agg_{name}.csv", rep)
        write_curves_csv(tmp_path / f"cur_{name}.csv", rep)
    assert (tmp_path / "agg_a.csv").read_bytes() == (tmp_path / "agg_b.csv").read_bytes()
    assert (tmp_path / "cur_a.csv").read_bytes() == (tmp_path / "cur_b.csv").read_bytes()
    header = (tmp_path / "agg_a.csv").read_text().splitlines()[0]
    assert "cum_pv_pbp_lt_10_kw" in header and "cum_pv_pbp_lt_15_kw" in header


def test_residual_files(tmp_path):
    T = 8760
    national = HourlySeries(np.full(T, 10.0), "kW")
    acc = ResidualAccumulator()
    acc.add(1.0, np.ones(T), np.zeros(T), 5.0)
    reports = {"baseline_2050": residual_report(national, acc)}
    write_residual_csv(tmp_path / "r.csv", reports, national)
    write_residual_summary_csv(tmp_path / "s.csv", reports)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert len(lines) == T + 1 and lines[1] == "0,10.0,9.0"
    write_residual_week_svg(tmp_path / "w.svg", national, reports)
    write_pbp_curves_svg(tmp_path / "p.svg", aggregate([row(1)]), "baseline", "ZH")
    assert (tmp_path / "w.svg").read_text().startswith("<svg")
    assert "polyline" in (tmp_path / "p.svg").read_text()


def test_atomic_write_leaves_nothing_on_failure(tmp_path):
    target = tmp_path / "out.csv"
    with pytest.raises(RuntimeError):
        with atomic_write(target) as fh:
            fh.write("partial")
            raise RuntimeError("interrupted")
    assert list(tmp_path.iterdir()) == []
    target.write_text("old")
    with pytest.raises(RuntimeError):
        with atomic_write(target) as fh:
            fh.write("new")
            raise RuntimeError("interrupted")
    assert target.read_text() == "old"
