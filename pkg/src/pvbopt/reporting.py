"""Regional and national roll-ups of per-group results.

Aggregation works on flat ``SolutionRow`` records so that stored solutions can
be re-aggregated without re-solving. Residual load needs hourly dispatch and is
accumulated while results stream in.
"""
from __future__ import annotations

import contextlib
import csv
import math
import os
import tempfile
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import CustomerGroup, ValidationError, region_code
from .profiles import HOURS, HourlySeries, month_of_hours
from .solution import N_CATEGORIES


@dataclass(frozen=True)
class SolutionRow:
    """One (scenario, group, year) outcome with everything aggregation needs."""

    scenario: str
    region_id: int
    irr_bin: int
    area_bin: int
    load_bin: int
    year: int
    customer_count: float
    median_area: float
    median_irradiation: float
    median_consumption: float
    total_area: float
    dep_max_kw: float
    pv_1: float = 0.0
    pv_2: float = 0.0
    pv_3: float = 0.0
    pv_4: float = 0.0
    pv_5: float = 0.0
    bat_kwh: float = 0.0
    bat_kw: float = 0.0
    npv: float = 0.0
    pbp: float = 0.0
    pbp_avg: float = 0.0
    scr: float = 0.0
    ssr: float = 0.0
    invest: float = 0.0
    savings: float = 0.0
    error: str = ""

    @property
    def key(self) -> tuple[int, int, int, int]:
        return self.region_id, self.irr_bin, self.area_bin, self.load_bin

    @property
    def pv_caps(self) -> tuple[float, ...]:
        return self.pv_1, self.pv_2, self.pv_3, self.pv_4, self.pv_5

    @property
    def pv_total(self) -> float:
        return sum(self.pv_caps)

    @property
    def c_rate(self) -> float:
        return self.bat_kw / self.bat_kwh if self.bat_kwh > 0 else math.nan

    @property
    def ok(self) -> bool:
        return not self.error

    @property
    def invests(self) -> bool:
        return self.ok and self.pv_total > 0


def row_from_result(result) -> SolutionRow:
    """Flatten a scenarios.GroupResult."""
    g: CustomerGroup = result.group
    base = dict(
        scenario=result.scenario,
        region_id=g.region_id,
        irr_bin=g.irr_bin,
        area_bin=g.area_bin,
        load_bin=g.load_bin,
        year=result.year,
        customer_count=g.customer_count,
        median_area=g.median_area,
        median_irradiation=g.median_irradiation,
        median_consumption=g.median_consumption,
        total_area=g.total_area,
        dep_max_kw=g.max_pv_kwp,
    )
    if not result.ok:
        return SolutionRow(**base, error=result.error or "failed")
    s, e = result.solution, result.econ
    caps = dict(zip(("pv_1", "pv_2", "pv_3", "pv_4", "pv_5"), s.pv_caps))
    return SolutionRow(
        **base,
        **caps,
        bat_kwh=s.bat_e,
        bat_kw=s.bat_p,
        npv=e.npv,
        pbp=e.pbp,
        pbp_avg=e.pbp_avg,
        scr=e.scr,
        ssr=e.ssr,
        invest=e.invest,
        savings=e.savings_first_year,
    )


def filter_by_pbp(rows: Iterable[SolutionRow], threshold: float) -> list[SolutionRow]:
    """Investing rows whose payback is strictly below ``threshold`` years."""
    if not threshold > 0:
        raise ValidationError("threshold must be positive")
    return [r for r in rows if r.invests and r.pbp < threshold]


def _wavg(values: Sequence[float], weights: Sequence[float]) -> float:
    w = np.asarray(weights, dtype=float)
    if len(w) == 0 or w.sum() <= 0:
        return math.nan
    return float(np.asarray(values, dtype=float) @ w / w.sum())


@dataclass(frozen=True)
class RegionYearSummary:
    scenario: str
    region: str
    year: int
    groups: int
    failed: int
    customers: float
    investing_customers: float
    avg_pv_kw: float
    avg_bat_kwh: float
    avg_bat_kw: float
    avg_c_rate: float
    avg_npv: float
    avg_pbp: float
    cum_pv_kw: float
    cum_bat_kwh: float
    cum_bat_kw: float
    potential_kw: float
    cum_pv_band_kw: tuple[float, ...]
    cum_pv_by_threshold: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class AggregateReport:
    """Per (scenario, region, year) summaries plus payback-sorted capacity curves.

    Averages use customer_count weights over investing groups only; cumulative
    figures are sums of weight x capacity.
    """

    summaries: tuple[RegionYearSummary, ...]
    curves: Mapping[tuple[str, str, int], tuple[tuple[float, float, float], ...]]

    def summary(self, scenario: str, region: str, year: int) -> RegionYearSummary:
        for s in self.summaries:
            if (s.scenario, s.region, s.year) == (scenario, region, year):
                return s
        raise KeyError((scenario, region, year))


def pbp_curve(rows: Iterable[SolutionRow]) -> tuple[tuple[float, float, float], ...]:
    """(pbp, cumulative PV kW, cumulative battery kWh) after adding groups in payback order."""
    inv = sorted((r for r in rows if r.invests and math.isfinite(r.pbp)), key=lambda r: (r.pbp, r.key))
    out, pv, bat = [], 0.0, 0.0
    for r in inv:
        pv += r.customer_count * r.pv_total
        bat += r.customer_count * r.bat_kwh
        out.append((r.pbp, pv, bat))
    return tuple(out)


def aggregate(
    rows: Iterable[SolutionRow],
    groups: Iterable[CustomerGroup] | None = None,
    thresholds: Sequence[float] = (10.0, 15.0),
) -> AggregateReport:
    rows = list(rows)
    if groups is not None:
        known = {g.key for g in groups}
        missing = sorted({r.key for r in rows} - known)
        if missing:
            raise ValidationError(f"results for unknown groups: {missing[:5]}")
    buckets: dict[tuple[str, str, int], list[SolutionRow]] = defaultdict(list)
    for r in rows:
        buckets[(r.scenario, region_code(r.region_id), r.year)].append(r)

    summaries, curves = [], {}
    for key in sorted(buckets):
        members = buckets[key]
        ok = [r for r in members if r.ok]
        inv = [r for r in ok if r.invests]
        w = [r.customer_count for r in inv]
        with_bat = [r for r in inv if r.bat_kwh > 0]
        band = tuple(sum(r.customer_count * r.pv_caps[p] for r in inv) for p in range(N_CATEGORIES))
        by_thr = tuple(
            (float(t), sum(r.customer_count * r.pv_total for r in filter_by_pbp(inv, t))) for t in thresholds
        )
        summaries.append(
            RegionYearSummary(
                scenario=key[0],
                region=key[1],
                year=key[2],
                groups=len(members),
                failed=len(members) - len(ok),
                customers=sum(r.customer_count for r in ok),
                investing_customers=sum(w),
                avg_pv_kw=_wavg([r.pv_total for r in inv], w),
                avg_bat_kwh=_wavg([r.bat_kwh for r in inv], w),
                avg_bat_kw=_wavg([r.bat_kw for r in inv], w),
                avg_c_rate=_wavg([r.c_rate for r in with_bat], [r.customer_count for r in with_bat]),
                avg_npv=_wavg([r.npv for r in inv], w),
                avg_pbp=_wavg([r.pbp for r in inv], w),
                cum_pv_kw=sum(band),
                cum_bat_kwh=sum(r.customer_count * r.bat_kwh for r in inv),
                cum_bat_kw=sum(r.customer_count * r.bat_kw for r in inv),
                potential_kw=sum(r.customer_count * r.dep_max_kw for r in ok),
                cum_pv_band_kw=band,
                cum_pv_by_threshold=by_thr,
            )
        )
        curves[key] = pbp_curve(inv)
    return AggregateReport(tuple(summaries), curves)


# --- residual load ------------------------------------------------------------


@dataclass
class ResidualAccumulator:
    """Weighted hourly self-consumption and injection; merge() is associative."""

    n_hours: int = HOURS
    sc: np.ndarray = None
    injection: np.ndarray = None
    savings: float = 0.0
    customers: float = 0.0

    def __post_init__(self):
        if self.sc is None:
            self.sc = np.zeros(self.n_hours)
        if self.injection is None:
            self.injection = np.zeros(self.n_hours)

    def add(self, weight: float, sc: np.ndarray, injection: np.ndarray, savings: float) -> None:
        self.sc += weight * np.asarray(sc, dtype=float)
        self.injection += weight * np.asarray(injection, dtype=float)
        self.savings += weight * savings
        self.customers += weight

    def add_result(self, result) -> None:
        if not result.ok or not result.solution.invests:
            return
        d = result.solution.dispatch
        self.add(result.group.customer_count, d.sc, d.pv2g, result.econ.savings_first_year)

    def merge(self, other: "ResidualAccumulator") -> "ResidualAccumulator":
        if other.n_hours != self.n_hours:
            raise ValidationError("cannot merge accumulators of different horizons")
        return ResidualAccumulator(
            self.n_hours,
            self.sc + other.sc,
            self.injection + other.injection,
            self.savings + other.savings,
            self.customers + other.customers,
        )


@dataclass(frozen=True)
class ResidualLoadReport:
    residual: np.ndarray  # kW
    monthly_mean: np.ndarray  # kW, 12 values
    savings: float  # EUR, nominal for the examined year
    required_tariff_increase: float  # cent/kWh

    @property
    def total_kwh(self) -> float:
        return float(self.residual.sum())


def residual_report(national_load: HourlySeries, acc: ResidualAccumulator) -> ResidualLoadReport:
    if national_load.unit != "kW":
        raise ValidationError(f"national load must be in kW, got {national_load.unit}")
    if len(national_load) != acc.n_hours:
        raise ValidationError("national load and accumulator horizons differ")
    residual = national_load.values - acc.sc - acc.injection
    months = month_of_hours(acc.n_hours)
    monthly = np.array([residual[months == m].mean() if np.any(months == m) else math.nan for m in range(12)])
    total = float(residual.sum())
    increase = required_tariff_increase(acc.savings, total) if total > 0 else math.nan
    return ResidualLoadReport(residual, monthly, acc.savings, increase)


def residual_load(national_load: HourlySeries, results: Iterable, groups: Iterable[CustomerGroup] | None = None) -> ResidualLoadReport:
    """National load minus weighted self-consumption and weighted injection, hour by hour."""
    acc = ResidualAccumulator(len(national_load))
    known = None if groups is None else {g.key for g in groups}
    for r in results:
        if known is not None and r.group.key not in known:
            raise ValidationError(f"result for unknown group {r.group.key}")
        acc.add_result(r)
    return residual_report(national_load, acc)


def required_tariff_increase(savings: float, residual: ResidualLoadReport | float) -> float:
    """Retail surcharge (cent/kWh) that recovers ``savings`` (EUR) from the residual energy (kWh)."""
    total = residual.total_kwh if isinstance(residual, ResidualLoadReport) else float(residual)
    if not total > 0:
        raise ValidationError("residual energy must be positive")
    return savings / total * 100.0


# --- output files -------------------------------------------------------------


@contextlib.contextmanager
def atomic_write(path: str | Path, mode: str = "w"):
    """Write to a temporary sibling and rename on success, so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None, **({} if "b" in mode else {"encoding": "utf-8"})) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


_ROW_FIELDS = [f.name for f in fields(SolutionRow)]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) or math.isnan(v) else ("inf" if v > 0 else "-inf")
    return str(v)


def write_solutions_csv(path: str | Path, rows: Iterable[SolutionRow]) -> int:
    n = 0
    with atomic_write(path) as fh:
        w = csv.writer(fh)
        w.writerow(_ROW_FIELDS + ["pv_total", "c_rate"])
        for r in rows:
            d = asdict(r)
            w.writerow([_fmt(d[k]) for k in _ROW_FIELDS] + [_fmt(r.pv_total), _fmt(r.c_rate)])
            n += 1
    return n


def read_solutions_csv(path: str | Path) -> list[SolutionRow]:
    types = {f.name: f.type for f in fields(SolutionRow)}
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(_ROW_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        for lineno, raw in enumerate(reader, start=2):
            kw = {}
            try:
                for k in _ROW_FIELDS:
                    t = types[k]
                    if t == "int":
                        kw[k] = int(raw[k])
                    elif t == "float":
                        kw[k] = float(raw[k])
                    else:
                        kw[k] = raw[k]
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: malformed value") from None
            out.append(SolutionRow(**kw))
    return out


def write_aggregate_csv(path: str | Path, report: AggregateReport) -> None:
    thresholds = sorted({t for s in report.summaries for t, _ in s.cum_pv_by_threshold})
    scalar = [
        "scenario", "region", "year", "groups", "failed", "customers", "investing_customers",
        "avg_pv_kw", "avg_bat_kwh", "avg_bat_kw", "avg_c_rate", "avg_npv", "avg_pbp",
        "cum_pv_kw", "cum_bat_kwh", "cum_bat_kw", "potential_kw",
    ]
    with atomic_write(path) as fh:
        w = csv.writer(fh)
        w.writerow(scalar + [f"cum_pv_band{p}_kw" for p in range(1, N_CATEGORIES + 1)]
                   + [f"cum_pv_pbp_lt_{t:g}_kw" for t in thresholds])
        for s in report.summaries:
            d = dict(s.cum_pv_by_threshold)
            w.writerow([_fmt(getattr(s, k)) for k in scalar] + [_fmt(v) for v in s.cum_pv_band_kw]
                       + [_fmt(d.get(t, math.nan)) for t in thresholds])


def write_curves_csv(path: str | Path, report: AggregateReport) -> None:
    with atomic_write(path) as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "region", "year", "pbp", "cum_pv_kw", "cum_bat_kwh"])
        for key in sorted(report.curves):
            for pbp, pv, bat in report.curves[key]:
                w.writerow([*key, _fmt(pbp), _fmt(pv), _fmt(bat)])


def write_residual_csv(path: str | Path, reports: Mapping[str, ResidualLoadReport], national: HourlySeries) -> None:
    """One row per hour; one residual column per (year, case) label."""
    labels = sorted(reports)
    with atomic_write(path) as fh:
        w = csv.writer(fh)
        w.writerow(["hour", "national_kw"] + [f"residual_kw_{k}" for k in labels])
        cols = [reports[k].residual for k in labels]
        for h in range(len(national)):
            w.writerow([h, _fmt(float(national.values[h]))] + [_fmt(float(c[h])) for c in cols])


def write_residual_summary_csv(path: str | Path, reports: Mapping[str, ResidualLoadReport]) -> None:
    with atomic_write(path) as fh:
        w = csv.writer(fh)
        w.writerow(["case", "savings_eur", "residual_kwh", "required_tariff_increase_cent_per_kwh"]
                   + [f"mean_kw_m{m + 1:02d}" for m in range(12)])
        for k in sorted(reports):
            r = reports[k]
            w.writerow([k, _fmt(r.savings), _fmt(r.total_kwh), _fmt(r.required_tariff_increase)]
                       + [_fmt(float(v)) for v in r.monthly_mean])


# --- optional SVG plots ---------------------------------------------------------


def _svg_lines(series: Mapping[str, Sequence[tuple[float, float]]], title: str, xlabel: str, ylabel: str,
               width: int = 640, height: int = 400, step: bool = False) -> str:
    pad = 50
    pts = [p for s in series.values() for p in s]
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    x0, x1 = min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1
    y0, y1 = min(0.0, min(ys)), max(ys) if max(ys) > min(0.0, min(ys)) else 1.0
    sx = lambda x: pad + (x - x0) / (x1 - x0) * (width - 2 * pad)
    sy = lambda y: height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)
    palette = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
           f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle">{xlabel}</text>',
           f'<text x="14" y="{height / 2}" transform="rotate(-90 14 {height / 2})" text-anchor="middle">{ylabel}</text>',
           f'<text x="{pad}" y="{height - pad + 14}" text-anchor="middle">{x0:.3g}</text>',
           f'<text x="{width - pad}" y="{height - pad + 14}" text-anchor="middle">{x1:.3g}</text>',
           f'<text x="{pad - 4}" y="{pad}" text-anchor="end">{y1:.3g}</text>']
    for i, (name, s) in enumerate(series.items()):
        color = palette[i % len(palette)]
        coords = []
        prev_y = None
        for x, y in s:
            if step and prev_y is not None:
                coords.append(f"{sx(x):.1f},{sy(prev_y):.1f}")
            coords.append(f"{sx(x):.1f},{sy(y):.1f}")
            prev_y = y
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(coords)}"/>')
        out.append(f'<text x="{width - pad + 4}" y="{pad + 14 * i}" fill="{color}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out)


def write_pbp_curves_svg(path: str | Path, report: AggregateReport, scenario: str, region: str) -> None:
    series = {str(k[2]): [(p, pv / 1e3) for p, pv, _ in c] for k, c in sorted(report.curves.items())
              if k[0] == scenario and k[1] == region}
    with atomic_write(path) as fh:
        fh.write(_svg_lines(series, f"{scenario} {region}: PV capacity by payback", "payback (years)", "cumulative PV (MW)", step=True))


def write_residual_week_svg(path: str | Path, national: HourlySeries, reports: Mapping[str, ResidualLoadReport],
                            first_hour: int = 24 * 180) -> None:
    span = range(first_hour, min(first_hour + 168, len(national)))
    series = {"national": [(h - first_hour, national.values[h] / 1e3) for h in span]}
    for k in sorted(reports):
        series[k] = [(h - first_hour, reports[k].residual[h] / 1e3) for h in span]
    with atomic_write(path) as fh:
        fh.write(_svg_lines(series, "Residual load, one week", "hour", "MW"))
