"""Scenario definitions, price-path generation and batch execution."""
from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import yaml

from .domain import CANTONS, CustomerGroup, ValidationError, region_index
from .economics import CostSet, CostTables, EconResult, Finance, PolicyParams, evaluate
from .optimizer import HighsSolver, ProblemInstance, SolverFailure, solve_group
from .profiles import (
    HOURS,
    HourlySeries,
    PriceBook,
    RetailTariffTable,
    TariffCalendar,
    read_retail_tariffs,
    read_series_csv,
    scale_irradiance,
    scale_load,
)
from .solution import InvestmentSolution

log = logging.getLogger(__name__)

INJECTION_MODES = ("dso_floor", "hourly_wholesale", "zero")
BATTERY_MODES = ("normal", "tesla_calibrated", "disabled")
LOAD_SOURCES = ("individual", "aggregate")
TABLE_YEARS = tuple(range(2020, 2051, 5))
BASE_YEAR = 2020
DEFAULT_WHOLESALE_AVG_2020 = 5.224  # cent/kWh


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    cost_variant: str = "base"
    load_source: str = "individual"
    retail_growth: float = 0.01
    wholesale_growth: float = 0.015
    injection_mode: str = "dso_floor"
    battery_mode: str = "normal"
    wacc: float = 0.04
    description: str = ""
    injection_decay: float = 0.10
    # reference home battery used to calibrate battery costs in tesla_calibrated mode
    ref_battery_kwh: float = 13.5
    ref_battery_kw: float = 3.6
    ref_battery_cost: float = 13364.0
    ref_battery_year: int = 2020

    def __post_init__(self):
        if self.cost_variant not in ("low", "base", "high"):
            raise ValidationError(f"{self.id}: unknown cost_variant {self.cost_variant!r}")
        if self.load_source not in LOAD_SOURCES:
            raise ValidationError(f"{self.id}: unknown load_source {self.load_source!r}")
        if self.injection_mode not in INJECTION_MODES:
            raise ValidationError(f"{self.id}: unknown injection_mode {self.injection_mode!r}")
        if self.battery_mode not in BATTERY_MODES:
            raise ValidationError(f"{self.id}: unknown battery_mode {self.battery_mode!r}")
        if self.retail_growth <= -1 or self.wholesale_growth <= -1 or self.wacc <= -1:
            raise ValidationError(f"{self.id}: rates must exceed -1")
        if not 0 <= self.injection_decay < 1:
            raise ValidationError(f"{self.id}: injection_decay must lie in [0, 1)")

    def costs(self, tables: CostTables) -> CostSet:
        base = tables[self.cost_variant]
        if self.battery_mode != "tesla_calibrated":
            return base
        y = self.ref_battery_year
        ref = self.ref_battery_kwh * base.bat_inv_e(y) + self.ref_battery_kw * base.bat_inv_p(y)
        return base.with_battery_factor(self.ref_battery_cost / ref)

    @property
    def battery_allowed(self) -> bool:
        return self.battery_mode != "disabled"


_SPEC_KEYS = {f.name for f in fields(ScenarioSpec)} - {"id"}


def parse_scenarios(doc: Mapping) -> dict[str, ScenarioSpec]:
    defaults = dict(doc.get("defaults") or {})
    out = {}
    for sid, body in (doc.get("scenarios") or {}).items():
        merged = {**defaults, **(body or {})}
        unknown = set(merged) - _SPEC_KEYS
        if unknown:
            raise ValidationError(f"scenario {sid}: unknown keys {sorted(unknown)}")
        out[str(sid)] = ScenarioSpec(id=str(sid), **merged)
    return out


def load_scenarios(path: str | Path | None = None) -> dict[str, ScenarioSpec]:
    """Read a scenario file; defaults to the bundled canonical set."""
    if path is None:
        path = resources.files("pvbopt") / "data" / "scenarios.yaml"
    with open(path, encoding="utf-8") as fh:
        return parse_scenarios(yaml.safe_load(fh))


def get_scenario(sid: str, path: str | Path | None = None) -> ScenarioSpec:
    specs = load_scenarios(path)
    for key, spec in specs.items():
        if key.lower() == sid.lower():
            return spec
    raise ValidationError(f"unknown scenario {sid!r}; known: {', '.join(specs)}")


# --- injection tariffs ------------------------------------------------------


@dataclass(frozen=True)
class InjectionTable:
    """Published regional injection tariffs (cent/kWh) by table year."""

    years: tuple[int, ...]
    values: Mapping[str, tuple[float, ...]]

    def base(self, region: str | int) -> float:
        return self.value(region, BASE_YEAR)

    def value(self, region: str | int, year: int) -> float:
        code = CANTONS[region_index(region) - 1]
        if code not in self.values:
            raise ValidationError(f"no injection tariff for region {code}")
        return self.values[code][self.years.index(year)]


def read_injection_table(path: str | Path | None = None) -> InjectionTable:
    if path is None:
        path = resources.files("pvbopt") / "data" / "injection_tariff.csv"
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["index", "canton"]:
            raise ValidationError(f"{path}:1: expected 'index,canton,<years>'")
        years = tuple(int(y) for y in header[2:])
        if BASE_YEAR not in years:
            raise ValidationError(f"{path}:1: missing {BASE_YEAR} column")
        values = {}
        for lineno, row in enumerate(reader, start=2):
            code = row[1].strip().upper()
            if code not in CANTONS or int(row[0]) != CANTONS.index(code) + 1:
                raise ValidationError(f"{path}:{lineno}: bad canton/index {row[:2]}")
            try:
                vals = tuple(float(v) for v in row[2:])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-numeric tariff") from None
            if len(vals) != len(years) or min(vals) < 0:
                raise ValidationError(f"{path}:{lineno}: need {len(years)} non-negative values")
            values[code] = vals
    return InjectionTable(years, values)


def wholesale_average(year: int, spec: ScenarioSpec, wholesale_avg_2020: float) -> float:
    """Annual average wholesale price (cent/kWh) on the scenario's growth path."""
    return wholesale_avg_2020 * (1.0 + spec.wholesale_growth) ** (year - BASE_YEAR)


def injection_tariff(
    region: str | int,
    year: int,
    spec: ScenarioSpec,
    wholesale_avg_2020: float = DEFAULT_WHOLESALE_AVG_2020,
    table: InjectionTable | None = None,
) -> float | None:
    """Effective injection remuneration (cent/kWh).

    Returns None in hourly_wholesale mode, meaning revenue uses the hourly
    wholesale series instead of a flat tariff.
    """
    if year < BASE_YEAR:
        raise ValidationError(f"year {year} precedes {BASE_YEAR}")
    table = table or read_injection_table()
    base = table.base(region)
    if spec.injection_mode == "zero":
        return 0.0
    if spec.injection_mode == "hourly_wholesale":
        return None
    decayed = base * (1.0 - spec.injection_decay) ** (year - BASE_YEAR)
    return max(decayed, wholesale_average(year, spec, wholesale_avg_2020))


@dataclass(frozen=True)
class InjectionPath:
    region: str
    base: float
    tariffs: Mapping[int, float]


def injection_path(
    region: str | int,
    spec: ScenarioSpec,
    years: Iterable[int] = TABLE_YEARS,
    wholesale_avg_2020: float = DEFAULT_WHOLESALE_AVG_2020,
    table: InjectionTable | None = None,
) -> InjectionPath:
    table = table or read_injection_table()
    code = CANTONS[region_index(region) - 1]
    tariffs = {y: injection_tariff(code, y, spec, wholesale_avg_2020, table) for y in years}
    return InjectionPath(code, table.base(code), tariffs)


# --- input data bundle ------------------------------------------------------


@dataclass(frozen=True)
class ScenarioData:
    """Everything needed to build problem instances besides the scenario itself."""

    retail: RetailTariffTable
    injection: InjectionTable
    wholesale: HourlySeries  # EUR/MWh, base year
    load_profiles: Mapping[int, HourlySeries]  # per load bin, kW shape
    irradiance: Mapping[str, HourlySeries]  # per canton, kWh/m2 shape
    aggregate_load: Mapping[str, HourlySeries] = field(default_factory=dict)
    national_load: HourlySeries | None = None
    start_weekday: int = 0
    wholesale_avg_2020: float = DEFAULT_WHOLESALE_AVG_2020

    def load_shape(self, spec: ScenarioSpec, group: CustomerGroup) -> HourlySeries:
        if spec.load_source == "aggregate":
            code = CANTONS[group.region_id - 1]
            if code not in self.aggregate_load:
                raise ValidationError(f"no aggregate load profile for {code}")
            return self.aggregate_load[code]
        if group.load_bin not in self.load_profiles:
            raise ValidationError(f"no load profile for L{group.load_bin}")
        return self.load_profiles[group.load_bin]

    def irradiance_shape(self, group: CustomerGroup) -> HourlySeries:
        code = CANTONS[group.region_id - 1]
        if code not in self.irradiance:
            raise ValidationError(f"no irradiance profile for {code}")
        return self.irradiance[code]


def _read_profile_dir(path: Path, unit: str, keys: Iterable[str]) -> dict[str, HourlySeries]:
    out = {}
    for key in keys:
        f = path / f"{key}.csv"
        if f.exists():
            out[key] = read_series_csv(f, unit)
    return out


def load_dataset(
    root: str | Path,
    retail_path: str | Path | None = None,
    injection_path_: str | Path | None = None,
    start_weekday: int = 0,
    wholesale_avg_2020: float = DEFAULT_WHOLESALE_AVG_2020,
) -> ScenarioData:
    """Load the profile directory layout used by the CLI.

    ``root`` holds ``wholesale.csv``, optionally ``national_load.csv``, and the
    folders ``load_profiles/L<i>.csv``, ``irradiance/<canton>.csv`` and
    ``aggregate_load/<canton>.csv``.
    """
    root = Path(root)
    retail = read_retail_tariffs(retail_path or resources.files("pvbopt") / "data" / "retail_tariff.csv")
    inj = read_injection_table(injection_path_)
    wholesale = read_series_csv(root / "wholesale.csv", "EUR/MWh", allow_negative=True)
    loads = {int(k[1:]): v for k, v in _read_profile_dir(root / "load_profiles", "kW", [f"L{i}" for i in range(1, 12)]).items()}
    irr = _read_profile_dir(root / "irradiance", "kWh/m2", CANTONS)
    agg = _read_profile_dir(root / "aggregate_load", "kW", CANTONS)
    nat = root / "national_load.csv"
    national = read_series_csv(nat, "kW") if nat.exists() else None
    return ScenarioData(retail, inj, wholesale, loads, irr, agg, national, start_weekday, wholesale_avg_2020)


def default_dataset_dir() -> Path:
    env = os.environ.get("PVBOPT_DATA")
    if env:
        return Path(env)
    return Path(str(resources.files("pvbopt") / "data" / "synthetic_zh"))


# --- price books and instances ----------------------------------------------


def scenario_price_book(
    spec: ScenarioSpec,
    region: str | int,
    load_bin: int,
    start_year: int,
    data: ScenarioData,
    n_years: int = 30,
) -> PriceBook:
    """Hourly prices for every operating year of a system built in ``start_year``."""
    base = data.retail.base(region, load_bin)
    factors = TariffCalendar(base, start_weekday=data.start_weekday).factors(HOURS)
    offsets = start_year - BASE_YEAR + np.arange(n_years)
    retail = base * factors[None, :] * ((1.0 + spec.retail_growth) ** offsets)[:, None]
    wholesale = data.wholesale.values[None, :] * ((1.0 + spec.wholesale_growth) ** offsets)[:, None]
    if spec.injection_mode == "hourly_wholesale":
        injection = wholesale / 10.0  # EUR/MWh -> cent/kWh
    else:
        table = data.injection
        tariffs = [injection_tariff(region, start_year + k, spec, data.wholesale_avg_2020, table) for k in range(n_years)]
        injection = np.repeat(np.array(tariffs, dtype=float)[:, None], HOURS, axis=1)
    return PriceBook(start_year, retail, injection, wholesale, spec.injection_mode == "hourly_wholesale")


def build_instance(
    spec: ScenarioSpec,
    group: CustomerGroup,
    year: int,
    data: ScenarioData,
    costs: CostSet,
    policy: PolicyParams = PolicyParams(),
    finance: Finance | None = None,
) -> ProblemInstance:
    finance = finance or Finance(wacc=spec.wacc)
    load = scale_load(data.load_shape(spec, group), group.median_consumption)
    irr = scale_irradiance(data.irradiance_shape(group), group.median_irradiation)
    book = scenario_price_book(spec, group.region_id, group.load_bin, year, data, finance.system_lifetime)
    return ProblemInstance(
        group=group,
        load=load,
        irradiance=irr,
        book=book,
        costs=costs,
        policy=policy,
        finance=finance,
        battery_allowed=spec.battery_allowed,
    )


@dataclass(frozen=True)
class GroupResult:
    scenario: str
    group: CustomerGroup
    year: int
    solution: InvestmentSolution | None
    econ: EconResult | None
    error: str | None = None
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None


def _solve_group_years(
    spec: ScenarioSpec,
    group: CustomerGroup,
    years: Sequence[int],
    data: ScenarioData,
    costs: CostSet,
    policy: PolicyParams,
    exhaustive: bool = False,
    dump_dir: str | Path | None = None,
) -> list[GroupResult]:
    # one solver per group: all years share the constraint matrix, so later years warm-start
    solver = HighsSolver()
    out = []
    for year in years:
        t0 = time.perf_counter()
        try:
            inst = build_instance(spec, group, year, data, costs, policy)
            sol = solve_group(inst, exhaustive=exhaustive, solver=solver, dump_dir=dump_dir)
            econ = evaluate(sol, inst.book, inst.costs, inst.policy, inst.finance)
            out.append(GroupResult(spec.id, group, year, sol, econ, None, time.perf_counter() - t0))
        except (SolverFailure, ValidationError, ArithmeticError) as exc:
            log.error("%s %s %d failed: %s", spec.id, group.label, year, exc)
            out.append(GroupResult(spec.id, group, year, None, None, str(exc), time.perf_counter() - t0))
    return out


_WORKER: dict = {}


def _init_worker(spec, data, costs, policy, exhaustive, dump_dir):
    _WORKER.update(spec=spec, data=data, costs=costs, policy=policy, exhaustive=exhaustive, dump_dir=dump_dir)


def _worker_task(args):
    group, years = args
    w = _WORKER
    return _solve_group_years(w["spec"], group, years, w["data"], w["costs"], w["policy"], w["exhaustive"], w["dump_dir"])


def run_scenario(
    spec: ScenarioSpec,
    groups: Sequence[CustomerGroup],
    years: Sequence[int],
    data: ScenarioData,
    tables: CostTables,
    policy: PolicyParams = PolicyParams(),
    jobs: int = 1,
    exhaustive: bool = False,
    dump_dir: str | Path | None = None,
) -> Iterator[GroupResult]:
    """Greenfield solve of every (group, year); yields results group by group.

    Failures are reported as results with ``error`` set and never abort the batch.
    Output order is deterministic regardless of ``jobs``.
    """
    years = sorted(set(years))
    for y in years:
        if y < BASE_YEAR:
            raise ValidationError(f"year {y} precedes {BASE_YEAR}")
    costs = spec.costs(tables)
    ordered = sorted(groups, key=lambda g: g.key)
    if not ordered or not years:
        return
    if jobs <= 1:
        for g in ordered:
            yield from _solve_group_years(spec, g, years, data, costs, policy, exhaustive, dump_dir)
        return
    with ProcessPoolExecutor(
        max_workers=jobs, initializer=_init_worker, initargs=(spec, data, costs, policy, exhaustive, dump_dir)
    ) as pool:
        for batch in pool.map(_worker_task, [(g, years) for g in ordered], chunksize=1):
            yield from batch


def sb1_battery_factor(tables: CostTables, spec: ScenarioSpec | None = None) -> float:
    spec = spec or get_scenario("SB1")
    return spec.costs(tables).battery_inv_factor
