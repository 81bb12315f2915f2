"""Monetary side of a PV-battery system: investment, O&M, revenue, replacement, NPV.

Year convention: operating year k = 0..L-1 falls in calendar year Y + k and is
discounted by (1 + wacc)^(k + 1). Battery replacements happen in lifetime year
y' (1-based) and the residual value is credited at the end of year L.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .domain import ValidationError
from .profiles import PriceBook
from .solution import N_CATEGORIES, Dispatch, InvestmentSolution

log = logging.getLogger(__name__)

COST_ITEMS = {
    "pv_inv": "EUR/kWp",
    "pv_voc": "cent/kWh",
    "bat_inv_e": "EUR/kWh",
    "bat_inv_p": "EUR/kW",
    "bat_voc_e": "EUR/MWh",
    "bat_foc_p": "EUR/kW/yr",
}
PV_ITEMS = ("pv_inv", "pv_voc")
COST_VARIANTS = ("low", "base", "high")


@dataclass(frozen=True)
class CostSet:
    """Cost projections of one variant, linearly interpolated between table years.

    ``points`` maps (item, band) to ((year, value), ...); band is 0 for battery
    items. Values beyond the table are held flat.
    """

    variant: str
    points: Mapping[tuple[str, int], tuple[tuple[int, float], ...]]
    battery_inv_factor: float = 1.0

    def __post_init__(self):
        if self.battery_inv_factor <= 0:
            raise ValidationError("battery_inv_factor must be positive")
        for item in COST_ITEMS:
            bands = range(1, N_CATEGORIES + 1) if item in PV_ITEMS else (0,)
            for band in bands:
                pts = self.points.get((item, band))
                if not pts:
                    raise ValidationError(f"cost table {self.variant}: missing {item} band {band}")
                if any(v < 0 for _, v in pts):
                    raise ValidationError(f"cost table {self.variant}: negative {item}")

    def raw(self, item: str, year: float, band: int = 0) -> float:
        pts = self.points[(item, band)]
        years = [p[0] for p in pts]
        values = [p[1] for p in pts]
        return float(np.interp(year, years, values))

    # converted accessors (EUR based)
    def pv_inv(self, year: float, band: int) -> float:
        return self.raw("pv_inv", year, band)

    def pv_voc(self, year: float, band: int) -> float:
        """EUR per kWh generated."""
        return self.raw("pv_voc", year, band) / 100.0

    def bat_inv_e(self, year: float) -> float:
        return self.battery_inv_factor * self.raw("bat_inv_e", year)

    def bat_inv_p(self, year: float) -> float:
        return self.battery_inv_factor * self.raw("bat_inv_p", year)

    def bat_voc(self, year: float) -> float:
        """EUR per kWh discharged."""
        return self.raw("bat_voc_e", year) / 1000.0

    def bat_foc(self, year: float) -> float:
        """EUR per kW of battery power per year."""
        return self.raw("bat_foc_p", year)

    def with_battery_factor(self, factor: float) -> "CostSet":
        return replace(self, battery_inv_factor=factor)


@dataclass(frozen=True)
class CostTables:
    variants: Mapping[str, CostSet]

    def __getitem__(self, variant: str) -> CostSet:
        try:
            return self.variants[variant]
        except KeyError:
            raise ValidationError(f"no cost variant {variant!r}") from None


def read_cost_tables(path: str | Path | None = None) -> CostTables:
    """Load ``scenario,year,item,band,value,unit`` rows; defaults to the bundled table."""
    if path is None:
        path = resources.files("pvbopt") / "data" / "costs.csv"
    raw: dict[str, dict[tuple[str, int], list[tuple[int, float]]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"scenario", "year", "item", "band", "value", "unit"}
        if not need <= set(reader.fieldnames or ()):
            raise ValidationError(f"{path}:1: expected columns {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            item = row["item"].strip()
            if item not in COST_ITEMS:
                raise ValidationError(f"{path}:{lineno}: unknown item {item!r}")
            if row["unit"].strip() != COST_ITEMS[item]:
                raise ValidationError(f"{path}:{lineno}: {item} must be in {COST_ITEMS[item]}")
            try:
                year = int(row["year"])
                band = int(row["band"]) if row["band"].strip() else 0
                value = float(row["value"])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: malformed number") from None
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"{path}:{lineno}: cost must be finite and >= 0")
            raw.setdefault(row["scenario"].strip(), {}).setdefault((item, band), []).append((year, value))
    variants = {
        name: CostSet(name, {k: tuple(sorted(v)) for k, v in pts.items()}) for name, pts in raw.items()
    }
    return CostTables(variants)


@dataclass(frozen=True)
class PolicyParams:
    subsidy_fixed: float = 909.0  # EUR per system
    subsidy_rates: tuple[float, ...] = (309.0, 309.0, 309.0, 273.0, 273.0)  # EUR/kW per band
    subsidy_decay: float = 0.02
    subsidy_base_year: int = 2020
    subsidy_expiry: int = 2030
    tax_rebate: float = 0.20

    def __post_init__(self):
        if not 0 <= self.tax_rebate < 1:
            raise ValidationError("tax_rebate must lie in [0, 1)")
        if len(self.subsidy_rates) != N_CATEGORIES or min(self.subsidy_rates) < 0:
            raise ValidationError("need five non-negative subsidy rates")
        if self.subsidy_fixed < 0 or not 0 <= self.subsidy_decay < 1:
            raise ValidationError("invalid subsidy parameters")

    def subsidy_factor(self, year: int) -> float:
        if year > self.subsidy_expiry:
            return 0.0
        return (1.0 - self.subsidy_decay) ** max(0, year - self.subsidy_base_year)

    def subsidy(self, caps: Sequence[float], year: int) -> float:
        """Gross subsidy (EUR) for a system with the given per-band capacities."""
        f = self.subsidy_factor(year)
        if f == 0.0 or sum(caps) <= 0:
            return 0.0
        return f * (self.subsidy_fixed + sum(r * c for r, c in zip(self.subsidy_rates, caps)))


@dataclass(frozen=True)
class Finance:
    wacc: float = 0.04
    degradation: float = 0.005
    system_lifetime: int = 30
    battery_lifetime: int = 13

    def __post_init__(self):
        if self.wacc <= -1:
            raise ValidationError("wacc must exceed -1")
        if not 0 <= self.degradation < 1:
            raise ValidationError("degradation must lie in [0, 1)")
        if self.system_lifetime < 1 or self.battery_lifetime < 1:
            raise ValidationError("lifetimes must be >= 1")

    def discount(self, n: int | np.ndarray) -> float | np.ndarray:
        return (1.0 + self.wacc) ** (-np.asarray(n, dtype=float))

    def operating_discount(self) -> np.ndarray:
        """Discount factor of each operating year k."""
        return self.discount(np.arange(1, self.system_lifetime + 1))

    def degradation_factors(self) -> np.ndarray:
        return (1.0 - self.degradation) ** np.arange(self.system_lifetime)


@dataclass(frozen=True)
class EconResult:
    npv: float
    pbp: float
    pbp_avg: float
    scr: float
    ssr: float
    invest_pv: float
    invest_bat: float
    yearly_cashflows: tuple[float, ...]
    savings_first_year: float = 0.0  # nominal bill savings in the investment year, EUR

    def __post_init__(self):
        if not (0 <= self.scr <= 1 + 1e-9 and 0 <= self.ssr <= 1 + 1e-9):
            raise ValidationError(f"scr/ssr outside [0, 1]: {self.scr}, {self.ssr}")
        if self.pbp < 0:
            raise ValidationError("pbp must be non-negative")

    @property
    def invest(self) -> float:
        return self.invest_pv + self.invest_bat


def pv_invest_cost(caps: Sequence[float], year: int, policy: PolicyParams, costs: CostSet) -> float:
    """Net PV investment after subsidy and tax rebate (EUR)."""
    if any(c < 0 for c in caps):
        raise ValidationError("capacities must be non-negative")
    gross = sum(costs.pv_inv(year, band) * cap for band, cap in enumerate(caps, start=1))
    subsidy = policy.subsidy(caps, year)
    if subsidy > gross:
        log.warning("subsidy %.2f exceeds PV cost %.2f in %d; clamped", subsidy, gross, year)
        subsidy = gross
    return (1.0 - policy.tax_rebate) * (gross - subsidy)


def battery_invest_cost(e: float, p: float, year: float, costs: CostSet) -> float:
    if e < 0 or p < 0:
        raise ValidationError("battery capacities must be non-negative")
    return costs.bat_inv_e(year) * e + costs.bat_inv_p(year) * p


def replacement_schedule(l_sys: int, l_bat: int) -> tuple[list[int], int]:
    """Lifetime years of battery replacements and the residual life of the last battery."""
    if l_sys < 1 or l_bat < 1:
        raise ValidationError("lifetimes must be >= 1")
    n = (l_sys - 1) // l_bat
    return [l_bat * i + 1 for i in range(1, n + 1)], l_bat * (n + 1) - l_sys


def annuity_factor(wacc: float, l_bat: int) -> float:
    if wacc == 0:
        return 1.0 / l_bat
    return wacc / (1.0 - (1.0 + wacc) ** -l_bat)


def residual_value(repl_cost_last: float, wacc: float, l_bat: int, residual_lifetime: int) -> float:
    return annuity_factor(wacc, l_bat) * residual_lifetime * repl_cost_last


@dataclass(frozen=True)
class BatteryLifecycle:
    """Replacement outlays and the end-of-life residual credit (undiscounted EUR)."""

    replacements: tuple[tuple[int, float], ...]
    residual: float


def battery_lifecycle(e: float, p: float, start_year: int, finance: Finance, costs: CostSet) -> BatteryLifecycle:
    years, res_life = replacement_schedule(finance.system_lifetime, finance.battery_lifetime)
    repl = tuple((y, battery_invest_cost(e, p, start_year + y - 1, costs)) for y in years)
    last_cost = repl[-1][1] if repl else battery_invest_cost(e, p, start_year, costs)
    return BatteryLifecycle(repl, residual_value(last_cost, finance.wacc, finance.battery_lifetime, res_life))


def annual_flows(
    solution: InvestmentSolution, book: PriceBook, costs: CostSet, finance: Finance
) -> tuple[np.ndarray, np.ndarray]:
    """Per operating year: (O&M outflow, revenue inflow) in EUR, undiscounted."""
    d: Dispatch = solution.dispatch
    L = finance.system_lifetime
    if book.n_years < L:
        raise ValidationError(f"price book covers {book.n_years} years, need {L}")
    gen_by_cat = d.gen.sum(axis=1)
    dis_total = float(d.dis.sum())
    sc = d.sc
    out = np.empty(L)
    inflow = np.empty(L)
    for k in range(L):
        year = solution.start_year + k
        voc = sum(costs.pv_voc(year, p + 1) * gen_by_cat[p] for p in range(N_CATEGORIES))
        out[k] = voc + costs.bat_voc(year) * dis_total + costs.bat_foc(year) * solution.bat_p
        eur = (d.pv2g @ book.injection[k] + sc @ book.retail[k]) / 100.0
        inflow[k] = eur * (1.0 - finance.degradation) ** k
    return out, inflow


def npv(
    invest: float,
    flows: Sequence[float],
    replacements: Sequence[tuple[int, float]],
    residual: float,
    wacc: float,
    l_sys: int | None = None,
) -> float:
    """Net present value; ``flows[k]`` is the net inflow of operating year k (discounted by k+1)."""
    flows = np.asarray(flows, dtype=float)
    l_sys = len(flows) if l_sys is None else l_sys
    disc = (1.0 + wacc) ** -np.arange(1, len(flows) + 1, dtype=float)
    value = -invest + float(flows @ disc)
    value -= sum(c / (1.0 + wacc) ** y for y, c in replacements)
    value += residual / (1.0 + wacc) ** l_sys
    return value


def indicators(
    solution: InvestmentSolution, invest: float, flows: Sequence[float]
) -> tuple[float, float, float]:
    """(scr, ssr, pbp) using the first-year undiscounted net inflow for the payback."""
    d = solution.dispatch
    sc = float(d.sc.sum())
    gen = float(d.gen.sum())
    load = float(d.load.sum())
    scr = min(1.0, sc / gen) if gen > 0 else 0.0
    ssr = min(1.0, sc / load) if load > 0 else 0.0
    first = float(flows[0]) if len(flows) else 0.0
    return max(scr, 0.0), max(ssr, 0.0), payback(invest, first)


def payback(invest: float, inflow: float) -> float:
    if invest <= 0:
        return 0.0
    return invest / inflow if inflow > 0 else math.inf


def evaluate(
    solution: InvestmentSolution,
    book: PriceBook,
    costs: CostSet,
    policy: PolicyParams,
    finance: Finance,
) -> EconResult:
    """Recompute all economics of a solution year by year from its dispatch."""
    y0 = solution.start_year
    inv_pv = pv_invest_cost(solution.pv_caps, y0, policy, costs) if solution.invests else 0.0
    inv_bat = battery_invest_cost(solution.bat_e, solution.bat_p, y0, costs)
    out, inflow = annual_flows(solution, book, costs, finance)
    net = inflow - out
    life = battery_lifecycle(solution.bat_e, solution.bat_p, y0, finance, costs)
    value = npv(inv_pv + inv_bat, net, life.replacements, life.residual, finance.wacc, finance.system_lifetime)
    scr, ssr, pbp = indicators(solution, inv_pv + inv_bat, net)
    return EconResult(
        npv=value,
        pbp=pbp,
        pbp_avg=payback(inv_pv + inv_bat, float(net.mean())),
        scr=scr,
        ssr=ssr,
        invest_pv=inv_pv,
        invest_bat=inv_bat,
        yearly_cashflows=tuple(float(x) for x in net),
        savings_first_year=float(solution.dispatch.sc @ book.retail[0]) / 100.0,
    )
