"""Hourly series for one customer group: load, irradiance, PV ceiling, tariffs, prices.

The modelled year has exactly 365 days (8760 hours), no leap day and no DST.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .domain import CANTONS, ValidationError, region_index

HOURS = 8760
UNITS = ("kW", "kWh/m2", "cent/kWh", "EUR/MWh")
NONNEGATIVE_UNITS = ("kW", "kWh/m2")
MONTH_DAYS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HourlySeries:
    """A year of hourly values. ``reduced=True`` permits short horizons in tests."""

    values: np.ndarray
    unit: str
    reduced: bool = False

    def __post_init__(self):
        arr = _frozen_array(self.values)
        object.__setattr__(self, "values", arr)
        if self.unit not in UNITS:
            raise ValidationError(f"unknown unit {self.unit!r}")
        if arr.ndim != 1:
            raise ValidationError("series must be one-dimensional")
        if self.reduced:
            if len(arr) == 0:
                raise ValidationError("series is empty")
        elif len(arr) != HOURS:
            raise ValidationError(f"series has {len(arr)} values, expected {HOURS}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("series contains non-finite values")
        if self.unit in NONNEGATIVE_UNITS and np.any(arr < 0):
            raise ValidationError(f"{self.unit} series has negative values")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def scaled(self, factor: float) -> "HourlySeries":
        return HourlySeries(self.values * factor, self.unit, self.reduced)


def weekday_of_hours(n_hours: int = HOURS, start_weekday: int = 0) -> np.ndarray:
    """Weekday (0=Monday) for every hour of the year."""
    return (np.arange(n_hours) // 24 + start_weekday) % 7


def month_of_hours(n_hours: int = HOURS) -> np.ndarray:
    """Month index 0..11 of each hour on the no-leap calendar."""
    months = np.repeat(np.arange(12), np.array(MONTH_DAYS) * 24)
    if n_hours > len(months):
        raise ValidationError("month calendar covers at most 8760 hours")
    return months[:n_hours]


@dataclass(frozen=True)
class TariffCalendar:
    """Two-level time-of-use retail tariff."""

    base_tariff: float  # cent/kWh
    low_factor: float = 0.71
    high_factor: float = 1.07
    start_weekday: int = 0
    peak_start_hour: int = 6
    peak_end_hour: int = 22  # exclusive
    peak_weekdays: tuple[int, ...] = (0, 1, 2, 3, 4, 5)

    def __post_init__(self):
        if not self.low_factor < 1 < self.high_factor:
            raise ValidationError("need low_factor < 1 < high_factor")
        if self.base_tariff < 0:
            raise ValidationError("base_tariff must be non-negative")
        if not 0 <= self.start_weekday <= 6:
            raise ValidationError("start_weekday must be in 0..6")
        if not 0 <= self.peak_start_hour < self.peak_end_hour <= 24:
            raise ValidationError("invalid peak window")

    def peak_mask(self, n_hours: int = HOURS) -> np.ndarray:
        hour_of_day = np.arange(n_hours) % 24
        weekday = weekday_of_hours(n_hours, self.start_weekday)
        in_window = (hour_of_day >= self.peak_start_hour) & (hour_of_day < self.peak_end_hour)
        return in_window & np.isin(weekday, self.peak_weekdays)

    def factors(self, n_hours: int = HOURS) -> np.ndarray:
        return np.where(self.peak_mask(n_hours), self.high_factor, self.low_factor)


def parse_weekday(value: str | int) -> int:
    if isinstance(value, int):
        day = value
    else:
        v = value.strip().lower()
        day = int(v) if v.isdigit() else WEEKDAYS.index(v[:3]) if v[:3] in WEEKDAYS else -1
    if not 0 <= day <= 6:
        raise ValidationError(f"bad weekday {value!r}")
    return day


def retail_series(
    calendar: TariffCalendar, year_offset: int, growth: float, n_hours: int = HOURS
) -> HourlySeries:
    """Hourly retail tariff in cent/kWh for the given offset from the base year."""
    if growth <= -1:
        raise ValidationError("growth must exceed -1")
    values = calendar.base_tariff * calendar.factors(n_hours) * (1.0 + growth) ** year_offset
    return HourlySeries(values, "cent/kWh", reduced=n_hours != HOURS)


def scale_load(profile: HourlySeries, target_annual: float) -> HourlySeries:
    """Rescale a kW profile so its 1-hour-step energy equals ``target_annual`` kWh."""
    if target_annual < 0:
        raise ValidationError("target_annual must be non-negative")
    total = profile.total
    if total <= 0:
        raise ValidationError("cannot scale a profile with zero sum")
    return profile.scaled(target_annual / total)


def scale_irradiance(profile: HourlySeries, annual_irradiation: float) -> HourlySeries:
    """Rescale a regional irradiance shape to the group's annual kWh/m2."""
    if annual_irradiation < 0:
        raise ValidationError("annual_irradiation must be non-negative")
    total = profile.total
    if total <= 0:
        raise ValidationError("irradiance profile has zero sum")
    return HourlySeries(profile.values * (annual_irradiation / total), "kWh/m2", profile.reduced)


@dataclass(frozen=True)
class PVTechnology:
    area_per_kwp: float = 6.0  # m2/kWp
    eta_module: float = 0.17
    eta_inverter: float = 0.98
    performance_ratio: float = 0.80

    def __post_init__(self):
        if self.area_per_kwp <= 0:
            raise ValidationError("area_per_kwp must be positive")
        for name in ("eta_module", "eta_inverter", "performance_ratio"):
            if not 0 < getattr(self, name) <= 1:
                raise ValidationError(f"{name} must lie in (0, 1]")

    @property
    def kw_per_kwp_per_irradiance(self) -> float:
        """Output (kW) of 1 kWp under 1 kW/m2."""
        return self.area_per_kwp * self.eta_module * self.eta_inverter * self.performance_ratio


def pv_ceiling(
    cap_kwp_by_category: Mapping[int, float], irradiance: HourlySeries, params: PVTechnology = PVTechnology()
) -> dict[int, HourlySeries]:
    """Maximum PV output (kW) per category; actual generation may be curtailed below it."""
    if np.any(irradiance.values < 0):
        raise ValidationError("irradiance must be non-negative")
    out = {}
    for cat, cap in cap_kwp_by_category.items():
        if cap < 0:
            raise ValidationError(f"negative capacity for category {cat}")
        out[cat] = HourlySeries(cap * params.kw_per_kwp_per_irradiance * irradiance.values, "kW", irradiance.reduced)
    return out


@dataclass(frozen=True)
class PriceBook:
    """Prices for each operating year k = 0..L-1 (calendar year start_year + k).

    Arrays have shape (years, hours). Retail and injection are in cent/kWh,
    wholesale in EUR/MWh.
    """

    start_year: int
    retail: np.ndarray
    injection: np.ndarray
    wholesale: np.ndarray
    injection_is_wholesale: bool = False

    def __post_init__(self):
        shapes = set()
        for name in ("retail", "injection", "wholesale"):
            arr = _frozen_array(getattr(self, name))
            if arr.ndim != 2:
                raise ValidationError(f"{name} must be (years, hours)")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
            shapes.add(arr.shape)
        if len(shapes) != 1:
            raise ValidationError(f"price arrays disagree in shape: {sorted(shapes)}")

    @property
    def n_years(self) -> int:
        return self.retail.shape[0]

    @property
    def n_hours(self) -> int:
        return self.retail.shape[1]

    def year(self, k: int) -> dict[str, HourlySeries]:
        reduced = self.n_hours != HOURS
        return {
            "retail": HourlySeries(self.retail[k], "cent/kWh", reduced),
            "injection": HourlySeries(self.injection[k], "cent/kWh", reduced),
            "wholesale": HourlySeries(self.wholesale[k], "EUR/MWh", reduced),
        }

    def truncated(self, n_hours: int) -> "PriceBook":
        return PriceBook(
            self.start_year,
            self.retail[:, :n_hours],
            self.injection[:, :n_hours],
            self.wholesale[:, :n_hours],
            self.injection_is_wholesale,
        )


def constant_price_book(
    retail: float, injection: float, n_years: int = 30, n_hours: int = HOURS, start_year: int = 2020
) -> PriceBook:
    """Flat prices (cent/kWh) for every hour and year; handy for constructed cases."""
    shape = (n_years, n_hours)
    return PriceBook(start_year, np.full(shape, retail), np.full(shape, injection), np.full(shape, injection * 10.0))


# --- CSV readers -----------------------------------------------------------


def read_series_csv(path: str | Path, unit: str, allow_negative: bool = False) -> HourlySeries:
    """Read an 8760-row ``hour,value`` CSV with file/line diagnostics."""
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["hour", "value"]:
            raise ValidationError(f"{path}:1: expected header 'hour,value'")
        for lineno, row in enumerate(reader, start=2):
            try:
                hour, value = int(row[0]), float(row[1])
            except (ValueError, IndexError):
                raise ValidationError(f"{path}:{lineno}: malformed row {row!r}") from None
            if hour != len(values):
                raise ValidationError(f"{path}:{lineno}: hour {hour} out of sequence")
            if not np.isfinite(value):
                raise ValidationError(f"{path}:{lineno}: non-finite value")
            if value < 0 and not allow_negative:
                raise ValidationError(f"{path}:{lineno}: negative value {value}")
            values.append(value)
    if len(values) != HOURS:
        raise ValidationError(f"{path}: {len(values)} rows, expected {HOURS}")
    return HourlySeries(np.array(values), unit)


def write_series_csv(path: str | Path, series: HourlySeries | np.ndarray, fmt: str = "{:.6g}") -> None:
    values = series.values if isinstance(series, HourlySeries) else np.asarray(series)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("hour,value\n")
        for h, v in enumerate(values):
            fh.write(f"{h},{fmt.format(v)}\n")


@dataclass(frozen=True)
class RetailTariffTable:
    """Base retail tariffs in cent/kWh indexed by (region, load bin)."""

    table: dict[str, tuple[float, ...]] = field(default_factory=dict)

    def base(self, region: str | int, load_bin: int) -> float:
        code = CANTONS[region_index(region) - 1]
        if code not in self.table:
            raise ValidationError(f"no retail tariff for region {code}")
        row = self.table[code]
        if not 1 <= load_bin <= len(row):
            raise ValidationError(f"load bin {load_bin} outside 1..{len(row)}")
        return row[load_bin - 1]


def read_retail_tariffs(path: str | Path) -> RetailTariffTable:
    table: dict[str, tuple[float, ...]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = ["canton"] + [f"L{i}" for i in range(1, 12)]
        if [h.strip() for h in header] != expected:
            raise ValidationError(f"{path}:1: expected header {','.join(expected)}")
        for lineno, row in enumerate(reader, start=2):
            code = row[0].strip().upper()
            if code not in CANTONS:
                raise ValidationError(f"{path}:{lineno}: unknown canton {code!r}")
            try:
                vals = tuple(float(v) for v in row[1:])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-numeric tariff") from None
            if len(vals) != 11 or any(v < 0 or not np.isfinite(v) for v in vals):
                raise ValidationError(f"{path}:{lineno}: need 11 non-negative tariffs")
            table[code] = vals
    return RetailTariffTable(table)
