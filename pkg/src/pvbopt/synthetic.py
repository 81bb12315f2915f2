"""Deterministic synthetic fixtures standing in for measured inputs.

None of these series are measured data. They are shaped to look plausible
for a Swiss midland canton: winter-peaking demand, two-peak household load,
daytime commercial load, latitude-correct clear-sky irradiance with random
day-to-day cloudiness, and a wholesale price with morning and evening peaks.
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .domain import DEFAULT_SCHEME, RooftopRecord, write_rooftops
from .profiles import HOURS, write_series_csv

LATITUDE = 47.4
DAYS = HOURS // 24
WHOLESALE_MEAN = 52.24  # EUR/MWh
WHOLESALE_MAX = 161.4


def _calendar(start_weekday: int = 0):
    hour = np.arange(HOURS) % 24
    day = np.arange(HOURS) // 24
    weekday = (day + start_weekday) % 7
    return hour, day, weekday


def irradiance_shape(rng: np.random.Generator, latitude: float = LATITUDE) -> np.ndarray:
    """Hourly horizontal irradiance (kW/m2) with an annual sum near 1150 kWh/m2."""
    hour, day, _ = _calendar()
    decl = np.radians(23.45) * np.sin(2 * np.pi * (284 + day + 1) / 365)
    omega = np.radians(15.0 * (hour + 0.5 - 12.0))
    phi = np.radians(latitude)
    sin_el = np.sin(phi) * np.sin(decl) + np.cos(phi) * np.cos(decl) * np.cos(omega)
    clear = 1.05 * np.clip(sin_el, 0, None) ** 1.15
    # daily clearness: cloudier in winter, persistent from day to day
    season = 0.55 + 0.2 * np.cos(2 * np.pi * (np.arange(DAYS) - 190) / 365)
    k = np.empty(DAYS)
    state = 0.0
    for d in range(DAYS):
        state = 0.6 * state + rng.normal(0, 0.8)
        k[d] = np.clip(season[d] + 0.22 * np.tanh(state), 0.08, 0.95)
    return clear * k[day]


def household_shape(rng: np.random.Generator, noise: float = 0.18) -> np.ndarray:
    hour, day, weekday = _calendar()
    weekend = weekday >= 5
    morning = np.where(weekend, 9.5, 7.0)
    shape = (
        0.35
        + 0.55 * np.exp(-((hour - morning) / 1.5) ** 2)
        + 0.35 * weekend * np.exp(-((hour - 12.5) / 2.0) ** 2)
        + 1.0 * np.exp(-((hour - 19.0) / 2.2) ** 2)
    )
    shape = shape * (1.0 + 0.25 * np.cos(2 * np.pi * (day - 15) / 365))
    return shape * rng.lognormal(0.0, noise, HOURS)


def commercial_shape(rng: np.random.Generator, noise: float = 0.08) -> np.ndarray:
    hour, day, weekday = _calendar()
    open_ = (weekday < 5) & (hour >= 7) & (hour < 19)
    shape = 0.3 + np.where(open_, 1.0, 0.0) + 0.3 * ((weekday == 5) & (hour >= 8) & (hour < 14))
    shape = shape * (1.0 + 0.15 * np.cos(2 * np.pi * (day - 15) / 365))
    return shape * rng.lognormal(0.0, noise, HOURS)


def load_shapes(rng: np.random.Generator) -> dict[int, np.ndarray]:
    """One profile per consumption bin: households up to L6, mixed L7, commercial above."""
    out = {}
    for b in range(1, 12):
        if b <= 6:
            out[b] = household_shape(rng)
        elif b == 7:
            out[b] = 0.5 * household_shape(rng) + 0.5 * commercial_shape(rng)
        else:
            out[b] = commercial_shape(rng)
    return out


def aggregate_shape() -> np.ndarray:
    """Noise-free regional mix; flatter than any single building."""
    rng = np.random.default_rng(0)
    return 0.7 * household_shape(rng, noise=0.0) + 0.3 * commercial_shape(rng, noise=0.0)


def national_load(rng: np.random.Generator, mean_kw: float = 6.5e6) -> np.ndarray:
    hour, day, weekday = _calendar()
    daily = 0.85 + 0.12 * np.exp(-((hour - 11) / 3.0) ** 2) + 0.1 * np.exp(-((hour - 18.5) / 2.5) ** 2)
    shape = daily * (1.0 + 0.15 * np.cos(2 * np.pi * (day - 15) / 365)) * np.where(weekday >= 5, 0.88, 1.0)
    shape = shape * rng.normal(1.0, 0.01, HOURS)
    return shape / shape.mean() * mean_kw


def wholesale_prices(rng: np.random.Generator) -> np.ndarray:
    hour, day, weekday = _calendar()
    shape = (
        0.8
        + 0.3 * np.exp(-((hour - 8.5) / 2.0) ** 2)
        + 0.4 * np.exp(-((hour - 19.0) / 2.0) ** 2)
        - 0.15 * np.exp(-((hour - 13.5) / 2.5) ** 2) * (1 + np.cos(2 * np.pi * (day - 172) / 365))
    )
    shape = shape * (1.0 + 0.2 * np.cos(2 * np.pi * (day - 15) / 365)) * np.where(weekday >= 5, 0.85, 1.0)
    shape = shape * rng.lognormal(0.0, 0.15, HOURS)
    prices = np.clip(shape / shape.mean() * WHOLESALE_MEAN, 0.0, WHOLESALE_MAX)
    return prices * WHOLESALE_MEAN / prices.mean()


def rooftops(rng: np.random.Generator, region_id: int = 1, n: int = 2400) -> list[RooftopRecord]:
    """Rooftops of mostly small residential buildings plus a few commercial ones.

    Area, irradiation and consumption are drawn around a coarse lattice of bin
    mid-points so that a few thousand records form a few dozen groups.
    """
    area_mid = np.array([45.0, 66.0, 90.0, 114.0, 150.0, 195.0])
    area_p = np.array([0.14, 0.22, 0.22, 0.18, 0.14, 0.10])
    irr_mid = np.array([1080.0, 1220.0, 1370.0])
    irr_p = np.array([0.3, 0.55, 0.15])
    # two consumption levels per roof size; consumption grows with roof size
    cons_mid = {0: (4000.0, 5000.0), 1: (4000.0, 5000.0), 2: (5000.0, 6500.0),
                3: (5000.0, 6500.0), 4: (6500.0, 10000.0), 5: (10000.0, 19000.0)}
    out = []
    for _ in range(n):
        a_idx = int(rng.choice(len(area_mid), p=area_p))
        lo, hi = DEFAULT_SCHEME.bounds("area", DEFAULT_SCHEME._locate(DEFAULT_SCHEME.area_edges, area_mid[a_idx]))
        area = rng.uniform(lo, hi)
        irr = rng.choice(irr_mid, p=irr_p) * rng.uniform(0.97, 1.03)
        cons = rng.choice(cons_mid[a_idx], p=[0.55, 0.45]) * rng.uniform(0.95, 1.05)
        out.append(RooftopRecord(region_id, float(area), float(irr), float(cons)))
    # out-of-domain records exercise the rejection path
    out.append(RooftopRecord(region_id, 10.5, 1200.0, 3000.0))
    out.append(RooftopRecord(region_id, 40.0, 950.0, 3000.0))
    return out


def generate(out_dir: str | Path, seed: int = 2020, n_rooftops: int = 2400, canton: str = "ZH") -> Path:
    """Write the complete fixture tree under ``out_dir``; identical output for identical seed."""
    out = Path(out_dir)
    for sub in ("load_profiles", "irradiance", "aggregate_load"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    write_series_csv(out / "irradiance" / f"{canton}.csv", irradiance_shape(rng), "{:.5f}")
    for b, shape in load_shapes(rng).items():
        write_series_csv(out / "load_profiles" / f"L{b}.csv", shape / shape.mean(), "{:.5f}")
    agg = aggregate_shape()
    write_series_csv(out / "aggregate_load" / f"{canton}.csv", agg / agg.mean(), "{:.5f}")
    write_series_csv(out / "wholesale.csv", wholesale_prices(rng), "{:.3f}")
    write_series_csv(out / "national_load.csv", national_load(rng), "{:.1f}")
    write_rooftops(out / "rooftops.csv", rooftops(rng, n=n_rooftops))
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Write deterministic synthetic input fixtures.")
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=2020)
    ap.add_argument("--rooftops", type=int, default=2400)
    args = ap.parse_args(argv)
    generate(args.out_dir, args.seed, args.rooftops)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
