"""Core domain types and the clustering of rooftop records into customer groups.

A customer group is one (region, irradiation bin, roof-area bin, consumption bin)
cell. Groups are represented by the median rooftop of their members.
"""
from __future__ import annotations

import bisect
import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

CANTONS: tuple[str, ...] = (
    "ZH", "BE", "LU", "UR", "SZ", "OW", "NW", "GL", "ZG", "FR", "SO", "BS", "BL",
    "SH", "AR", "AI", "SG", "GR", "AG", "TG", "TI", "VD", "VS", "NE", "GE", "JU",
)

ROOFTOP_COLUMNS = ("region_id", "area_m2", "irradiation_kwh_m2_yr", "consumption_kwh_yr")


class ValidationError(ValueError):
    """Raised when domain inputs violate their invariants."""


class RejectedRecord(ValueError):
    """A rooftop record outside the modelled domain (too small or too dark)."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def region_index(region: str | int) -> int:
    """Map a canton code ('ZH') or 1-based index to the 1-based region index."""
    if isinstance(region, str):
        code = region.strip().upper()
        if code.isdigit():
            return region_index(int(code))
        try:
            return CANTONS.index(code) + 1
        except ValueError:
            raise ValidationError(f"unknown region {region!r}") from None
    if not 1 <= int(region) <= len(CANTONS):
        raise ValidationError(f"region index {region} outside 1..{len(CANTONS)}")
    return int(region)


def region_code(region_id: int) -> str:
    return CANTONS[region_index(region_id) - 1]


@dataclass(frozen=True)
class RooftopRecord:
    region_id: int
    area: float
    annual_irradiation: float
    annual_consumption: float

    def __post_init__(self):
        region_index(self.region_id)
        for name in ("area", "annual_irradiation", "annual_consumption"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        if self.area <= 0:
            raise ValidationError("area must be positive")
        if self.annual_consumption < 0:
            raise ValidationError("annual_consumption must be non-negative")
        if self.annual_irradiation < 0:
            raise ValidationError("annual_irradiation must be non-negative")


def _area_edges() -> tuple[float, ...]:
    edges = [12.0]
    for stop, step in ((60, 6), (180, 12), (600, 30), (1200, 300), (2400, 600), (6000, 1200)):
        while edges[-1] < stop:
            edges.append(edges[-1] + step)
    return tuple(edges)


@dataclass(frozen=True)
class BinScheme:
    """Lower edges of each bin; the last bin of every axis is open above."""

    irr_edges: tuple[float, ...] = (1000.0, 1150.0, 1300.0, 1450.0, 1600.0)
    area_edges: tuple[float, ...] = field(default_factory=_area_edges)
    load_edges: tuple[float, ...] = (
        0.0, 1600.0, 2500.0, 3500.0, 4500.0, 5500.0, 7500.0, 13000.0, 25000.0, 30000.0, 150000.0,
    )

    def __post_init__(self):
        for name in ("irr_edges", "area_edges", "load_edges"):
            edges = getattr(self, name)
            if len(edges) == 0:
                raise ValidationError(f"{name} is empty")
            if any(b <= a for a, b in zip(edges, edges[1:])):
                raise ValidationError(f"{name} must be strictly increasing")

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.irr_edges), len(self.area_edges), len(self.load_edges)

    @staticmethod
    def _locate(edges: Sequence[float], value: float) -> int:
        # 1-based bin index for half-open [lo, hi) bins
        return bisect.bisect_right(edges, value)

    def bounds(self, axis: str, index: int) -> tuple[float, float]:
        edges = {"irr": self.irr_edges, "area": self.area_edges, "load": self.load_edges}[axis]
        if not 1 <= index <= len(edges):
            raise ValidationError(f"{axis} bin {index} out of range")
        hi = edges[index] if index < len(edges) else math.inf
        return edges[index - 1], hi


DEFAULT_SCHEME = BinScheme()


def rejection_reason(record: RooftopRecord, scheme: BinScheme = DEFAULT_SCHEME) -> str | None:
    if record.annual_irradiation < scheme.irr_edges[0]:
        return f"irradiation {record.annual_irradiation:g} below {scheme.irr_edges[0]:g} kWh/m2/yr"
    if record.area < scheme.area_edges[0]:
        return f"area {record.area:g} below {scheme.area_edges[0]:g} m2"
    if record.annual_consumption < scheme.load_edges[0]:
        return f"consumption {record.annual_consumption:g} below {scheme.load_edges[0]:g} kWh/yr"
    return None


def classify(record: RooftopRecord, scheme: BinScheme = DEFAULT_SCHEME) -> tuple[int, int, int]:
    """Return the 1-based (irr_bin, area_bin, load_bin) triple of a record.

    Raises RejectedRecord for records outside the modelled domain.
    """
    reason = rejection_reason(record, scheme)
    if reason is not None:
        raise RejectedRecord(reason)
    return (
        scheme._locate(scheme.irr_edges, record.annual_irradiation),
        scheme._locate(scheme.area_edges, record.area),
        scheme._locate(scheme.load_edges, record.annual_consumption),
    )


@dataclass(frozen=True)
class CustomerGroup:
    region_id: int
    irr_bin: int
    area_bin: int
    load_bin: int
    median_irradiation: float
    median_area: float
    median_consumption: float
    total_area: float
    member_count: int = 1

    def __post_init__(self):
        region_index(self.region_id)
        if not (1 <= self.irr_bin <= 5 and 1 <= self.area_bin <= 40 and 1 <= self.load_bin <= 11):
            raise ValidationError(f"bin indices out of range: {self.bins}")
        if self.median_area <= 0 or self.total_area < 0:
            raise ValidationError("group areas must be positive")

    @property
    def bins(self) -> tuple[int, int, int]:
        return self.irr_bin, self.area_bin, self.load_bin

    @property
    def key(self) -> tuple[int, int, int, int]:
        return self.region_id, self.irr_bin, self.area_bin, self.load_bin

    @property
    def label(self) -> str:
        return f"{region_code(self.region_id)}-IRR{self.irr_bin}-A{self.area_bin}-L{self.load_bin}"

    @property
    def customer_count(self) -> float:
        """Number of rooftops the representative rooftop stands for (not rounded)."""
        return self.total_area / self.median_area

    @property
    def max_pv_kwp(self) -> float:
        """Rooftop-limited PV potential of the representative rooftop at 6 m2/kWp."""
        return self.median_area / 6.0


def lower_median(values: Iterable[float]) -> float:
    """Median that picks the lower middle element for even-sized inputs."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("median of empty sequence")
    return ordered[(len(ordered) - 1) // 2]


def build_groups(
    records: Iterable[RooftopRecord], scheme: BinScheme = DEFAULT_SCHEME
) -> list[CustomerGroup]:
    """Cluster records into customer groups, one per non-empty bin combination.

    Out-of-domain records are skipped and counted in the log. The result is
    sorted by group key so it does not depend on input order.
    """
    members: dict[tuple[int, int, int, int], list[RooftopRecord]] = defaultdict(list)
    rejected = 0
    for rec in records:
        try:
            bins = classify(rec, scheme)
        except RejectedRecord:
            rejected += 1
            continue
        members[(rec.region_id, *bins)].append(rec)
    if rejected:
        log.info("build_groups: skipped %d out-of-domain records", rejected)

    groups = []
    for key in sorted(members):
        recs = members[key]
        groups.append(
            CustomerGroup(
                region_id=key[0],
                irr_bin=key[1],
                area_bin=key[2],
                load_bin=key[3],
                median_irradiation=lower_median(r.annual_irradiation for r in recs),
                median_area=lower_median(r.area for r in recs),
                median_consumption=lower_median(r.annual_consumption for r in recs),
                total_area=math.fsum(r.area for r in recs),
                member_count=len(recs),
            )
        )
    return groups


@dataclass
class IngestReport:
    accepted: list[RooftopRecord]
    rejected: list[tuple[int, str]]  # (line number, reason)


def read_rooftops(path: str | Path, scheme: BinScheme = DEFAULT_SCHEME) -> IngestReport:
    """Read a rooftop CSV (``region_id,area_m2,irradiation_kwh_m2_yr,consumption_kwh_yr``).

    Malformed rows raise ValidationError with the line number; well-formed but
    out-of-domain rows are returned in ``rejected``.
    """
    accepted: list[RooftopRecord] = []
    rejected: list[tuple[int, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(ROOFTOP_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rec = RooftopRecord(
                    region_id=region_index(row["region_id"]),
                    area=float(row["area_m2"]),
                    annual_irradiation=float(row["irradiation_kwh_m2_yr"]),
                    annual_consumption=float(row["consumption_kwh_yr"]),
                )
            except (ValueError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            reason = rejection_reason(rec, scheme)
            if reason is None:
                accepted.append(rec)
            else:
                rejected.append((lineno, reason))
    if rejected:
        log.info("%s: rejected %d of %d records", path, len(rejected), len(rejected) + len(accepted))
    return IngestReport(accepted, rejected)


def write_rooftops(path: str | Path, records: Iterable[RooftopRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROOFTOP_COLUMNS)
        for r in records:
            writer.writerow([r.region_id, f"{r.area:.3f}", f"{r.annual_irradiation:.2f}", f"{r.annual_consumption:.1f}"])
