"""Per-group investment and dispatch optimisation.

The activation flags of the five PV size bands are handled by enumerating
band subsets; every subproblem is a pure LP over capacities and 8760 hours of
operation, solved with HiGHS. Future years repeat the examined year's dispatch,
so the lifetime objective collapses into per-hour composite price weights.
"""
from __future__ import annotations

import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import highspy
import numpy as np
import scipy.sparse as sp

from .domain import CustomerGroup, ValidationError
from .economics import CostSet, Finance, PolicyParams, battery_lifecycle
from .profiles import HourlySeries, PriceBook, PVTechnology
from .solution import N_CATEGORIES, Dispatch, InvestmentSolution

log = logging.getLogger(__name__)

INF = highspy.kHighsInf


class ConfigurationError(ValidationError):
    """Inconsistent band or technology configuration."""


class SolverFailure(RuntimeError):
    def __init__(self, message: str, fingerprint: str):
        super().__init__(f"{message} [instance {fingerprint}]")
        self.fingerprint = fingerprint


@dataclass(frozen=True)
class BatteryTechnology:
    dod_max: float = 1.0
    eta_charge: float = 0.93
    eta_discharge: float = 0.93
    eta_inverter: float = 1.0

    def __post_init__(self):
        for name in ("dod_max", "eta_charge", "eta_discharge", "eta_inverter"):
            if not 0 < getattr(self, name) <= 1:
                raise ValidationError(f"{name} must lie in (0, 1]")

    @property
    def eta_out(self) -> float:
        """Discharge-side efficiency (cell and inverter)."""
        return self.eta_discharge * self.eta_inverter

    @property
    def round_trip(self) -> float:
        return self.eta_charge * self.eta_out


@dataclass(frozen=True)
class PVBands:
    """Capacity bands (kWp). Band p spans [edges[p-1], edges[p]]; the last is open above."""

    edges: tuple[float, ...] = (0.0, 6.0, 10.0, 30.0, 100.0)
    global_min: float = 2.0
    global_max: float = 50000.0

    def __post_init__(self):
        if len(self.edges) != N_CATEGORIES:
            raise ConfigurationError("need one lower edge per band")
        for p in range(1, N_CATEGORIES + 1):
            if self.minimum(p) > self.maximum(p):
                raise ConfigurationError(f"band {p}: minimum exceeds maximum")
        if not 0 <= self.global_min <= self.global_max:
            raise ConfigurationError("invalid global PV bounds")

    def minimum(self, p: int) -> float:
        return self.edges[p - 1]

    def maximum(self, p: int) -> float:
        return self.edges[p] if p < N_CATEGORIES else math.inf

    @property
    def contiguous(self) -> bool:
        return self.edges[0] == 0.0


@dataclass(frozen=True)
class ProblemInstance:
    group: CustomerGroup
    load: HourlySeries
    irradiance: HourlySeries
    book: PriceBook
    costs: CostSet
    policy: PolicyParams = PolicyParams()
    finance: Finance = Finance()
    pv: PVTechnology = PVTechnology()
    battery: BatteryTechnology = BatteryTechnology()
    bands: PVBands = PVBands()
    battery_allowed: bool = True
    dep_max_override: float | None = None

    def __post_init__(self):
        T = len(self.load)
        if len(self.irradiance) != T or self.book.n_hours != T:
            raise ValidationError("load, irradiance and prices must share one horizon")
        if self.book.n_years < self.finance.system_lifetime:
            raise ValidationError("price book shorter than the system lifetime")
        if self.load.unit != "kW" or self.irradiance.unit != "kWh/m2":
            raise ValidationError("load must be kW and irradiance kWh/m2 per hour")
        if self.dep_max <= 0:
            raise ValidationError("deployment potential must be positive")

    @property
    def year(self) -> int:
        return self.book.start_year

    @property
    def n_hours(self) -> int:
        return len(self.load)

    @property
    def dep_max(self) -> float:
        if self.dep_max_override is not None:
            return self.dep_max_override
        return self.group.median_area / self.pv.area_per_kwp

    @property
    def pv_yield(self) -> np.ndarray:
        """kW per kWp in each hour."""
        return self.pv.kw_per_kwp_per_irradiance * self.irradiance.values

    def band_range(self, p: int, alone: bool) -> tuple[float, float]:
        lo = self.bands.minimum(p)
        if alone:
            lo = max(lo, self.bands.global_min)
        return lo, min(self.bands.maximum(p), self.dep_max, self.bands.global_max)

    def fingerprint(self) -> str:
        h = hashlib.sha1()
        h.update(repr((self.group.key, self.year, self.costs.variant, self.battery_allowed, self.finance)).encode())
        for arr in (self.load.values, self.irradiance.values, self.book.retail, self.book.injection):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:12]


def composite_prices(
    book: PriceBook, wacc: float, degradation: float, l_sys: int, first_discount_year: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Lifetime weight of one unit of energy in each hour, for injection and retail.

    weight_t = sum_k price_{k,t} (1 - degradation)^k / (1 + wacc)^(k + first_discount_year)
    """
    if book.n_years < l_sys:
        raise ValidationError("price book shorter than the lifetime")
    k = np.arange(l_sys)
    f = (1.0 - degradation) ** k / (1.0 + wacc) ** (k + first_discount_year)
    return f @ book.injection[:l_sys], f @ book.retail[:l_sys]


@dataclass(frozen=True)
class LifetimeWeights:
    """Objective coefficients in EUR: per-hour energy weights and per-capacity costs."""

    injection: np.ndarray  # EUR per kWh injected in hour t
    retail: np.ndarray  # EUR per kWh self-consumed in hour t
    pv_voc: np.ndarray  # EUR per kWh generated, by band
    bat_voc: float  # EUR per kWh discharged
    pv_cost: np.ndarray  # EUR per kWp net of rate subsidy and rebate, by band
    fixed_credit: float  # fixed subsidy after rebate, EUR per system
    bat_e_cost: float  # EUR per kWh including replacements and residual
    bat_p_cost: float  # EUR per kW including replacements, residual and fixed O&M


def lifetime_weights(inst: ProblemInstance) -> LifetimeWeights:
    fin, costs, pol, Y = inst.finance, inst.costs, inst.policy, inst.year
    L = fin.system_lifetime
    inj, ret = composite_prices(inst.book, fin.wacc, fin.degradation, L)
    disc = fin.operating_discount()
    years = Y + np.arange(L)
    pv_voc = np.array([sum(costs.pv_voc(y, p) * d for y, d in zip(years, disc)) for p in range(1, 6)])
    bat_voc = float(sum(costs.bat_voc(y) * d for y, d in zip(years, disc)))
    foc = float(sum(costs.bat_foc(y) * d for y, d in zip(years, disc)))
    f_sub = pol.subsidy_factor(Y)
    keep = 1.0 - pol.tax_rebate
    pv_cost = np.array([keep * (costs.pv_inv(Y, p) - f_sub * pol.subsidy_rates[p - 1]) for p in range(1, 6)])

    def lifecycle_per_unit(e: float, p: float) -> float:
        life = battery_lifecycle(e, p, Y, fin, costs)
        repl = sum(c / (1.0 + fin.wacc) ** y for y, c in life.replacements)
        return repl - life.residual / (1.0 + fin.wacc) ** L

    bat_e = costs.bat_inv_e(Y) + lifecycle_per_unit(1.0, 0.0)
    bat_p = costs.bat_inv_p(Y) + lifecycle_per_unit(0.0, 1.0) + foc
    return LifetimeWeights(
        injection=inj / 100.0,
        retail=ret / 100.0,
        pv_voc=pv_voc,
        bat_voc=bat_voc,
        pv_cost=pv_cost,
        fixed_credit=keep * f_sub * pol.subsidy_fixed,
        bat_e_cost=bat_e,
        bat_p_cost=bat_p,
    )


@dataclass
class LinearProgram:
    """min c'x + offset  s.t.  row_lo <= A x <= row_hi,  col_lo <= x <= col_hi."""

    c: np.ndarray
    A: sp.csc_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    col_lo: np.ndarray
    col_hi: np.ndarray
    offset: float
    active: tuple[int, ...]
    battery: bool
    cols: dict[str, object] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.offset

    def max_violation(self, x: np.ndarray) -> float:
        ax = self.A @ x
        viol = [
            np.max(np.maximum(self.row_lo - ax, 0), initial=0.0),
            np.max(np.maximum(ax - self.row_hi, 0), initial=0.0),
            np.max(np.maximum(self.col_lo - x, 0), initial=0.0),
            np.max(np.maximum(x - self.col_hi, 0), initial=0.0),
        ]
        return float(max(viol))


class _Triplets:
    def __init__(self):
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add(self, rows, cols, vals):
        rows = np.asarray(rows)
        self.rows.append(rows)
        self.cols.append(np.broadcast_to(cols, rows.shape))
        self.vals.append(np.broadcast_to(np.asarray(vals, dtype=float), rows.shape))

    def matrix(self, n_rows: int, n_cols: int) -> sp.csc_matrix:
        return sp.csc_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(n_rows, n_cols),
        )


def build_lp(
    inst: ProblemInstance,
    active: Sequence[int],
    battery_allowed: bool | None = None,
    weights: LifetimeWeights | None = None,
) -> LinearProgram:
    """LP for a fixed set of active PV bands (1-based).

    With a single active band the generation variable is folded into the PV
    outflows (exact because O&M costs are non-negative). Grid purchases are
    implied by the load row: g2l = load - pv2l - dis.
    """
    active = tuple(sorted(set(active)))
    if any(p < 1 or p > N_CATEGORIES for p in active):
        raise ValidationError(f"invalid band set {active}")
    for p in active:
        if inst.bands.minimum(p) > inst.bands.maximum(p):
            raise ConfigurationError(f"band {p}: minimum exceeds maximum")
    battery = inst.battery_allowed if battery_allowed is None else battery_allowed
    w = lifetime_weights(inst) if weights is None else weights
    T = inst.n_hours
    t = np.arange(T)
    m = len(active)
    folded = m == 1

    # column layout
    cols: dict[str, object] = {}
    n = 0
    cols["X"] = np.arange(n, n + m); n += m
    if battery:
        cols["E"] = n; cols["P"] = n + 1; n += 2
    if not folded:
        cols["gen"] = np.arange(n, n + m * T).reshape(m, T); n += m * T
    for name in (("ch", "dis") if battery else ()) + ("pv2l", "pv2g") + (("soc",) if battery else ()):
        cols[name] = np.arange(n, n + T); n += T

    c = np.zeros(n)
    col_lo = np.zeros(n)
    col_hi = np.full(n, INF)
    X = cols["X"]
    for i, p in enumerate(active):
        lo, hi = inst.band_range(p, alone=folded)
        col_lo[X[i]], col_hi[X[i]] = lo, hi
        c[X[i]] = w.pv_cost[p - 1]
    offset = -w.fixed_credit if m else 0.0

    pv2l, pv2g = cols["pv2l"], cols["pv2g"]
    c[pv2l] = -w.retail
    c[pv2g] = -w.injection
    if battery:
        c[cols["E"]] = w.bat_e_cost
        c[cols["P"]] = w.bat_p_cost
        c[cols["dis"]] = w.bat_voc - w.retail
    if folded:
        voc = w.pv_voc[active[0] - 1]
        for name in ("ch", "pv2l", "pv2g"):
            if name in cols:
                c[cols[name]] += voc
    else:
        for i, p in enumerate(active):
            c[cols["gen"][i]] = w.pv_voc[p - 1]

    trip = _Triplets()
    r_lo: list[np.ndarray] = []
    r_hi: list[np.ndarray] = []
    row = 0
    yield_ = inst.pv_yield
    outflow = [pv2l, pv2g] + ([cols["ch"]] if battery else [])

    if folded:
        for col in outflow:
            trip.add(row + t, col, 1.0)
        trip.add(row + t, X[0], -yield_)
        r_lo.append(np.full(T, -INF)); r_hi.append(np.zeros(T)); row += T
    else:
        gen = cols["gen"]
        for i in range(m):
            trip.add(row + t, gen[i], 1.0)
            trip.add(row + t, X[i], -yield_)
            r_lo.append(np.full(T, -INF)); r_hi.append(np.zeros(T)); row += T
        for col in outflow:
            trip.add(row + t, col, 1.0)
        for i in range(m):
            trip.add(row + t, gen[i], -1.0)
        r_lo.append(np.full(T, -INF)); r_hi.append(np.zeros(T)); row += T

    # self-consumption cannot exceed the load
    trip.add(row + t, pv2l, 1.0)
    if battery:
        trip.add(row + t, cols["dis"], 1.0)
    r_lo.append(np.full(T, -INF)); r_hi.append(inst.load.values.astype(float)); row += T

    if battery:
        bt = inst.battery
        soc, ch, dis = cols["soc"], cols["ch"], cols["dis"]
        # cyclic storage balance
        trip.add(row + t, soc, 1.0)
        trip.add(row + t, soc[(t - 1) % T], -1.0)
        trip.add(row + t, ch, -bt.eta_charge)
        trip.add(row + t, dis, 1.0 / bt.eta_out)
        r_lo.append(np.zeros(T)); r_hi.append(np.zeros(T)); row += T
        trip.add(row + t, soc, 1.0)
        trip.add(row + t, cols["E"], -1.0)
        r_lo.append(np.full(T, -INF)); r_hi.append(np.zeros(T)); row += T
        if bt.dod_max < 1.0:
            trip.add(row + t, soc, 1.0)
            trip.add(row + t, cols["E"], -(1.0 - bt.dod_max))
            r_lo.append(np.zeros(T)); r_hi.append(np.full(T, INF)); row += T
        # at an optimum charging and discharging never overlap, so a joint power cap is exact
        trip.add(row + t, ch, 1.0)
        trip.add(row + t, dis, 1.0)
        trip.add(row + t, cols["P"], -1.0)
        r_lo.append(np.full(T, -INF)); r_hi.append(np.zeros(T)); row += T

    if not folded:
        cap = min(inst.dep_max, inst.bands.global_max)
        trip.add(np.full(m, row), X, 1.0)
        r_lo.append(np.array([-INF])); r_hi.append(np.array([cap])); row += 1
        if sum(inst.bands.minimum(p) for p in active) < inst.bands.global_min:
            trip.add(np.full(m, row), X, 1.0)
            r_lo.append(np.array([inst.bands.global_min])); r_hi.append(np.array([INF])); row += 1

    A = trip.matrix(row, n)
    return LinearProgram(
        c=c,
        A=A,
        row_lo=np.concatenate(r_lo),
        row_hi=np.concatenate(r_hi),
        col_lo=col_lo,
        col_hi=col_hi,
        offset=offset,
        active=active,
        battery=battery,
        cols=cols,
    )


@dataclass
class LPResult:
    ok: bool
    status: str
    x: np.ndarray
    objective: float
    reduced_costs: np.ndarray


class HighsSolver:
    """Reusable HiGHS session; consecutive LPs with the same matrix are warm-started."""

    def __init__(self, **options):
        self._opts = {"output_flag": False, "threads": 1, "simplex_dual_edge_weight_strategy": 1}
        self._opts.update(options)
        self._h = None
        self._loaded: LinearProgram | None = None

    def _fresh(self) -> highspy.Highs:
        h = highspy.Highs()
        for k, v in self._opts.items():
            h.setOptionValue(k, v)
        return h

    def _same_structure(self, lp: LinearProgram) -> bool:
        old = self._loaded
        if old is None or old.A.shape != lp.A.shape:
            return False
        if old.A is lp.A:
            return True
        return (
            np.array_equal(old.A.indptr, lp.A.indptr)
            and np.array_equal(old.A.indices, lp.A.indices)
            and np.array_equal(old.A.data, lp.A.data)
            and np.array_equal(old.row_lo, lp.row_lo)
            and np.array_equal(old.row_hi, lp.row_hi)
        )

    def _load(self, lp: LinearProgram) -> None:
        self._h = self._fresh()
        model = highspy.HighsLp()
        model.num_col_, model.num_row_ = lp.A.shape[1], lp.A.shape[0]
        model.col_cost_ = lp.c
        model.col_lower_ = lp.col_lo
        model.col_upper_ = lp.col_hi
        model.row_lower_ = lp.row_lo
        model.row_upper_ = lp.row_hi
        model.offset_ = lp.offset
        model.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        model.a_matrix_.start_ = lp.A.indptr
        model.a_matrix_.index_ = lp.A.indices
        model.a_matrix_.value_ = lp.A.data
        self._h.passModel(model)
        self._loaded = lp

    def _update(self, lp: LinearProgram) -> None:
        old, h = self._loaded, self._h
        idx = np.flatnonzero((old.col_lo != lp.col_lo) | (old.col_hi != lp.col_hi))
        if len(idx):
            h.changeColsBounds(len(idx), idx.astype(np.int32), lp.col_lo[idx], lp.col_hi[idx])
        idx = np.flatnonzero(old.c != lp.c)
        if len(idx):
            h.changeColsCost(len(idx), idx.astype(np.int32), lp.c[idx])
        if old.offset != lp.offset:
            h.changeObjectiveOffset(lp.offset)
        self._loaded = lp

    def solve(self, lp: LinearProgram, warm: bool = True) -> LPResult:
        if warm and self._same_structure(lp):
            self._update(lp)
        else:
            self._load(lp)
        res = self._run()
        if not res.ok:
            # retry from scratch before giving up
            self._load(lp)
            self._h.setOptionValue("simplex_strategy", 1)
            res = self._run()
            self._h.setOptionValue("simplex_strategy", self._opts.get("simplex_strategy", 0))
        return res

    def _run(self) -> LPResult:
        h = self._h
        h.run()
        status = h.getModelStatus()
        ok = status == highspy.HighsModelStatus.kOptimal
        if not ok:
            self._loaded = None
            n = 0
            return LPResult(False, h.modelStatusToString(status), np.zeros(n), math.nan, np.zeros(n))
        sol = h.getSolution()
        return LPResult(
            True,
            "optimal",
            np.array(sol.col_value),
            h.getInfo().objective_function_value,
            np.array(sol.col_dual),
        )

    def write(self, lp: LinearProgram, path: str | Path) -> None:
        """Dump the LP in a text exchange format chosen by suffix (.lp or .mps)."""
        self._load(lp)
        self._h.writeModel(str(path))


# --- dispatch extraction and cleaning --------------------------------------


def _extract(inst: ProblemInstance, lp: LinearProgram, x: np.ndarray, w: LifetimeWeights):
    T = inst.n_hours
    caps = np.zeros(N_CATEGORIES)
    for i, p in enumerate(lp.active):
        caps[p - 1] = x[lp.cols["X"][i]]
    z = np.zeros(T)
    get = lambda name: np.array(x[lp.cols[name]]) if name in lp.cols else z.copy()
    parts = {name: get(name) for name in ("ch", "dis", "pv2l", "pv2g", "soc")}
    gen = np.zeros((N_CATEGORIES, T))
    if "gen" in lp.cols:
        for i, p in enumerate(lp.active):
            gen[p - 1] = x[lp.cols["gen"][i]]
    bat_e = float(x[lp.cols["E"]]) if lp.battery else 0.0
    bat_p = float(x[lp.cols["P"]]) if lp.battery else 0.0
    return caps, bat_e, bat_p, parts, gen


def clean_dispatch(
    inst: ProblemInstance, lp: LinearProgram, caps: np.ndarray, parts: dict, gen: np.ndarray, w: LifetimeWeights
):
    """Remove simultaneous charge/discharge without worsening the objective.

    Discharge y is replaced by direct PV use; the charge that fed it shrinks by
    y / round_trip. The freed PV is injected when that pays, else curtailed.
    """
    bt = inst.battery
    rt = bt.round_trip
    ch, dis, pv2l, pv2g = (np.maximum(parts[k], 0.0) for k in ("ch", "dis", "pv2l", "pv2g"))
    soc = np.maximum(parts["soc"], 0.0)
    gen = np.maximum(gen, 0.0)
    y = np.minimum(dis, rt * ch)
    ch = np.maximum(ch - y / rt, 0.0)
    dis = dis - y
    pv2l = pv2l + y
    freed = y / rt - y
    T = inst.n_hours
    active = [p for p in range(1, N_CATEGORIES + 1) if caps[p - 1] > 0]
    # cheapest O&M among generating bands decides whether injection pays
    voc = min((w.pv_voc[p - 1] for p in active), default=0.0)
    inject = w.injection - voc > 0
    pv2g = pv2g + np.where(inject, freed, 0.0)
    ceiling = np.zeros((N_CATEGORIES, T))
    for p in active:
        ceiling[p - 1] = caps[p - 1] * inst.pv_yield
    outflow = ch + pv2l + pv2g
    if "gen" in lp.cols:
        excess = np.maximum(gen.sum(axis=0) - outflow, 0.0)
        for p in sorted(active, key=lambda q: -w.pv_voc[q - 1]):
            cut = np.minimum(excess, gen[p - 1])
            gen[p - 1] -= cut
            excess -= cut
    elif active:
        gen[active[0] - 1] = outflow
    return ch, dis, pv2l, pv2g, soc, gen, ceiling


def dispatch_objective(
    w: LifetimeWeights, caps: np.ndarray, bat_e: float, bat_p: float, d: Dispatch
) -> float:
    """Lifetime cost (EUR) of a given design and dispatch using composite weights."""
    value = float(w.pv_cost @ caps) + w.bat_e_cost * bat_e + w.bat_p_cost * bat_p
    if caps.sum() > 0:
        value -= w.fixed_credit
    value += float(w.pv_voc @ d.gen.sum(axis=1)) + w.bat_voc * float(d.dis.sum())
    value -= float(w.injection @ d.pv2g) + float(w.retail @ d.sc)
    return value


def _finish(inst, lp, res, w, subsets_solved, warnings) -> InvestmentSolution:
    caps, bat_e, bat_p, parts, gen = _extract(inst, lp, res.x, w)
    caps = np.where(caps < 1e-9, 0.0, caps)
    bat_e = 0.0 if bat_e < 1e-9 else bat_e
    bat_p = 0.0 if bat_p < 1e-9 else bat_p
    ch, dis, pv2l, pv2g, soc, gen, ceiling = clean_dispatch(inst, lp, caps, parts, gen, w)
    load = inst.load.values
    d = Dispatch(load, gen, ceiling, ch, dis, pv2l, pv2g, np.maximum(load - pv2l - dis, 0.0), soc)
    flagged = tuple(int(h) for h in np.flatnonzero(w.injection < 0))
    return InvestmentSolution(
        start_year=inst.year,
        pv_caps=tuple(float(c) for c in caps),
        bat_e=bat_e,
        bat_p=bat_p,
        dispatch=d,
        objective=dispatch_objective(w, caps, bat_e, bat_p, d),
        lp_objective=res.objective,
        subsets_solved=subsets_solved,
        flagged_hours=flagged,
        warnings=tuple(warnings),
    )


def do_nothing(inst: ProblemInstance, subsets_solved: int = 0, warnings: Sequence[str] = ()) -> InvestmentSolution:
    return InvestmentSolution(
        start_year=inst.year,
        pv_caps=(0.0,) * N_CATEGORIES,
        bat_e=0.0,
        bat_p=0.0,
        dispatch=Dispatch.idle(inst.load.values),
        objective=0.0,
        lp_objective=0.0,
        subsets_solved=subsets_solved,
        warnings=tuple(warnings),
    )


def bands_dominate(inst: ProblemInstance, w: LifetimeWeights) -> bool:
    """True when a single band is always at least as good as any mix of bands.

    Holds if bands are contiguous and both the net cost per kWp and the
    lifetime O&M weight are non-increasing with band index.
    """
    if not inst.bands.contiguous:
        return False
    return bool(np.all(np.diff(w.pv_cost) <= 1e-12) and np.all(np.diff(w.pv_voc) <= 1e-12))


def feasible_subsets(inst: ProblemInstance) -> list[tuple[int, ...]]:
    cap = min(inst.dep_max, inst.bands.global_max)
    out = []
    for r in range(1, N_CATEGORIES + 1):
        for subset in itertools.combinations(range(1, N_CATEGORIES + 1), r):
            ranges = [inst.band_range(p, alone=(r == 1)) for p in subset]
            if any(lo > hi for lo, hi in ranges):
                continue
            if sum(lo for lo, _ in ranges) > cap:
                continue
            if sum(hi for _, hi in ranges) < inst.bands.global_min:
                continue
            out.append(subset)
    return out


def solve_group(
    inst: ProblemInstance,
    exhaustive: bool = False,
    prune: bool = True,
    solver: HighsSolver | None = None,
    dump_dir: str | Path | None = None,
) -> InvestmentSolution:
    """Minimum lifetime-cost design and dispatch for one group and investment year.

    Do-nothing (objective 0) is always a candidate. Unless ``exhaustive`` is set
    and when band costs are monotone, only single-band subsets are solved;
    bands whose subgradient bound cannot beat the incumbent are skipped.
    """
    solver = solver or HighsSolver()
    w = lifetime_weights(inst)
    subsets = feasible_subsets(inst)
    if not exhaustive and bands_dominate(inst, w):
        subsets = [s for s in subsets if len(s) == 1]
        use_bounds = prune
    else:
        if not exhaustive:
            log.info("band costs not monotone; enumerating all band subsets")
        use_bounds = False
    # largest band first: its solution bounds the smaller ones
    singles = sorted((s for s in subsets if len(s) == 1), key=lambda s: -s[0])
    multis = [s for s in subsets if len(s) > 1]

    best: tuple[float, LinearProgram, LPResult] | None = None
    best_obj = 0.0
    solved = failed = 0
    warnings: list[str] = []
    cuts: list[tuple[int, float, float, float]] = []  # (band, objective, X*, reduced cost)
    S = float(inst.pv_yield.sum())

    for subset in singles + multis:
        if use_bounds and len(subset) == 1 and cuts:
            p = subset[0]
            lo, hi = inst.band_range(p, alone=True)
            lb = -math.inf
            for q, obj_q, xq, dq in cuts:
                extra = w.pv_cost[p - 1] - w.pv_cost[q - 1] - max(0.0, w.pv_voc[q - 1] - w.pv_voc[p - 1]) * S
                lb = max(lb, min(obj_q + dq * (xi - xq) + extra * xi for xi in (lo, hi)))
            if lb >= best_obj - 1e-9 * max(1.0, abs(best_obj)):
                continue
        lp = build_lp(inst, subset, weights=w)
        if dump_dir is not None:
            name = f"{inst.fingerprint()}_b{''.join(map(str, subset))}.lp"
            solver.write(lp, Path(dump_dir) / name)
        res = solver.solve(lp)
        solved += 1
        if not res.ok:
            failed += 1
            warnings.append(f"subset {subset}: {res.status}")
            log.warning("LP for bands %s failed: %s", subset, res.status)
            continue
        if len(subset) == 1:
            xi = lp.cols["X"][0]
            cuts.append((subset[0], res.objective, res.x[xi], res.reduced_costs[xi]))
        if res.objective < best_obj:
            best_obj, best = res.objective, (res.objective, lp, res)

    if solved and failed == solved:
        raise SolverFailure(f"all {solved} LPs failed", inst.fingerprint())
    if best is None:
        return do_nothing(inst, solved, warnings)
    _, lp, res = best
    sol = _finish(inst, lp, res, w, solved, warnings)
    if sol.objective > 0:
        # cleaning never worsens, so this only guards against solver noise
        return do_nothing(inst, solved, warnings + ["best design not better than do-nothing"])
    return sol


def check_feasibility(inst: ProblemInstance, sol: InvestmentSolution, tol: float = 1e-6) -> dict[str, float]:
    """Largest violation of each operational constraint family (0 when satisfied)."""
    d = sol.dispatch
    bt = inst.battery
    T = d.n_hours
    v: dict[str, float] = {}
    neg = min(float(np.min(getattr(d, k))) for k in ("gen", "ch", "dis", "pv2l", "pv2g", "g2l", "soc"))
    v["nonnegativity"] = max(0.0, -neg)
    v["pv_ceiling"] = float(np.max(d.gen - d.ceiling, initial=0.0)) if T else 0.0
    v["pv_outflow"] = float(np.max(d.ch + d.pv2l + d.pv2g - d.gen_total, initial=0.0))
    v["load_balance"] = float(np.max(np.abs(d.pv2l + d.dis + d.g2l - d.load), initial=0.0))
    prev = np.roll(d.soc, 1)
    resid = d.soc - prev - bt.eta_charge * d.ch + d.dis / bt.eta_out
    v["storage_dynamics"] = float(np.max(np.abs(resid), initial=0.0))
    v["cyclic_storage"] = float(abs(resid[0])) if T else 0.0
    v["soc_upper"] = float(np.max(d.soc - sol.bat_e, initial=0.0))
    v["soc_lower"] = float(np.max((1 - bt.dod_max) * sol.bat_e - d.soc, initial=0.0))
    v["charge_power"] = float(np.max(d.ch - sol.bat_p, initial=0.0))
    v["discharge_power"] = float(np.max(d.dis - sol.bat_p, initial=0.0))
    v["simultaneous"] = float(np.max(np.minimum(d.ch, d.dis), initial=0.0))
    caps = np.array(sol.pv_caps)
    total = caps.sum()
    v["deployment"] = max(0.0, total - inst.dep_max)
    v["global_bounds"] = 0.0 if total == 0 else max(0.0, inst.bands.global_min - total, total - inst.bands.global_max)
    band_viol = 0.0
    for p in range(1, N_CATEGORIES + 1):
        c = caps[p - 1]
        if c > 0:
            band_viol = max(band_viol, inst.bands.minimum(p) - c, c - inst.bands.maximum(p))
    v["band_bounds"] = max(0.0, band_viol)
    return v
