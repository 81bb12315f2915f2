"""Independent reference implementations used only by the tests.

Nothing here calls the optimizer or the economics module beyond reading
plain inputs (cost tables, prices, profiles), so agreement with the package is
evidence rather than tautology.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, milp


# --- battery ages --------------------------------------------------------------


def simulate_battery_ages(l_sys: int, l_bat: int) -> tuple[list[int], int]:
    """Step through the system life one year at a time, swapping the battery when it is worn out."""
    age = 0
    replaced = []
    for year in range(1, l_sys + 1):
        if age == l_bat:
            replaced.append(year)
            age = 0
        age += 1
    return replaced, l_bat - age


# --- lifetime weights ----------------------------------------------------------


@dataclass
class Weights:
    retail: np.ndarray
    injection: np.ndarray
    pv_voc: np.ndarray  # by band
    bat_voc: float
    pv_cost: np.ndarray  # by band
    fixed_credit: float
    bat_e: float
    bat_p: float


def oracle_weights(inst) -> Weights:
    """Lifetime coefficients built year by year with explicit loops."""
    fin, costs, pol, book = inst.finance, inst.costs, inst.policy, inst.book
    Y, L, w = inst.year, fin.system_lifetime, fin.wacc
    T = inst.n_hours
    retail = np.zeros(T)
    inj = np.zeros(T)
    voc = np.zeros(5)
    bat_voc = foc = 0.0
    for k in range(L):
        disc = 1.0 / (1.0 + w) ** (k + 1)
        deg = (1.0 - fin.degradation) ** k
        retail += book.retail[k] / 100.0 * deg * disc
        inj += book.injection[k] / 100.0 * deg * disc
        for p in range(5):
            voc[p] += costs.pv_voc(Y + k, p + 1) * disc
        bat_voc += costs.bat_voc(Y + k) * disc
        foc += costs.bat_foc(Y + k) * disc
    subsidy_on = Y <= pol.subsidy_expiry
    f = (1.0 - pol.subsidy_decay) ** (Y - pol.subsidy_base_year) if subsidy_on else 0.0
    keep = 1.0 - pol.tax_rebate
    pv_cost = np.array([keep * (costs.pv_inv(Y, p) - f * pol.subsidy_rates[p - 1]) for p in range(1, 6)])

    repl, rest = simulate_battery_ages(L, fin.battery_lifetime)
    ann = 1.0 / fin.battery_lifetime if w == 0 else w / (1.0 - (1.0 + w) ** -fin.battery_lifetime)

    def per_unit(price):
        total = price(Y)
        for y in repl:
            total += price(Y + y - 1) / (1.0 + w) ** y
        last = price(Y + repl[-1] - 1) if repl else price(Y)
        return total - ann * rest * last / (1.0 + w) ** L

    return Weights(
        retail=retail,
        injection=inj,
        pv_voc=voc,
        bat_voc=bat_voc,
        pv_cost=pv_cost,
        fixed_credit=keep * f * pol.subsidy_fixed,
        bat_e=per_unit(costs.bat_inv_e),
        bat_p=per_unit(costs.bat_inv_p) + foc,
    )


# --- brute-force dispatch and sizing ---------------------------------------------


def _hour_cost_table(w: Weights, t: int, pv: float, load: float, P: float, voc: float,
                     eta_c: float, eta_d: float, step: float, soc_step: float):
    """Cheapest operating cost of hour t for every reachable change of state of charge.

    Charge and discharge are enumerated on the ``step`` lattice (simultaneous
    use allowed); the remaining PV is split between load and grid in the
    cheaper order, which is optimal for fixed battery flows.
    """
    n_ch = int(math.floor(min(P, pv) / step + 1e-9))
    n_dis = int(math.floor(min(P, load) / step + 1e-9))
    ch = np.arange(n_ch + 1) * step
    dis = np.arange(n_dis + 1) * step
    C, D = np.meshgrid(ch, dis, indexing="ij")
    units = (eta_c * C - D / eta_d) / soc_step
    delta = np.rint(units).astype(int)
    assert np.allclose(units, delta, atol=1e-6), "efficiencies are not lattice compatible"
    avail = pv - C
    demand = load - D
    cost = voc * C + (w.bat_voc - w.retail[t]) * D
    val_l = voc - w.retail[t]  # per kWh of PV sent to the load
    val_g = voc - w.injection[t]  # per kWh of PV sent to the grid
    if val_l <= val_g:
        to_l = np.where(val_l < 0, np.minimum(avail, demand), 0.0)
        to_g = np.where(val_g < 0, avail - to_l, 0.0)
    else:
        to_g = np.where(val_g < 0, avail, 0.0)
        to_l = np.where(val_l < 0, np.minimum(avail - to_g, demand), 0.0)
    cost = cost + val_l * to_l + val_g * to_g
    lo, hi = int(delta.min()), int(delta.max())
    table = np.full(hi - lo + 1, np.inf)
    np.minimum.at(table, delta.ravel() - lo, cost.ravel())
    return lo, table


def cyclic_dispatch_cost(w: Weights, pv: np.ndarray, load: np.ndarray, E: float, P: float, voc: float,
                         eta_c: float, eta_d: float, step: float = 0.1, soc_step: float = 0.05) -> float:
    """Minimum operating cost over a cyclic horizon by min-plus products of hourly transition matrices."""
    n = int(round(E / soc_step)) + 1
    s = np.arange(n)
    diff = s[None, :] - s[:, None]  # destination minus origin
    V = None
    for t in range(len(load)):
        lo, table = _hour_cost_table(w, t, pv[t], load[t], P if E > 0 else 0.0, voc, eta_c, eta_d, step, soc_step)
        idx = diff - lo
        ok = (idx >= 0) & (idx < len(table))
        M = np.where(ok, table[np.clip(idx, 0, len(table) - 1)], np.inf)
        V = M if V is None else np.min(V[:, :, None] + M[None, :, :], axis=1)
    return float(np.min(np.diag(V)))


@dataclass
class OracleResult:
    objective: float
    design: tuple[float, float, float]  # (X, E, P)
    evaluated: dict  # design -> objective


def brute_force(inst, x_grid, e_grid, p_grid, step: float = 0.1, soc_step: float = 0.05) -> OracleResult:
    """Best design on a capacity lattice with dispatch enumerated on a power lattice.

    Only band 1 is used, so instances should keep the deployment limit below
    the second band. Batteries with E > 0 and P = 0 (or the reverse) cost more
    than no battery and cannot do anything, so they are skipped.
    """
    w = oracle_weights(inst)
    bt = inst.battery
    load = inst.load.values
    yld = inst.pv_yield
    results = {(0.0, 0.0, 0.0): 0.0}
    for X in x_grid:
        if X <= 0:
            continue
        pv = X * yld
        fixed = w.pv_cost[0] * X - w.fixed_credit
        for E in e_grid:
            for P in p_grid:
                if (E > 0) != (P > 0):
                    continue
                if E > 0 and not inst.battery_allowed:
                    continue
                ops = cyclic_dispatch_cost(w, pv, load, E, P, w.pv_voc[0], bt.eta_charge, bt.eta_out, step, soc_step)
                results[(X, E, P)] = fixed + w.bat_e * E + w.bat_p * P + ops
    best = min(results, key=results.get)
    return OracleResult(results[best], best, results)


# --- mixed-integer reference ------------------------------------------------------


def milp_reference(inst, time_limit: float = 60.0) -> tuple[float, np.ndarray]:
    """Solve the original mixed-integer model directly: band activation binaries,
    one generation variable per band, separate charge and discharge power limits,
    simultaneous charging and discharging allowed.

    Returns (objective, capacities by band).
    """
    w = oracle_weights(inst)
    T = inst.n_hours
    bands = inst.bands
    cap = min(inst.dep_max, bands.global_max)
    yld = inst.pv_yield
    load = inst.load.values
    bt = inst.battery
    battery = inst.battery_allowed

    names = {}
    n = 0

    def block(name, size):
        nonlocal n
        names[name] = np.arange(n, n + size)
        n += size

    block("X", 5)
    block("b", 5)
    block("z", 1)
    block("E", 1)
    block("P", 1)
    block("gen", 5 * T)
    for k in ("ch", "dis", "pv2l", "pv2g", "soc"):
        block(k, T)
    gen = names["gen"].reshape(5, T)

    c = np.zeros(n)
    c[names["X"]] = w.pv_cost
    c[names["z"]] = -w.fixed_credit
    c[names["E"]] = w.bat_e
    c[names["P"]] = w.bat_p
    for p in range(5):
        c[gen[p]] = w.pv_voc[p]
    c[names["dis"]] = w.bat_voc - w.retail
    c[names["pv2l"]] = -w.retail
    c[names["pv2g"]] = -w.injection

    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    hi[names["b"]] = 1
    hi[names["z"]] = 1
    if not battery:
        hi[names["E"]] = hi[names["P"]] = 0
    integrality = np.zeros(n)
    integrality[names["b"]] = 1
    integrality[names["z"]] = 1

    rows, cols, vals, rlo, rhi = [], [], [], [], []
    r = 0

    def add(entries, lower, upper):
        nonlocal r
        for j, v in entries:
            rows.append(r)
            cols.append(j)
            vals.append(v)
        rlo.append(lower)
        rhi.append(upper)
        r += 1

    X, b, z = names["X"], names["b"], names["z"][0]
    for p in range(5):
        mn = bands.minimum(p + 1)
        mx = min(bands.maximum(p + 1), cap)
        add([(X[p], 1.0), (b[p], -mn)], 0.0, np.inf)  # X >= min * b
        add([(X[p], 1.0), (b[p], -mx)], -np.inf, 0.0)  # X <= max * b
        # any active band forces the system above the global minimum
        add([(j, 1.0) for j in X] + [(b[p], -bands.global_min)], 0.0, np.inf)
    add([(j, 1.0) for j in X], -np.inf, cap)
    add([(z, 1.0)] + [(j, -1.0) for j in b], -np.inf, 0.0)  # fixed credit only with some PV
    for t in range(T):
        for p in range(5):
            add([(gen[p, t], 1.0), (X[p], -yld[t])], -np.inf, 0.0)
        add([(names["ch"][t], 1.0), (names["pv2l"][t], 1.0), (names["pv2g"][t], 1.0)]
            + [(gen[p, t], -1.0) for p in range(5)], -np.inf, 0.0)
        add([(names["pv2l"][t], 1.0), (names["dis"][t], 1.0)], -np.inf, load[t])
        prev = names["soc"][(t - 1) % T]
        add([(names["soc"][t], 1.0), (prev, -1.0), (names["ch"][t], -bt.eta_charge),
             (names["dis"][t], 1.0 / bt.eta_out)], 0.0, 0.0)
        add([(names["soc"][t], 1.0), (names["E"][0], -1.0)], -np.inf, 0.0)
        add([(names["soc"][t], 1.0), (names["E"][0], -(1.0 - bt.dod_max))], 0.0, np.inf)
        add([(names["ch"][t], 1.0), (names["P"][0], -1.0)], -np.inf, 0.0)
        add([(names["dis"][t], 1.0), (names["P"][0], -1.0)], -np.inf, 0.0)

    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, n))
    res = milp(
        c,
        constraints=LinearConstraint(A, rlo, rhi),
        integrality=integrality,
        bounds=Bounds(lo, hi),
        options={"time_limit": time_limit, "mip_rel_gap": 1e-9},
    )
    if res.status != 0:
        raise RuntimeError(f"reference MILP failed: {res.message}")
    return float(res.fun), np.array(res.x[X])
