from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pvbopt.domain import CustomerGroup
from pvbopt.economics import Finance, PolicyParams, read_cost_tables
from pvbopt.optimizer import BatteryTechnology, ProblemInstance
from pvbopt.profiles import HourlySeries, PriceBook, constant_price_book


@pytest.fixture(scope="session")
def cost_tables():
    return read_cost_tables()


@pytest.fixture(scope="session")
def base_costs(cost_tables):
    return cost_tables["base"]


def make_group(area: float = 60.0, irr: float = 1200.0, cons: float = 4500.0, region: int = 1) -> CustomerGroup:
    return CustomerGroup(region, 2, 5, 4, irr, area, cons, total_area=area * 10)


def small_instance(
    load,
    irradiance,
    costs,
    retail: float = 20.0,
    injection: float = 6.0,
    year: int = 2020,
    battery: BatteryTechnology = BatteryTechnology(),
    battery_allowed: bool = True,
    dep_max: float | None = None,
    finance: Finance = Finance(),
    policy: PolicyParams = PolicyParams(),
    book: PriceBook | None = None,
) -> ProblemInstance:
    """Instance over an arbitrary short horizon; prices flat unless a book is given."""
    load = np.asarray(load, dtype=float)
    irradiance = np.asarray(irradiance, dtype=float)
    T = len(load)
    reduced = T != 8760
    if book is None:
        book = constant_price_book(retail, injection, finance.system_lifetime, T, year)
    return ProblemInstance(
        group=make_group(),
        load=HourlySeries(load, "kW", reduced),
        irradiance=HourlySeries(irradiance, "kWh/m2", reduced),
        book=book,
        costs=costs,
        policy=policy,
        finance=finance,
        battery=battery,
        battery_allowed=battery_allowed,
        dep_max_override=dep_max,
    )


def assert_close(actual: float, expected: float, rel: float = 1e-9, abs_: float = 1e-12, what: str = "") -> None:
    ok = math.isclose(actual, expected, rel_tol=rel, abs_tol=abs_)
    assert ok, f"{what or 'value'}: {actual!r} != {expected!r} (rel {rel}, abs {abs_})"


def assert_feasible(inst, sol, tol: float = 1e-6) -> None:
    from pvbopt.optimizer import check_feasibility

    viol = check_feasibility(inst, sol)
    bad = {k: v for k, v in viol.items() if v > tol}
    assert not bad, f"constraint violations above {tol}: {bad}"


# --- acceptance report ------------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store the verdict of one acceptance criterion; printed in the terminal summary."""

    def _record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE[number] = (passed, detail)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
