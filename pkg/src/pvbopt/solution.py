"""Result containers shared by the optimizer and the economics module."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import ValidationError

N_CATEGORIES = 5


def _ro(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dispatch:
    """Hourly operation in kW (kWh per 1-hour step).

    ``gen`` and ``ceiling`` have one row per PV category. ``g2l`` is the grid
    purchase needed to close the load balance.
    """

    load: np.ndarray
    gen: np.ndarray
    ceiling: np.ndarray
    ch: np.ndarray
    dis: np.ndarray
    pv2l: np.ndarray
    pv2g: np.ndarray
    g2l: np.ndarray
    soc: np.ndarray

    def __post_init__(self):
        for name in ("load", "gen", "ceiling", "ch", "dis", "pv2l", "pv2g", "g2l", "soc"):
            object.__setattr__(self, name, _ro(getattr(self, name)))
        T = len(self.load)
        if self.gen.shape != (N_CATEGORIES, T) or self.ceiling.shape != (N_CATEGORIES, T):
            raise ValidationError("gen/ceiling must have shape (5, T)")
        for name in ("ch", "dis", "pv2l", "pv2g", "g2l", "soc"):
            if getattr(self, name).shape != (T,):
                raise ValidationError(f"{name} must have length {T}")

    @property
    def n_hours(self) -> int:
        return len(self.load)

    @property
    def sc(self) -> np.ndarray:
        """Self-consumed PV, directly or via the battery."""
        return self.pv2l + self.dis

    @property
    def gen_total(self) -> np.ndarray:
        return self.gen.sum(axis=0)

    @property
    def curtailment(self) -> np.ndarray:
        return self.ceiling.sum(axis=0) - self.gen_total

    @classmethod
    def idle(cls, load: np.ndarray, ceiling: np.ndarray | None = None) -> "Dispatch":
        T = len(load)
        z = np.zeros(T)
        ceil = np.zeros((N_CATEGORIES, T)) if ceiling is None else ceiling
        return cls(load, np.zeros((N_CATEGORIES, T)), ceil, z, z, z, z, np.asarray(load, float), z)


@dataclass(frozen=True)
class InvestmentSolution:
    """Optimal capacities and operation of one customer group for one investment year."""

    start_year: int
    pv_caps: tuple[float, ...]
    bat_e: float
    bat_p: float
    dispatch: Dispatch
    objective: float
    lp_objective: float = 0.0
    subsets_solved: int = 0
    flagged_hours: tuple[int, ...] = ()
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if len(self.pv_caps) != N_CATEGORIES:
            raise ValidationError("pv_caps needs one entry per category")
        if min(self.pv_caps) < 0 or self.bat_e < 0 or self.bat_p < 0:
            raise ValidationError("capacities must be non-negative")

    @property
    def pv_total(self) -> float:
        return float(sum(self.pv_caps))

    @property
    def active(self) -> tuple[bool, ...]:
        return tuple(c > 0 for c in self.pv_caps)

    @property
    def c_rate(self) -> float:
        return self.bat_p / self.bat_e if self.bat_e > 0 else float("nan")

    @property
    def invests(self) -> bool:
        return self.pv_total > 0
