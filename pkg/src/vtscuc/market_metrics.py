"""Prices, settlement, congestion statistics and battery profiles.

All functions are pure: they read a solved model and the case and return
plain result objects.  Prices are in $/MWh, powers in MW, energies in MWh.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .formulation import Tag
from .grid_model import Case, demand

BINDING_TOL = 1e-4
STRESS_THRESHOLD = 0.70
ENERGY_TOL_MWH = 1e-6


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class LmpMatrix:
    buses: tuple[int, ...]
    values: np.ndarray  # shape (len(buses), T)

    def __post_init__(self):
        if self.values.shape[0] != len(self.buses):
            raise MetricsError("LMP matrix rows do not match bus list")
        if not np.all(np.isfinite(self.values)):
            raise MetricsError("LMP matrix has non-finite entries")

    def at(self, n: int, t: int) -> float:
        return float(self.values[self.buses.index(n), t])

    @property
    def hours(self) -> int:
        return self.values.shape[1]


@dataclass
class CongestionReport:
    binding_line_hours: list[tuple[int, int, float]]
    avg_congested_per_hour: float
    stressed_line_hours: list[tuple[int, int, float]]
    utilization: dict[tuple[int, int], float] = field(default_factory=dict)

    def binding_lines(self) -> set[int]:
        return {k for k, _, _ in self.binding_line_hours}

    def binding_hours(self, branch: int) -> list[int]:
        return [t for k, t, _ in self.binding_line_hours if k == branch]


@dataclass
class SettlementReport:
    total_cost: float
    load_payment: float
    cost_reduction_vs_benchmark: float | None = None


@dataclass
class StorageProfile:
    units: tuple[int, ...]
    charge: np.ndarray  # (units, T)
    discharge: np.ndarray
    energy: np.ndarray
    energy_rederived: np.ndarray
    max_recurrence_residual: float


def compute_lmp(lp, case: Case) -> LmpMatrix:
    """LMP[n, t] = dual of the nodal balance row.

    Balance rows are written as injections = demand - solar, so the dual
    d(cost)/d(rhs) is already the price of one more MW of load.
    """
    buses = tuple(case.bus_ids)
    values = np.empty((len(buses), case.horizon_hours))
    for i, n in enumerate(buses):
        for t in case.hours:
            tag = Tag("balance", n, t)
            if tag not in lp.duals:
                raise MetricsError(f"no dual for {tag}")
            values[i, t] = lp.duals[tag]
    return LmpMatrix(buses, values)


def demand_matrix(case: Case) -> np.ndarray:
    return np.array([[demand(case, n, t) for t in case.hours] for n in case.bus_ids])


def load_payment(lmp: LmpMatrix, case: Case) -> float:
    """Sum over buses and hours of native demand times LMP.

    Battery charging is not counted as load here.
    """
    d = demand_matrix(case)
    if d.shape != lmp.values.shape or tuple(case.bus_ids) != lmp.buses:
        raise MetricsError("LMP matrix does not match the case dimensions")
    return float(np.sum(d * lmp.values))


def branch_in_service(solution, k: int, t: int) -> bool:
    model = solution.model
    if model.has_var("J_kt", k, t):
        return solution.value("J_kt", k, t) > 0.5
    return True


def congestion_stats(solution, case: Case, binding_tol: float = BINDING_TOL,
                     stress_threshold: float = STRESS_THRESHOLD) -> CongestionReport:
    """Binding iff |flow| >= (1 - binding_tol) * rating; open branches never bind."""
    binding, stressed, util = [], [], {}
    for br in case.branches:
        for t in case.hours:
            if not branch_in_service(solution, br.id, t):
                continue
            u = abs(solution.value("P_kt", br.id, t)) / br.rating_mw
            util[(br.id, t)] = u
            if u >= 1.0 - binding_tol:
                binding.append((br.id, t, u))
            if u >= stress_threshold:
                stressed.append((br.id, t, u))
    return CongestionReport(binding, len(binding) / case.horizon_hours, stressed, util)


def settlement(mip, lmp: LmpMatrix, case: Case,
               benchmark_cost: float | None = None) -> SettlementReport:
    reduction = None
    if benchmark_cost is not None:
        if not benchmark_cost > 0:
            raise MetricsError(f"benchmark cost must be positive, got {benchmark_cost}")
        reduction = 1.0 - mip.objective / benchmark_cost
    return SettlementReport(mip.objective, load_payment(lmp, case), reduction)


def cost_reduction(cost: float, benchmark_cost: float) -> float:
    if not benchmark_cost > 0:
        raise MetricsError(f"benchmark cost must be positive, got {benchmark_cost}")
    return 1.0 - cost / benchmark_cost


def storage_profile(solution, case: Case, tol: float = ENERGY_TOL_MWH) -> StorageProfile:
    """Per-unit charge/discharge/energy series, with the energy trace re-derived
    from the charge/discharge series and checked hour by hour."""
    model = solution.model
    if not case.storage_units or not model.has_var("E_et", case.storage_units[0].id, 0):
        raise MetricsError("solution has no storage variables")
    T, dt = case.horizon_hours, case.interval_hours
    units = tuple(es.id for es in case.storage_units)
    pc = np.array([[solution.value("P_c_et", e, t) for t in range(T)] for e in units])
    pd = np.array([[solution.value("P_d_et", e, t) for t in range(T)] for e in units])
    en = np.array([[solution.value("E_et", e, t) for t in range(T)] for e in units])
    rederived = np.empty_like(en)
    worst = 0.0
    for i, es in enumerate(case.storage_units):
        delta = (es.eta_charge * pc[i] - pd[i] / es.eta_discharge) * dt
        rederived[i] = es.e_start + np.cumsum(delta)
        prev = np.concatenate(([es.e_start], en[i, :-1]))
        worst = max(worst, float(np.max(np.abs(en[i] - prev - delta))))
    if worst > tol:
        raise MetricsError(f"energy recurrence off by {worst:.3g} MWh (tolerance {tol:g})")
    return StorageProfile(units, pc, pd, en, rederived, worst)


def lmp_difference(a: LmpMatrix, b: LmpMatrix) -> np.ndarray:
    if a.buses != b.buses or a.values.shape != b.values.shape:
        raise MetricsError(f"LMP shapes differ: {a.values.shape} vs {b.values.shape}")
    return a.values - b.values


def system_balance_residual(solution, case: Case) -> float:
    """Largest hourly mismatch of generation + solar + discharge vs load + charge."""
    model = solution.model
    worst = 0.0
    for t in case.hours:
        supply = sum(solution.value("P_gt", g.id, t) for g in case.generators)
        supply += sum(sp.capacity_mw * sp.profile[t] for sp in case.solar_plants)
        use = sum(demand(case, n, t) for n in case.bus_ids)
        for es in case.storage_units:
            if model.has_var("P_c_et", es.id, t):
                supply += solution.value("P_d_et", es.id, t)
                use += solution.value("P_c_et", es.id, t)
        worst = max(worst, abs(supply - use))
    return worst


def is_finite(x: float) -> bool:
    return x is not None and math.isfinite(x)
