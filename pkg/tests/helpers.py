"""Small hand-made cases and an independent dispatch oracle for the tests."""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

from vtscuc.grid_model import (Branch, Bus, Case, Generator, LoadModel, SolarPlant, StorageUnit,
                               VtPair)


def gen(id, bus, pmin, pmax, c, noload=0.0, startup=0.0, **kw):
    return Generator(id=id, bus=bus, p_min_mw=pmin, p_max_mw=pmax, cost_energy=c,
                     cost_noload=noload, cost_startup=startup, **kw)


def micro_case() -> Case:
    """3 buses in a triangle, 2 units, 2 hours; line 1-3 limits the cheap unit."""
    buses = tuple(Bus(i, f"b{i}", 138.0) for i in (1, 2, 3))
    branches = (
        Branch(1, 1, 2, 0.1, 200.0),
        Branch(2, 1, 3, 0.1, 70.0),
        Branch(3, 2, 3, 0.1, 200.0),
    )
    gens = (
        gen(1, 1, 20.0, 150.0, 10.0, noload=100.0, startup=200.0),
        gen(2, 2, 10.0, 100.0, 30.0, noload=50.0, startup=100.0),
    )
    load = LoadModel({3: 150.0}, (0.6, 1.0), daily_peak_factor=1.0)
    return Case(buses, branches, gens, (), (), (), load, horizon_hours=2, reference_bus=1,
                name="micro3")


def two_bus_case(rating: float = 60.0, hours: int = 2, fractions=(0.5, 1.0)) -> Case:
    """Cheap unit at bus 1, dear unit and all load at bus 2, one line between."""
    buses = (Bus(1, "a", 138.0), Bus(2, "b", 138.0))
    branches = (Branch(1, 1, 2, 0.05, rating),)
    gens = (gen(1, 1, 0.0, 200.0, 15.0), gen(2, 2, 0.0, 200.0, 40.0))
    load = LoadModel({2: 100.0}, tuple(fractions[:hours]), daily_peak_factor=1.0)
    return Case(buses, branches, gens, (), (), (), load, horizon_hours=hours, reference_bus=1,
                name="two_bus")


def storage_pair_case(loads, solar_mw=0.0, rating=80.0, power=40.0, energy=120.0) -> Case:
    """4-bus ring with a battery at each end of branch 2 (buses 2 and 3) and one VT pair."""
    T = len(loads)
    buses = tuple(Bus(i, f"b{i}", 138.0) for i in (1, 2, 3, 4))
    branches = (
        Branch(1, 1, 2, 0.08, 200.0),
        Branch(2, 2, 3, 0.10, rating),
        Branch(3, 3, 4, 0.08, 200.0),
        Branch(4, 4, 1, 0.12, 200.0),
    )
    gens = (gen(1, 1, 0.0, 300.0, 12.0), gen(2, 4, 0.0, 300.0, 35.0, noload=20.0, startup=50.0))
    peak = max(max(loads), 1e-9)
    load = LoadModel({3: peak}, tuple(x / peak for x in loads), daily_peak_factor=1.0)
    profile = tuple(0.0 if t % 3 else 1.0 for t in range(T))
    solar = (SolarPlant(1, 2, solar_mw, profile),) if solar_mw > 0 else ()
    storage = (
        StorageUnit(1, 2, 0.0, energy, power, power, 0.9, 0.9),
        StorageUnit(2, 3, 0.0, energy, power, power, 0.9, 0.9),
    )
    return Case(buses, branches, gens, solar, storage, (VtPair(1, 1, 2, 2),), load,
                horizon_hours=T, reference_bus=1, name="ring4")


# --------------------------------------------------------------------------- oracle


def dispatch_lp(case: Case, u: np.ndarray, extra_load: dict | None = None) -> float:
    """Cost of the best dispatch for a fixed commitment ``u[g, t]`` (no storage).

    Written against the case data directly with a bus-angle formulation so it
    shares no code with the model builder. Returns inf when infeasible.
    """
    extra_load = extra_load or {}
    T, G = case.horizon_hours, len(case.generators)
    buses = [b.id for b in case.buses]
    N = len(buses)
    pos = {n: i for i, n in enumerate(buses)}
    nP, nth = G * T, N * T
    cols = nP + nth

    def ip(g, t):
        return g * T + t

    def ith(n, t):
        return nP + pos[n] * T + t

    c = np.zeros(cols)
    bounds = [(0.0, 0.0)] * cols
    const = 0.0
    for g, unit in enumerate(case.generators):
        prev = 1.0 if unit.initial_on else 0.0
        for t in range(T):
            c[ip(g, t)] = unit.cost_energy * case.interval_hours
            bounds[ip(g, t)] = (unit.p_min_mw * u[g, t], unit.p_max_mw * u[g, t])
            const += unit.cost_noload * case.interval_hours * u[g, t]
            const += unit.cost_startup * max(0.0, u[g, t] - prev)
            prev = u[g, t]
    for n in buses:
        for t in range(T):
            bounds[ith(n, t)] = (0.0, 0.0) if n == case.reference_bus else (None, None)

    A_eq, b_eq, A_ub, b_ub = [], [], [], []
    lm = case.load_model
    for t in range(T):
        for n in buses:
            row = np.zeros(cols)
            for g, unit in enumerate(case.generators):
                if unit.bus == n:
                    row[ip(g, t)] += 1.0
            for br in case.branches:
                b = case.base_mva / br.reactance
                # flow leaving n on this branch, as an angle expression
                if br.from_bus == n:
                    row[ith(br.from_bus, t)] -= b
                    row[ith(br.to_bus, t)] += b
                elif br.to_bus == n:
                    row[ith(br.from_bus, t)] += b
                    row[ith(br.to_bus, t)] -= b
            d = lm.bus_peak_mw.get(n, 0.0) * lm.daily_peak_factor * lm.hourly_fraction[t]
            d += extra_load.get((n, t), 0.0)
            s = sum(sp.capacity_mw * sp.profile[t] for sp in case.solar_plants if sp.bus == n)
            A_eq.append(row)
            b_eq.append(d - s)
        for br in case.branches:
            b = case.base_mva / br.reactance
            row = np.zeros(cols)
            row[ith(br.from_bus, t)] = b
            row[ith(br.to_bus, t)] = -b
            A_ub += [row, -row]
            b_ub += [br.rating_mw, br.rating_mw]
        for g, unit in enumerate(case.generators):
            ramp = unit.ramp_hourly_mw if unit.ramp_hourly_mw is not None else unit.p_max_mw
            row = np.zeros(cols)
            if t == 0:
                row[ip(g, 0)] = 1.0
                A_ub += [row, -row]
                b_ub += [ramp + unit.initial_p_mw, ramp - unit.initial_p_mw]
            else:
                row[ip(g, t)], row[ip(g, t - 1)] = 1.0, -1.0
                A_ub += [row, -row]
                b_ub += [ramp, ramp]
    res = linprog(c, A_ub=np.array(A_ub), b_ub=np.array(b_ub), A_eq=np.array(A_eq),
                  b_eq=np.array(b_eq), bounds=bounds, method="highs-ipm")
    if res.status != 0:
        return np.inf
    return float(res.fun) + const


def enumerate_commitments(case: Case) -> tuple[float, np.ndarray]:
    """Exhaustive search over every on/off pattern; returns (best cost, best u)."""
    G, T = len(case.generators), case.horizon_hours
    best, best_u = np.inf, None
    for bits in itertools.product((0.0, 1.0), repeat=G * T):
        u = np.array(bits).reshape(G, T)
        cost = dispatch_lp(case, u)
        if cost < best:
            best, best_u = cost, u
    return best, best_u


def bridged_case() -> Case:
    """The micro triangle plus a pendant bus 4 (own unit and load) on a bridge."""
    base = micro_case()
    buses = base.buses + (Bus(4, "b4", 138.0),)
    branches = base.branches + (Branch(4, 3, 4, 0.2, 40.0),)
    gens = base.generators + (gen(3, 4, 0.0, 80.0, 20.0),)
    load = LoadModel({3: 150.0, 4: 30.0}, (0.6, 1.0), daily_peak_factor=1.0)
    return Case(buses, branches, gens, (), (), (), load, horizon_hours=2, reference_bus=1,
                name="bridged")
