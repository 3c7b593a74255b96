"""Regenerate the bundled case files from the RTS-79 tables.

    python tools/make_cases.py

Network, unit ratings, bus loads and quadratic cost coefficients are the
MATPOWER ``case24_ieee_rts`` values.  Each quadratic cost c2 p^2 + c1 p + c0
is replaced by its secant between p_min and p_max, which splits into an
energy slope c1 + c2 (p_min + p_max) and a no-load term c0 - c2 p_min p_max.
The synchronous condenser at bus 14 (no real power) is left out.
"""
from pathlib import Path

from vtscuc.grid_model import (
    BASE_RTS_CASE, MODIFIED_RTS_CASE, Branch, Bus, Case, Generator, LoadModel,
    build_modified_rts_case, save_case,
)

DATA = Path(__file__).resolve().parents[1] / "src" / "vtscuc" / "data"

BUS_PEAK_MW = {
    1: 108, 2: 97, 3: 180, 4: 74, 5: 71, 6: 136, 7: 125, 8: 171, 9: 175, 10: 195,
    11: 0, 12: 0, 13: 265, 14: 194, 15: 317, 16: 100, 17: 0, 18: 333, 19: 181,
    20: 128, 21: 0, 22: 0, 23: 0, 24: 0,
}

# summer weekday, percent of daily peak, hour-beginning 00:00 .. 23:00
SUMMER_WEEKDAY = (64, 60, 58, 56, 56, 58, 64, 76, 87, 95, 99, 100,
                  99, 100, 100, 97, 96, 96, 93, 92, 92, 93, 87, 72)

# from, to, x [pu], rating [MVA]; list order defines the branch number
BRANCHES = [
    (1, 2, 0.0139, 175), (1, 3, 0.2112, 175), (1, 5, 0.0845, 175), (2, 4, 0.1267, 175),
    (2, 6, 0.1920, 175), (3, 9, 0.1190, 175), (3, 24, 0.0839, 400), (4, 9, 0.1037, 175),
    (5, 10, 0.0883, 175), (6, 10, 0.0605, 175), (7, 8, 0.0614, 175), (8, 9, 0.1651, 175),
    (8, 10, 0.1651, 175), (9, 11, 0.0839, 400), (9, 12, 0.0839, 400), (10, 11, 0.0839, 400),
    (10, 12, 0.0839, 400), (11, 13, 0.0476, 500), (11, 14, 0.0418, 500), (12, 13, 0.0476, 500),
    (12, 23, 0.0966, 500), (13, 23, 0.0865, 500), (14, 16, 0.0389, 500), (15, 16, 0.0173, 500),
    (15, 21, 0.0490, 500), (15, 21, 0.0490, 500), (15, 24, 0.0519, 500), (16, 17, 0.0259, 500),
    (16, 19, 0.0231, 500), (17, 18, 0.0144, 500), (17, 22, 0.1053, 500), (18, 21, 0.0259, 500),
    (18, 21, 0.0259, 500), (19, 20, 0.0396, 500), (19, 20, 0.0396, 500), (20, 23, 0.0216, 500),
    (20, 23, 0.0216, 500), (21, 22, 0.0678, 500),
]
GENERATION_TIES = {11}  # 7-8 is the only path out of bus 7

# unit type: p_min, p_max, (c2, c1, c0), ramp MW/min (None: hydro, no limit)
UNIT_TYPES = {
    "U20": (16.0, 20.0, (0.0, 130.0, 400.6849), 3),
    "U76": (15.2, 76.0, (0.014142, 16.0811, 212.3076), 2),
    "U100": (25.0, 100.0, (0.052672, 43.6615, 781.521), 7),
    "U197": (69.0, 197.0, (0.00717, 48.5804, 832.7575), 3),
    "U12": (2.4, 12.0, (0.328412, 56.564, 86.3852), 1),
    "U155": (54.3, 155.0, (0.008342, 12.3883, 382.2391), 3),
    "U400": (100.0, 400.0, (0.000213, 4.4231, 395.3749), 20),
    "U50": (10.0, 50.0, (0.0, 0.001, 0.001), None),
    "U350": (140.0, 350.0, (0.004895, 11.8495, 665.1094), 4),
}
STARTUP_COST = 1500.0

# MATPOWER unit order (sync condenser, unit 15, omitted)
UNITS = [
    (1, 1, "U20"), (2, 1, "U20"), (3, 1, "U76"), (4, 1, "U76"),
    (5, 2, "U20"), (6, 2, "U20"), (7, 2, "U76"), (8, 2, "U76"),
    (9, 7, "U100"), (10, 7, "U100"), (11, 7, "U100"),
    (12, 13, "U197"), (13, 13, "U197"), (14, 13, "U197"),
    (16, 15, "U12"), (17, 15, "U12"), (18, 15, "U12"), (19, 15, "U12"), (20, 15, "U12"),
    (21, 15, "U155"), (22, 16, "U155"), (23, 18, "U400"), (24, 21, "U400"),
    (25, 22, "U50"), (26, 22, "U50"), (27, 22, "U50"), (28, 22, "U50"), (29, 22, "U50"),
    (30, 22, "U50"), (31, 23, "U155"), (32, 23, "U155"), (33, 23, "U350"),
]


def linearize(p_min, p_max, coeffs):
    c2, c1, c0 = coeffs
    return c1 + c2 * (p_min + p_max), c0 - c2 * p_min * p_max


def base_case() -> Case:
    gens = []
    for gid, bus, kind in UNITS:
        p_min, p_max, coeffs, ramp = UNIT_TYPES[kind]
        slope, noload = linearize(p_min, p_max, coeffs)
        gens.append(Generator(
            id=gid, bus=bus, p_min_mw=p_min, p_max_mw=p_max,
            cost_energy=round(slope, 6), cost_noload=round(noload, 6),
            cost_startup=STARTUP_COST,
            ramp_hourly_mw=None if ramp is None else 60.0 * ramp,
            unit_type=kind,
        ))
    return Case(
        buses=tuple(Bus(id=n, name=f"bus{n}", voltage_kv=138.0 if n <= 10 else 230.0)
                    for n in range(1, 25)),
        branches=tuple(Branch(id=i + 1, from_bus=f, to_bus=t, reactance=x, rating_mw=float(r),
                              switchable=(i + 1) not in GENERATION_TIES)
                       for i, (f, t, x, r) in enumerate(BRANCHES)),
        generators=tuple(gens),
        solar_plants=(),
        storage_units=(),
        vt_pairs=(),
        load_model=LoadModel(bus_peak_mw={n: float(v) for n, v in BUS_PEAK_MW.items()},
                             hourly_fraction=tuple(p / 100 for p in SUMMER_WEEKDAY),
                             daily_peak_factor=1.0),
        reference_bus=13,
        name="ieee24_rts79",
        notes=(
            "RTS-79 network and units (MATPOWER case24_ieee_rts numbering)",
            "costs: secant linearization of the quadratic cost between p_min and p_max",
            f"startup cost {STARTUP_COST:g} $ per start for every unit",
            "ramp rates: RTS MW/min x 60; hydro units unlimited",
            "load: summer weekday hourly profile, percent of daily peak",
            "branch 11 (7-8) is a generation tie and not switchable",
        ),
    )


if __name__ == "__main__":
    base = base_case()
    save_case(base, DATA / BASE_RTS_CASE)
    save_case(build_modified_rts_case(base=base), DATA / MODIFIED_RTS_CASE)
    print("wrote", DATA / BASE_RTS_CASE, DATA / MODIFIED_RTS_CASE)
