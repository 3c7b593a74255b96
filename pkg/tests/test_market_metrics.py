from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vtscuc import market_metrics as mm
from vtscuc.formulation import SchemeId, build
from vtscuc.grid_model import LoadModel
from vtscuc.solve_gateway import SolverConfig, resolve_lp_fixed, solve_mip

from .helpers import dispatch_lp, micro_case, storage_pair_case, two_bus_case

EXACT = SolverConfig(mip_gap=1e-9)


def _solve(case, scheme=SchemeId.SCUC):
    model = build(case, scheme)
    mip = solve_mip(model, EXACT)
    return mip, resolve_lp_fixed(model, mip, EXACT)


def test_lmp_matrix_shape_and_lookup():
    case = two_bus_case()
    _, lp = _solve(case)
    lmp = mm.compute_lmp(lp, case)
    assert lmp.buses == (1, 2) and lmp.hours == 2
    assert lmp.at(2, 1) == pytest.approx(40.0)


def test_uncongested_hour_has_uniform_price():
    case = two_bus_case()
    _, lp = _solve(case)
    lmp = mm.compute_lmp(lp, case)
    # hour 0: 50 MW fits on the 60 MW line, the cheap unit is marginal everywhere
    assert lmp.values[:, 0] == pytest.approx([15.0, 15.0], abs=1e-7)


@pytest.mark.parametrize("bus, hour", [(1, 0), (2, 0), (1, 1), (2, 1)])
def test_lmp_matches_finite_difference(bus, hour):
    case = two_bus_case()
    mip, lp = _solve(case)
    u = np.round([[mip.value("u_gt", g, t) for t in range(2)] for g in (1, 2)])
    base = dispatch_lp(case, u)
    bumped = dispatch_lp(case, u, {(bus, hour): 1.0})
    assert bumped - base == pytest.approx(lp.dual("balance", bus, hour), rel=0.01)


def test_load_payment_two_bus():
    case = two_bus_case()
    _, lp = _solve(case)
    lmp = mm.compute_lmp(lp, case)
    assert mm.load_payment(lmp, case) == pytest.approx(50.0 * 15.0 + 100.0 * 40.0)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 2), elements=st.floats(-100.0, 500.0)))
def test_load_payment_is_the_double_sum(prices):
    case = micro_case()
    lmp = mm.LmpMatrix((1, 2, 3), prices)
    expected = 0.0
    for i, n in enumerate((1, 2, 3)):
        for t in range(2):
            peak = case.load_model.bus_peak_mw.get(n, 0.0)
            expected += peak * case.load_model.hourly_fraction[t] * prices[i, t]
    assert mm.load_payment(lmp, case) == pytest.approx(expected, rel=1e-12, abs=1e-9)


def test_load_payment_checks_dimensions():
    lmp = mm.LmpMatrix((1, 2), np.zeros((2, 2)))
    with pytest.raises(mm.MetricsError):
        mm.load_payment(lmp, micro_case())


def test_lmp_rejects_nan():
    with pytest.raises(mm.MetricsError, match="non-finite"):
        mm.LmpMatrix((1,), np.array([[np.nan]]))


def test_congestion_stats_micro():
    case = micro_case()
    _, lp = _solve(case)
    rep = mm.congestion_stats(lp, case)
    assert rep.binding_lines() == {2}
    assert rep.binding_hours(2) == [1]
    assert rep.avg_congested_per_hour == pytest.approx(0.5)
    assert rep.utilization[(2, 0)] == pytest.approx(60.0 / 70.0)
    assert {(k, t) for k, t, _ in rep.stressed_line_hours} >= {(2, 0), (2, 1)}


def test_open_branch_never_binds():
    case = micro_case()
    sol = SimpleNamespace(model=SimpleNamespace(has_var=lambda *a: True),
                          value=lambda kind, k, t: 0.0 if kind == "J_kt" else 70.0)
    rep = mm.congestion_stats(sol, case)
    assert rep.binding_line_hours == []


def test_settlement_and_reduction():
    case = two_bus_case()
    mip, lp = _solve(case)
    lmp = mm.compute_lmp(lp, case)
    rep = mm.settlement(mip, lmp, case, benchmark_cost=2 * mip.objective)
    assert rep.cost_reduction_vs_benchmark == pytest.approx(0.5)
    assert mm.cost_reduction(90.0, 100.0) == pytest.approx(0.1)
    with pytest.raises(mm.MetricsError):
        mm.cost_reduction(1.0, 0.0)


def test_storage_profile_rederives_energy():
    case = storage_pair_case([40.0, 120.0, 130.0, 60.0], solar_mw=30.0, rating=60.0)
    _, lp = _solve(case, SchemeId.SCUC_VT)
    prof = mm.storage_profile(lp, case)
    assert prof.max_recurrence_residual <= 1e-6
    assert np.allclose(prof.energy, prof.energy_rederived, atol=1e-6)
    assert mm.system_balance_residual(lp, case) <= 1e-6


def test_storage_profile_flags_broken_trace():
    case = storage_pair_case([40.0, 120.0, 60.0], rating=60.0)
    _, lp = _solve(case, SchemeId.SCUC_BESS)
    broken = replace(lp, values=lp.values.copy())
    broken.values[lp.model.var("E_et", 1, 1).index] += 1.0
    with pytest.raises(mm.MetricsError, match="recurrence"):
        mm.storage_profile(broken, case)


def test_storage_profile_needs_storage():
    case = micro_case()
    _, lp = _solve(case)
    with pytest.raises(mm.MetricsError):
        mm.storage_profile(lp, case)


def test_lmp_difference():
    a = mm.LmpMatrix((1, 2), np.array([[1.0, 2.0], [3.0, 4.0]]))
    b = mm.LmpMatrix((1, 2), np.ones((2, 2)))
    assert mm.lmp_difference(a, b).tolist() == [[0.0, 1.0], [2.0, 3.0]]
    with pytest.raises(mm.MetricsError):
        mm.lmp_difference(a, mm.LmpMatrix((1,), np.ones((1, 2))))


def test_heavier_load_raises_payment():
    case = two_bus_case()
    heavy = replace(case, load_model=LoadModel({2: 110.0}, (0.5, 1.0), 1.0))
    _, lp1 = _solve(case)
    _, lp2 = _solve(heavy)
    p1 = mm.load_payment(mm.compute_lmp(lp1, case), case)
    p2 = mm.load_payment(mm.compute_lmp(lp2, heavy), heavy)
    assert p2 > p1
