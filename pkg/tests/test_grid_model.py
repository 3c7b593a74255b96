import json
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from vtscuc.grid_model import (DEFAULT_SOLAR_PROFILE, Branch, CaseFormatError, CaseValidationError,
                               ModifiedRtsConfig, StorageUnit, bundled_case_path,
                               build_modified_rts_case, case_from_dict, demand, load_case,
                               save_case, solar_injection, total_demand, with_storage_size)

from .helpers import micro_case, storage_pair_case


@pytest.fixture(scope="module")
def base_rts():
    return load_case(bundled_case_path("ieee24_rts79.case"))


@pytest.fixture(scope="module")
def modified():
    return load_case(bundled_case_path())


def test_base_rts_dimensions(base_rts):
    assert len(base_rts.buses) == 24
    assert len(base_rts.branches) == 38
    assert len(base_rts.generators) == 32
    assert sum(base_rts.load_model.bus_peak_mw.values()) == pytest.approx(2850.0)
    assert sum(g.p_max_mw for g in base_rts.generators) == pytest.approx(3405.0)


def test_key_lines(base_rts):
    assert {(base_rts.branch(k).from_bus, base_rts.branch(k).to_bus) for k in (11, 19, 29)} == {
        (7, 8), (11, 14), (16, 19)}
    assert base_rts.branch(11).rating_mw == 175.0
    assert base_rts.branch(19).rating_mw == 500.0


def test_modified_case_matches_study_setup(modified):
    assert not {g.bus for g in modified.generators} & {2, 15, 16, 23}
    assert sum(sp.capacity_mw for sp in modified.solar_plants) == pytest.approx(1110.0)
    assert {sp.bus for sp in modified.solar_plants} == {14, 15, 16}
    assert sorted(es.bus for es in modified.storage_units) == [11, 14]
    assert all(es.p_charge_max_mw == 200.0 and es.e_max_mwh == 800.0
               for es in modified.storage_units)
    (vt,) = modified.vt_pairs
    assert vt.spanned_branch == 19
    assert modified.load_model.daily_peak_factor == 0.8


def test_bundled_file_equals_builder(base_rts, modified):
    built = build_modified_rts_case(base=base_rts)
    assert built == modified


def test_strict_mode_rejects_other_solar_total(base_rts):
    cfg = ModifiedRtsConfig(solar_split_mw={14: 300.0, 15: 300.0, 16: 300.0})
    with pytest.raises(ValueError, match="1110"):
        build_modified_rts_case(cfg, base_rts)
    cfg = replace(cfg, strict_paper=False)
    assert sum(sp.capacity_mw for sp in build_modified_rts_case(cfg, base_rts).solar_plants) == 900.0


def test_demand_formula(modified):
    lm = modified.load_model
    assert demand(modified, 18, 11) == pytest.approx(
        lm.bus_peak_mw[18] * 0.8 * lm.hourly_fraction[11])
    assert demand(modified, 11, 5) == 0.0
    assert total_demand(modified, 11) == pytest.approx(
        sum(demand(modified, n, 11) for n in modified.bus_ids))
    with pytest.raises(IndexError):
        demand(modified, 1, 24)


def test_solar_profile_shape(modified):
    assert len(DEFAULT_SOLAR_PROFILE) == 24
    assert max(DEFAULT_SOLAR_PROFILE) == 1.0
    assert all(v == 0.0 for v in DEFAULT_SOLAR_PROFILE[:6] + DEFAULT_SOLAR_PROFILE[19:])
    assert sum(solar_injection(modified, n, 12) for n in modified.bus_ids) == pytest.approx(1110.0)
    assert solar_injection(modified, 14, 2) == 0.0


def test_case_round_trip(tmp_path, modified):
    path = tmp_path / "c.case"
    save_case(modified, path)
    again = load_case(path)
    assert again == modified
    assert again.name == modified.name


def test_validation_names_missing_bus():
    case = micro_case()
    bad = replace(case.generators[0], bus=99)
    with pytest.raises(CaseValidationError, match="generator 1 references bus 99"):
        replace(case, generators=(bad, case.generators[1]))


@pytest.mark.parametrize("mutate, message", [
    (lambda c: replace(c, branches=c.branches[:1] + (replace(c.branches[1], reactance=0.0),)
                       + c.branches[2:]), "reactance"),
    (lambda c: replace(c, branches=(Branch(9, 1, 2, 0.1, 50.0),)), "disconnected"),
    (lambda c: replace(c, reference_bus=7), "reference bus"),
    (lambda c: replace(c, generators=(replace(c.generators[0], p_min_mw=500.0),)), "p_min"),
    (lambda c: replace(c, horizon_hours=3), "profile"),
    (lambda c: replace(c, branches=c.branches + (replace(c.branches[0], id=9, twin_of=42),)),
     "unknown branch 42"),
])
def test_validation_rejects(mutate, message):
    with pytest.raises(CaseValidationError, match=message):
        mutate(micro_case())


def test_storage_and_vt_validation():
    case = storage_pair_case([50.0, 60.0, 70.0])
    bad_es = replace(case.storage_units[0], e_initial_mwh=1000.0)
    with pytest.raises(CaseValidationError, match="initial energy"):
        replace(case, storage_units=(bad_es, case.storage_units[1]))
    moved = replace(case.storage_units[1], bus=4)
    with pytest.raises(CaseValidationError, match="not the endpoints"):
        replace(case, storage_units=(case.storage_units[0], moved))
    bad_eta = StorageUnit(3, 2, 0.0, 10.0, 1.0, 1.0, 1.2, 0.9)
    with pytest.raises(CaseValidationError, match="efficiencies"):
        replace(case, storage_units=case.storage_units + (bad_eta,))


def test_load_reports_json_position(tmp_path):
    path = tmp_path / "bad.case"
    path.write_text('{"buses": [\n  {"id": 1,}\n]}')
    with pytest.raises(CaseFormatError, match="line 2"):
        load_case(path)


def test_load_reports_schema_errors(tmp_path, modified):
    doc = json.loads(bundled_case_path().read_text())
    del doc["generators"][0]["p_max_mw"]
    with pytest.raises(CaseFormatError, match=r"generators\[0\].*p_max_mw"):
        case_from_dict(doc)
    doc = json.loads(bundled_case_path().read_text())
    doc["branches"][3]["colour"] = "red"
    with pytest.raises(CaseFormatError, match="colour"):
        case_from_dict(doc)


def test_with_storage_size(modified):
    sized = with_storage_size(modified, 300.0, 4.0)
    for es, old in zip(sized.storage_units, modified.storage_units):
        assert es.p_charge_max_mw == es.p_discharge_max_mw == 300.0
        assert es.e_max_mwh == 1200.0
        assert es.e_start == old.e_start
    small = with_storage_size(modified, 50.0, 4.0)
    assert all(es.e_start == 200.0 for es in small.storage_units)
    scaled = with_storage_size(modified, 300.0, 4.0, keep_initial_energy=False)
    for es, old in zip(scaled.storage_units, modified.storage_units):
        assert es.e_start / es.e_max_mwh == pytest.approx(old.e_start / old.e_max_mwh)
    empty = with_storage_size(modified, 0.0)
    assert not empty.storage_units and not empty.vt_pairs


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 120.0), min_size=1, max_size=6))
def test_storage_pair_case_always_valid(loads):
    case = storage_pair_case(loads)
    assert case.horizon_hours == len(loads)
    assert all(demand(case, 3, t) == pytest.approx(x) for t, x in enumerate(loads))
