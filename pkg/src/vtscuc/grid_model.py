"""Grid data model, case-file I/O and the modified 24-bus study case.

A :class:`Case` is an immutable snapshot of everything the scheduling models
need: network, thermal units, fixed solar injections, storage units, virtual
transmission pairs and the hourly load model.  Case files are JSON documents
with the top-level sections ``buses``, ``branches``, ``generators``,
``solar``, ``storage``, ``vt_pairs``, ``load`` and ``meta``.
"""
from __future__ import annotations

import json
import math
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import networkx as nx

DATA_PACKAGE = "vtscuc.data"
BASE_RTS_CASE = "ieee24_rts79.case"
MODIFIED_RTS_CASE = "ieee24_modified.case"

PAPER_SOLAR_TOTAL_MW = 1110.0
PAPER_SOLAR_BUSES = (14, 15, 16)
PAPER_REMOVED_GEN_BUSES = (2, 15, 16, 23)
PAPER_DAILY_PEAK_FACTOR = 0.80

# Symmetric bell, nonzero 06:00-19:00, flat top 11:00-14:00 (hour-beginning index).
DEFAULT_SOLAR_PROFILE = (
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    0.05, 0.20, 0.40, 0.60, 0.80, 1.0,
    1.0, 1.0, 0.80, 0.60, 0.40, 0.20,
    0.05, 0.0, 0.0, 0.0, 0.0, 0.0,
)


class CaseError(ValueError):
    """Base class for case-file problems."""


class CaseFormatError(CaseError):
    """The file could not be parsed into the case schema."""


class CaseValidationError(CaseError):
    """The case parsed but violates a structural invariant."""


@dataclass(frozen=True)
class Bus:
    id: int
    name: str = ""
    voltage_kv: float = 0.0


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    reactance: float
    rating_mw: float
    switchable: bool = True
    twin_of: int | None = None  # set on parallel duplicates created by add_parallel_line


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_min_mw: float
    p_max_mw: float
    cost_energy: float
    cost_noload: float = 0.0
    cost_startup: float = 0.0
    ramp_hourly_mw: float | None = None
    initial_on: bool = False
    initial_p_mw: float = 0.0
    unit_type: str = ""

    @property
    def ramp_mw(self) -> float:
        # Missing ramp data falls back to a non-binding p_max per hour.
        return self.p_max_mw if self.ramp_hourly_mw is None else self.ramp_hourly_mw


@dataclass(frozen=True)
class SolarPlant:
    id: int
    bus: int
    capacity_mw: float
    profile: tuple[float, ...]


@dataclass(frozen=True)
class StorageUnit:
    id: int
    bus: int
    e_min_mwh: float
    e_max_mwh: float
    p_charge_max_mw: float
    p_discharge_max_mw: float
    eta_charge: float = 0.95
    eta_discharge: float = 0.95
    e_initial_mwh: float | None = None

    @property
    def e_start(self) -> float:
        if self.e_initial_mwh is None:
            return 0.5 * self.e_max_mwh
        return self.e_initial_mwh


@dataclass(frozen=True)
class VtPair:
    id: int
    storage_a: int
    storage_b: int
    spanned_branch: int


@dataclass(frozen=True)
class LoadModel:
    bus_peak_mw: Mapping[int, float]
    hourly_fraction: tuple[float, ...]
    daily_peak_factor: float = PAPER_DAILY_PEAK_FACTOR


@dataclass(frozen=True)
class Case:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    solar_plants: tuple[SolarPlant, ...]
    storage_units: tuple[StorageUnit, ...]
    vt_pairs: tuple[VtPair, ...]
    load_model: LoadModel
    horizon_hours: int = 24
    interval_hours: float = 1.0
    reference_bus: int = 1
    base_mva: float = 100.0
    name: str = ""
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        validate_case(self)

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def bus_position(self, n: int) -> int:
        for pos, bus in enumerate(self.buses):
            if bus.id == n:
                return pos
        raise KeyError(f"unknown bus {n}")

    def branch(self, k: int) -> Branch:
        for br in self.branches:
            if br.id == k:
                return br
        raise KeyError(f"unknown branch {k}")

    def generator(self, g: int) -> Generator:
        for gen in self.generators:
            if gen.id == g:
                return gen
        raise KeyError(f"unknown generator {g}")

    def storage(self, e: int) -> StorageUnit:
        for unit in self.storage_units:
            if unit.id == e:
                return unit
        raise KeyError(f"unknown storage unit {e}")

    @property
    def hours(self) -> range:
        return range(self.horizon_hours)


# --------------------------------------------------------------------------- validation


def _fail(msg: str) -> None:
    raise CaseValidationError(msg)


def validate_case(case: Case) -> None:
    """Check referential integrity and per-entity invariants.

    Raises :class:`CaseValidationError` naming the entity and the violated rule.
    """
    T = case.horizon_hours
    if T <= 0:
        _fail(f"horizon_hours must be positive, got {T}")
    if case.interval_hours <= 0:
        _fail(f"interval_hours must be positive, got {case.interval_hours}")
    if case.base_mva <= 0:
        _fail(f"base_mva must be positive, got {case.base_mva}")

    bus_ids = [b.id for b in case.buses]
    if not bus_ids:
        _fail("case has no buses")
    if len(set(bus_ids)) != len(bus_ids):
        _fail("bus ids are not unique")
    known = set(bus_ids)
    if case.reference_bus not in known:
        _fail(f"reference bus {case.reference_bus} does not exist")

    for kind, items in (("branch", case.branches), ("generator", case.generators),
                        ("solar plant", case.solar_plants), ("storage unit", case.storage_units),
                        ("vt pair", case.vt_pairs)):
        ids = [x.id for x in items]
        if len(set(ids)) != len(ids):
            _fail(f"{kind} ids are not unique")

    branch_ids = {br.id for br in case.branches}
    for br in case.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in known:
                _fail(f"branch {br.id} references bus {end}, which does not exist")
        if br.from_bus == br.to_bus:
            _fail(f"branch {br.id} has identical endpoints ({br.from_bus})")
        if not br.reactance > 0:
            _fail(f"branch {br.id} reactance must be > 0, got {br.reactance}")
        if not br.rating_mw > 0:
            _fail(f"branch {br.id} rating must be > 0, got {br.rating_mw}")
        if br.twin_of is not None and br.twin_of not in branch_ids:
            _fail(f"branch {br.id} is a twin of unknown branch {br.twin_of}")

    for gen in case.generators:
        if gen.bus not in known:
            _fail(f"generator {gen.id} references bus {gen.bus}, which does not exist")
        if gen.p_min_mw < 0 or gen.p_max_mw < gen.p_min_mw:
            _fail(f"generator {gen.id} needs 0 <= p_min <= p_max, got [{gen.p_min_mw}, {gen.p_max_mw}]")
        if min(gen.cost_energy, gen.cost_noload, gen.cost_startup) < 0:
            _fail(f"generator {gen.id} has a negative cost coefficient")
        if gen.ramp_hourly_mw is not None and not gen.ramp_hourly_mw > 0:
            _fail(f"generator {gen.id} ramp rate must be > 0, got {gen.ramp_hourly_mw}")
        if gen.initial_p_mw < 0 or (not gen.initial_on and gen.initial_p_mw > 0):
            _fail(f"generator {gen.id} initial output inconsistent with initial status")

    for sp in case.solar_plants:
        if sp.bus not in known:
            _fail(f"solar plant {sp.id} references bus {sp.bus}, which does not exist")
        if sp.capacity_mw < 0:
            _fail(f"solar plant {sp.id} capacity must be >= 0")
        if len(sp.profile) != T:
            _fail(f"solar plant {sp.id} profile has {len(sp.profile)} values, horizon is {T}")
        if any(not 0.0 <= f <= 1.0 for f in sp.profile):
            _fail(f"solar plant {sp.id} profile fractions must lie in [0, 1]")

    for es in case.storage_units:
        if es.bus not in known:
            _fail(f"storage unit {es.id} references bus {es.bus}, which does not exist")
        if es.e_min_mwh < 0 or not es.e_max_mwh > es.e_min_mwh:
            _fail(f"storage unit {es.id} needs 0 <= e_min < e_max")
        if not (es.p_charge_max_mw > 0 and es.p_discharge_max_mw > 0):
            _fail(f"storage unit {es.id} power ratings must be > 0")
        if not (0 < es.eta_charge <= 1 and 0 < es.eta_discharge <= 1):
            _fail(f"storage unit {es.id} efficiencies must lie in (0, 1]")
        if not es.e_min_mwh <= es.e_start <= es.e_max_mwh:
            _fail(f"storage unit {es.id} initial energy {es.e_start} outside [{es.e_min_mwh}, {es.e_max_mwh}]")

    storage_by_id = {es.id: es for es in case.storage_units}
    branch_by_id = {br.id: br for br in case.branches}
    for vt in case.vt_pairs:
        if vt.storage_a == vt.storage_b:
            _fail(f"vt pair {vt.id} uses storage unit {vt.storage_a} twice")
        for e in (vt.storage_a, vt.storage_b):
            if e not in storage_by_id:
                _fail(f"vt pair {vt.id} references storage unit {e}, which does not exist")
        if vt.spanned_branch not in branch_by_id:
            _fail(f"vt pair {vt.id} references branch {vt.spanned_branch}, which does not exist")
        br = branch_by_id[vt.spanned_branch]
        ends = {storage_by_id[vt.storage_a].bus, storage_by_id[vt.storage_b].bus}
        if ends != {br.from_bus, br.to_bus}:
            _fail(f"vt pair {vt.id}: storage buses {sorted(ends)} are not the endpoints "
                  f"{br.from_bus}-{br.to_bus} of branch {br.id}")

    lm = case.load_model
    if len(lm.hourly_fraction) != T:
        _fail(f"load profile has {len(lm.hourly_fraction)} values, horizon is {T}")
    if any(not 0.0 <= f <= 1.0 for f in lm.hourly_fraction):
        _fail("load hourly fractions must lie in [0, 1]")
    if lm.daily_peak_factor < 0:
        _fail("load daily_peak_factor must be >= 0")
    for n, peak in lm.bus_peak_mw.items():
        if n not in known:
            _fail(f"load references bus {n}, which does not exist")
        if peak < 0:
            _fail(f"load at bus {n} is negative")

    graph = nx.MultiGraph()
    graph.add_nodes_from(bus_ids)
    graph.add_edges_from((br.from_bus, br.to_bus) for br in case.branches)
    if len(bus_ids) > 1 and not nx.is_connected(graph):
        _fail("network disconnected")


# --------------------------------------------------------------------------- injections


def _check_hour(case: Case, t: int) -> None:
    if not 0 <= t < case.horizon_hours:
        raise IndexError(f"hour {t} outside horizon 0..{case.horizon_hours - 1}")


def demand(case: Case, n: int, t: int) -> float:
    """Native load at bus ``n`` in hour ``t`` [MW]."""
    _check_hour(case, t)
    if n not in case.bus_ids:
        raise IndexError(f"unknown bus {n}")
    lm = case.load_model
    return lm.bus_peak_mw.get(n, 0.0) * lm.daily_peak_factor * lm.hourly_fraction[t]


def solar_injection(case: Case, n: int, t: int) -> float:
    """Fixed solar output at bus ``n`` in hour ``t`` [MW]; never a decision."""
    _check_hour(case, t)
    if n not in case.bus_ids:
        raise IndexError(f"unknown bus {n}")
    return sum(sp.capacity_mw * sp.profile[t] for sp in case.solar_plants if sp.bus == n)


def total_demand(case: Case, t: int) -> float:
    return sum(demand(case, n, t) for n in case.bus_ids)


# --------------------------------------------------------------------------- case files


def _case_to_dict(case: Case) -> dict[str, Any]:
    return {
        "meta": {
            "name": case.name,
            "horizon_hours": case.horizon_hours,
            "interval_hours": case.interval_hours,
            "reference_bus": case.reference_bus,
            "base_mva": case.base_mva,
            "notes": list(case.notes),
        },
        "buses": [asdict(b) for b in case.buses],
        "branches": [asdict(b) for b in case.branches],
        "generators": [asdict(g) for g in case.generators],
        "solar": [dict(asdict(s), profile=list(s.profile)) for s in case.solar_plants],
        "storage": [asdict(s) for s in case.storage_units],
        "vt_pairs": [asdict(v) for v in case.vt_pairs],
        "load": {
            "bus_peak_mw": {str(n): v for n, v in case.load_model.bus_peak_mw.items()},
            "hourly_fraction": list(case.load_model.hourly_fraction),
            "daily_peak_factor": case.load_model.daily_peak_factor,
        },
    }


def save_case(case: Case, path: str | Path) -> None:
    Path(path).write_text(json.dumps(_case_to_dict(case), indent=1) + "\n")


def _records(doc: Mapping[str, Any], section: str, cls: type, convert=None) -> tuple:
    raw = doc.get(section, [])
    if not isinstance(raw, list):
        raise CaseFormatError(f"section '{section}' must be a list")
    names = {f.name for f in fields(cls)}
    out = []
    for i, rec in enumerate(raw):
        where = f"{section}[{i}]"
        if not isinstance(rec, dict):
            raise CaseFormatError(f"{where}: expected an object")
        unknown = set(rec) - names
        if unknown:
            raise CaseFormatError(f"{where}: unknown field(s) {sorted(unknown)}")
        missing = {f.name for f in fields(cls) if _is_required(f)} - set(rec)
        if missing:
            raise CaseFormatError(f"{where}: missing field(s) {sorted(missing)}")
        rec = dict(rec)
        if convert is not None:
            rec = convert(rec)
        try:
            out.append(cls(**rec))
        except (TypeError, ValueError) as exc:
            raise CaseFormatError(f"{where}: {exc}") from exc
    return tuple(out)


def _is_required(f) -> bool:
    return f.default is MISSING and f.default_factory is MISSING


def _number_fields(cls: type, rec: dict) -> dict:
    for f in fields(cls):
        v = rec.get(f.name)
        if f.type in ("float", "float | None") and v is not None:
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise CaseFormatError(f"field '{f.name}' must be a finite number, got {v!r}")
            rec[f.name] = float(v)
        elif f.type in ("int", "int | None") and v is not None:
            if not isinstance(v, int) or isinstance(v, bool):
                raise CaseFormatError(f"field '{f.name}' must be an integer, got {v!r}")
    return rec


def case_from_dict(doc: Mapping[str, Any]) -> Case:
    if not isinstance(doc, dict):
        raise CaseFormatError("case file must contain a JSON object")
    for section in ("buses", "branches", "generators", "load", "meta"):
        if section not in doc:
            raise CaseFormatError(f"missing top-level section '{section}'")

    def typed(cls):
        def conv(rec):
            if cls is SolarPlant:
                prof = rec.get("profile")
                if not isinstance(prof, list):
                    raise CaseFormatError("solar profile must be a list")
                rec["profile"] = tuple(float(x) for x in prof)
            return _number_fields(cls, rec)
        return conv

    meta = doc["meta"]
    load = doc["load"]
    if not isinstance(load, dict) or not {"bus_peak_mw", "hourly_fraction"} <= set(load):
        raise CaseFormatError("section 'load' needs bus_peak_mw and hourly_fraction")
    try:
        load_model = LoadModel(
            bus_peak_mw={int(k): float(v) for k, v in load["bus_peak_mw"].items()},
            hourly_fraction=tuple(float(x) for x in load["hourly_fraction"]),
            daily_peak_factor=float(load.get("daily_peak_factor", PAPER_DAILY_PEAK_FACTOR)),
        )
    except (TypeError, ValueError, AttributeError) as exc:
        raise CaseFormatError(f"load: {exc}") from exc

    return Case(
        buses=_records(doc, "buses", Bus, typed(Bus)),
        branches=_records(doc, "branches", Branch, typed(Branch)),
        generators=_records(doc, "generators", Generator, typed(Generator)),
        solar_plants=_records(doc, "solar", SolarPlant, typed(SolarPlant)),
        storage_units=_records(doc, "storage", StorageUnit, typed(StorageUnit)),
        vt_pairs=_records(doc, "vt_pairs", VtPair, typed(VtPair)),
        load_model=load_model,
        horizon_hours=int(meta.get("horizon_hours", 24)),
        interval_hours=float(meta.get("interval_hours", 1.0)),
        reference_bus=int(meta.get("reference_bus", 1)),
        base_mva=float(meta.get("base_mva", 100.0)),
        name=str(meta.get("name", "")),
        notes=tuple(meta.get("notes", ())),
    )


def load_case(path: str | Path) -> Case:
    """Read and validate a case file.

    Raises :class:`CaseFormatError` for syntax/schema problems (with line and
    column for JSON syntax errors) and :class:`CaseValidationError` for
    violated invariants.
    """
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return case_from_dict(doc)


def bundled_case_path(name: str = MODIFIED_RTS_CASE) -> Path:
    return Path(str(resources.files(DATA_PACKAGE).joinpath(name)))


# --------------------------------------------------------------------------- study case


@dataclass
class ModifiedRtsConfig:
    """Knobs for :func:`build_modified_rts_case`; defaults reproduce the study setup."""

    solar_split_mw: Mapping[int, float] = field(
        default_factory=lambda: {14: 555.0, 15: 277.5, 16: 277.5})
    solar_profile: Sequence[float] = DEFAULT_SOLAR_PROFILE
    removed_gen_buses: Sequence[int] = PAPER_REMOVED_GEN_BUSES
    daily_peak_factor: float = PAPER_DAILY_PEAK_FACTOR
    storage_buses: Sequence[int] = (11, 14)
    storage_power_mw: float = 200.0
    storage_energy_mwh: float = 800.0
    storage_e_min_mwh: float = 0.0
    storage_initial_fraction: float = 0.5
    eta_charge: float = 0.95
    eta_discharge: float = 0.95
    vt_branch: int | None = 19
    strict_paper: bool = True


def build_modified_rts_case(config: ModifiedRtsConfig | None = None,
                            base: Case | None = None) -> Case:
    """Decarbonized 24-bus system: thermal units at the listed buses removed,
    fixed solar added, load scaled to the daily peak factor, storage placed."""
    config = config or ModifiedRtsConfig()
    if base is None:
        base = load_case(bundled_case_path(BASE_RTS_CASE))

    solar_total = sum(config.solar_split_mw.values())
    if config.strict_paper and not math.isclose(solar_total, PAPER_SOLAR_TOTAL_MW, abs_tol=1e-9):
        raise CaseValidationError(
            f"strict mode: solar capacity must total {PAPER_SOLAR_TOTAL_MW:.0f} MW, got {solar_total}")
    if config.storage_power_mw < 0 or config.storage_energy_mwh < 0:
        raise CaseValidationError("storage size must be non-negative")

    removed = set(config.removed_gen_buses)
    generators = tuple(g for g in base.generators if g.bus not in removed)
    solar = tuple(
        SolarPlant(id=i + 1, bus=n, capacity_mw=float(mw), profile=tuple(config.solar_profile))
        for i, (n, mw) in enumerate(sorted(config.solar_split_mw.items())))

    storage: tuple[StorageUnit, ...] = ()
    vt_pairs: tuple[VtPair, ...] = ()
    if config.storage_power_mw > 0 and config.storage_buses:
        storage = tuple(
            StorageUnit(
                id=i + 1, bus=n,
                e_min_mwh=config.storage_e_min_mwh,
                e_max_mwh=config.storage_energy_mwh,
                p_charge_max_mw=config.storage_power_mw,
                p_discharge_max_mw=config.storage_power_mw,
                eta_charge=config.eta_charge,
                eta_discharge=config.eta_discharge,
                e_initial_mwh=config.storage_e_min_mwh + config.storage_initial_fraction
                * (config.storage_energy_mwh - config.storage_e_min_mwh),
            )
            for i, n in enumerate(config.storage_buses))
        if config.vt_branch is not None:
            if len(storage) != 2:
                raise CaseValidationError("a VT pair needs exactly two storage buses")
            br = base.branch(config.vt_branch)
            if {br.from_bus, br.to_bus} != set(config.storage_buses):
                bad = [n for n in config.storage_buses if n not in (br.from_bus, br.to_bus)]
                raise CaseValidationError(
                    f"storage bus {bad[0] if bad else config.storage_buses} is not an endpoint "
                    f"of branch {br.id} ({br.from_bus}-{br.to_bus})")
            vt_pairs = (VtPair(id=1, storage_a=storage[0].id, storage_b=storage[1].id,
                               spanned_branch=br.id),)

    notes = base.notes + (
        f"thermal units removed at buses {sorted(removed)}",
        f"solar {solar_total:g} MW at buses {sorted(config.solar_split_mw)}",
        f"daily peak factor {config.daily_peak_factor}",
    )
    return replace(
        base,
        generators=generators,
        solar_plants=solar,
        storage_units=storage,
        vt_pairs=vt_pairs,
        load_model=replace(base.load_model, daily_peak_factor=config.daily_peak_factor),
        name="ieee24_modified",
        notes=notes,
    )


def with_storage_size(case: Case, power_mw: float, duration_h: float = 4.0,
                      keep_initial_energy: bool = True) -> Case:
    """Rescale every storage unit to ``power_mw`` / ``duration_h * power_mw``.

    By default the initial energy stays the same in MWh (clipped to the new
    bounds), so a size change does not also hand the day a larger free
    endowment.  ``keep_initial_energy=False`` keeps the same fraction instead.
    """
    if power_mw <= 0:
        return replace(case, storage_units=(), vt_pairs=())
    units = []
    for es in case.storage_units:
        frac = (es.e_start - es.e_min_mwh) / (es.e_max_mwh - es.e_min_mwh)
        e_max = duration_h * power_mw
        e_min = min(es.e_min_mwh, 0.5 * e_max)
        if keep_initial_energy:
            e0 = min(max(es.e_start, e_min), e_max)
        else:
            e0 = e_min + frac * (e_max - e_min)
        units.append(replace(es, p_charge_max_mw=power_mw, p_discharge_max_mw=power_mw,
                             e_min_mwh=e_min, e_max_mwh=e_max, e_initial_mwh=e0))
    return replace(case, storage_units=tuple(units))
