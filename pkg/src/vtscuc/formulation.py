"""MILP construction for the seven congestion-mitigation scheduling schemes.

Every scheme shares the unit-commitment core (objective, commitment logic,
output and ramp limits) and the DC network.  Storage schemes add battery
operation rows and swap the nodal balance for its storage-aware form; VT
schemes couple the batteries at the two ends of a line; NR schemes replace
the fixed-topology flow equations with big-M switchable ones.

Units: powers in MW, energies in MWh, angles in radians.  Flows are
``base_mva * (theta_from - theta_to) / x``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple

import networkx as nx
import numpy as np
import scipy.sparse as sp

from .grid_model import Branch, Case, demand, solar_injection


class SchemeId(str, enum.Enum):
    SCUC = "SCUC"
    SCUC_PT = "SCUC_PT"
    SCUC_BESS = "SCUC_BESS"
    SCUC_VT = "SCUC_VT"
    SCUC_NR = "SCUC_NR"
    SCUC_BESS_NR = "SCUC_BESS_NR"
    SCUC_VT_NR = "SCUC_VT_NR"

    @property
    def has_storage(self) -> bool:
        return "BESS" in self.value or "VT" in self.value

    @property
    def has_vt(self) -> bool:
        return "VT" in self.value

    @property
    def has_nr(self) -> bool:
        return self.value.endswith("NR")

    @classmethod
    def parse(cls, text: str) -> "SchemeId":
        key = text.strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown scheme {text!r}; choose from "
                             f"{', '.join(s.value for s in cls)}") from None


_CORE = frozenset(range(1, 11))
SCHEME_EQUATIONS: dict[SchemeId, frozenset[int]] = {
    SchemeId.SCUC: _CORE | {11},
    SchemeId.SCUC_PT: _CORE | {11},
    SchemeId.SCUC_BESS: _CORE | set(range(12, 18)),
    SchemeId.SCUC_VT: _CORE | set(range(12, 20)),
    SchemeId.SCUC_NR: (_CORE - {9, 10}) | {11, 20, 21, 22, 23},
    SchemeId.SCUC_BESS_NR: (_CORE - {9, 10}) | set(range(12, 18)) | {20, 21, 22, 23},
    SchemeId.SCUC_VT_NR: (_CORE - {9, 10}) | set(range(12, 24)),
}

VAR_KINDS = ("u_gt", "v_gt", "P_gt", "theta_nt", "P_kt",
             "P_c_et", "P_d_et", "E_et", "u_c_et", "u_d_et", "J_kt")


class FormulationError(ValueError):
    pass


@dataclass(frozen=True)
class VarRef:
    kind: str
    entity: int
    t: int
    index: int

    @property
    def name(self) -> str:
        return f"{self.kind}_{self.entity}_{self.t}"


class Tag(NamedTuple):
    family: str
    entity: int | str
    t: int

    def __str__(self) -> str:
        return f"{self.family}({self.entity},{self.t})"

    @property
    def name(self) -> str:
        return f"{self.family}_{self.entity}_{self.t}"


@dataclass(frozen=True)
class LinearConstraint:
    terms: tuple[tuple[int, float], ...]
    sense: str  # "<=", "==" or ">="
    rhs: float
    tag: Tag


@dataclass(frozen=True)
class FormulationOptions:
    big_m: float | None = None  # None: derived from the angle span, see default_big_m
    angle_limit: float = math.pi  # |theta_nt| bound, NR schemes only
    cyclic_storage: bool = False  # require E at the last hour >= initial energy


def default_big_m(case: Case, angle_limit: float = math.pi) -> float:
    """Big-M for the switchable flow rows.

    The angle bound gives base * 2 * limit / x_min.  A tighter valid cap follows
    from the one-open-line budget: with line k open every other line is closed
    and within its rating, so |theta_from - theta_to| is at most the shortest
    alternative path weighted by rating * x / base.  Bridges need no cap, as the
    island they cut off can shift its angles freely.
    """
    x_min = min(br.reactance for br in case.branches)
    angle_cap = case.base_mva * 2.0 * angle_limit / x_min
    graph = nx.MultiGraph()
    for br in case.branches:
        graph.add_edge(br.from_bus, br.to_bus, key=br.id,
                       weight=br.rating_mw * br.reactance / case.base_mva)
    network_cap = 0.0
    for br in case.branches:
        graph.remove_edge(br.from_bus, br.to_bus, key=br.id)
        try:
            span = nx.shortest_path_length(graph, br.from_bus, br.to_bus, weight="weight")
            network_cap = max(network_cap, case.base_mva * span / br.reactance)
        except nx.NetworkXNoPath:
            pass
        graph.add_edge(br.from_bus, br.to_bus, key=br.id,
                       weight=br.rating_mw * br.reactance / case.base_mva)
    return min(angle_cap, network_cap) if network_cap > 0 else angle_cap


@dataclass
class MilpModel:
    scheme: SchemeId
    case: Case
    big_m: float | None = None
    options: FormulationOptions = field(default_factory=FormulationOptions)
    variables: list[VarRef] = field(default_factory=list)
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    is_integer: list[bool] = field(default_factory=list)
    constraints: list[LinearConstraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    equations: set[int] = field(default_factory=set)
    _lookup: dict[tuple[str, int, int], VarRef] = field(default_factory=dict, repr=False)
    _tags: dict[Tag, int] = field(default_factory=dict, repr=False)

    # -- registry

    def add_var(self, kind: str, entity: int, t: int, lb: float = 0.0, ub: float = math.inf,
                binary: bool = False) -> VarRef:
        key = (kind, entity, t)
        if key in self._lookup:
            raise FormulationError(f"variable {key} registered twice")
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        ref = VarRef(kind, entity, t, len(self.variables))
        self.variables.append(ref)
        self.lower.append(float(lb))
        self.upper.append(float(ub))
        self.is_integer.append(binary)
        self._lookup[key] = ref
        return ref

    def var(self, kind: str, entity: int, t: int) -> VarRef:
        return self._lookup[(kind, entity, t)]

    def has_var(self, kind: str, entity: int, t: int) -> bool:
        return (kind, entity, t) in self._lookup

    def vars_of(self, kind: str) -> list[VarRef]:
        return [v for v in self.variables if v.kind == kind]

    def add_constraint(self, terms: Iterable[tuple[VarRef | int, float]], sense: str, rhs: float,
                       tag: Tag) -> LinearConstraint:
        if sense not in ("<=", "==", ">="):
            raise FormulationError(f"bad sense {sense!r}")
        if tag in self._tags:
            raise FormulationError(f"duplicate constraint tag {tag}")
        merged: dict[int, float] = {}
        for v, coef in terms:
            idx = v.index if isinstance(v, VarRef) else int(v)
            merged[idx] = merged.get(idx, 0.0) + float(coef)
        row = LinearConstraint(tuple((i, c) for i, c in merged.items() if c != 0.0),
                               sense, float(rhs), tag)
        self._tags[tag] = len(self.constraints)
        self.constraints.append(row)
        return row

    def row_of(self, tag: Tag) -> int:
        return self._tags[tag]

    def tags(self, family: str | None = None) -> list[Tag]:
        return [c.tag for c in self.constraints if family is None or c.tag.family == family]

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_rows(self) -> int:
        return len(self.constraints)

    # -- dense views for backends

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.num_vars)
        for i, coef in self.objective.items():
            c[i] = coef
        return c

    def matrix(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for r, con in enumerate(self.constraints):
            for i, coef in con.terms:
                rows.append(r)
                cols.append(i)
                vals.append(coef)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.num_rows, self.num_vars))

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.empty(self.num_rows)
        hi = np.empty(self.num_rows)
        for r, con in enumerate(self.constraints):
            lo[r] = con.rhs if con.sense in ("==", ">=") else -math.inf
            hi[r] = con.rhs if con.sense in ("==", "<=") else math.inf
        return lo, hi

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective_vector() @ x)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest absolute row or bound violation at ``x``."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if self.num_rows:
            ax = self.matrix() @ x
            lo, hi = self.row_bounds()
            worst = max(worst, float(np.max(np.maximum(lo - ax, 0.0))),
                        float(np.max(np.maximum(ax - hi, 0.0))))
        if self.num_vars:
            worst = max(worst, float(np.max(np.maximum(np.asarray(self.lower) - x, 0.0))),
                        float(np.max(np.maximum(x - np.asarray(self.upper), 0.0))))
        return worst


# --------------------------------------------------------------------------- helpers


def _prev_u(model: MilpModel, g, t):
    return None if t == 0 else model.var("u_gt", g.id, t - 1)


def _flow_coef(case: Case, br: Branch) -> float:
    return case.base_mva / br.reactance


def register_variables(model: MilpModel) -> None:
    """Declare every decision variable for the scheme in a fixed order."""
    case, scheme = model.case, model.scheme
    T = case.horizon_hours
    for g in case.generators:
        for t in range(T):
            model.add_var("u_gt", g.id, t, binary=True)
            model.add_var("v_gt", g.id, t, binary=True)
            model.add_var("P_gt", g.id, t, 0.0, math.inf)
    model.equations |= {2, 3}

    theta_lim = model.options.angle_limit if scheme.has_nr else math.inf
    for b in case.buses:
        for t in range(T):
            if b.id == case.reference_bus:
                model.add_var("theta_nt", b.id, t, 0.0, 0.0)
            else:
                model.add_var("theta_nt", b.id, t, -theta_lim, theta_lim)
    for br in case.branches:
        for t in range(T):
            model.add_var("P_kt", br.id, t, -math.inf, math.inf)

    if scheme.has_storage:
        for es in case.storage_units:
            for t in range(T):
                model.add_var("P_c_et", es.id, t, 0.0, math.inf)
                model.add_var("P_d_et", es.id, t, 0.0, math.inf)
                model.add_var("E_et", es.id, t, -math.inf, math.inf)
                model.add_var("u_c_et", es.id, t, binary=True)
                model.add_var("u_d_et", es.id, t, binary=True)

    if scheme.has_nr:
        for br in case.branches:
            for t in range(T):
                # Non-switchable branches get J pinned to 1.
                model.add_var("J_kt", br.id, t, 0.0 if br.switchable else 1.0, 1.0, binary=True)
        model.equations.add(20)


# --------------------------------------------------------------------------- equation families


def add_objective(model: MilpModel, case: Case) -> None:
    """Energy, no-load and start-up cost of every unit over the horizon."""
    dt = case.interval_hours
    for g in case.generators:
        for t in case.hours:
            for kind, coef in (("P_gt", g.cost_energy * dt), ("u_gt", g.cost_noload * dt),
                               ("v_gt", g.cost_startup)):
                model.objective[model.var(kind, g.id, t).index] = coef
    model.equations.add(1)


def add_commitment_logic(model: MilpModel, case: Case) -> None:
    for g in case.generators:
        u0 = 1.0 if g.initial_on else 0.0
        for t in case.hours:
            u, v = model.var("u_gt", g.id, t), model.var("v_gt", g.id, t)
            prev = _prev_u(model, g, t)
            if prev is None:
                model.add_constraint([(v, 1.0), (u, -1.0)], ">=", -u0, Tag("startup", g.id, t))
            else:
                model.add_constraint([(v, 1.0), (u, -1.0), (prev, 1.0)], ">=", 0.0,
                                     Tag("startup", g.id, t))
    model.equations.add(4)


def add_generator_limits(model: MilpModel, case: Case) -> None:
    for g in case.generators:
        ramp = g.ramp_mw
        for t in case.hours:
            u, p = model.var("u_gt", g.id, t), model.var("P_gt", g.id, t)
            model.add_constraint([(p, 1.0), (u, -g.p_min_mw)], ">=", 0.0, Tag("pmin", g.id, t))
            model.add_constraint([(p, 1.0), (u, -g.p_max_mw)], "<=", 0.0, Tag("pmax", g.id, t))
            if t == 0:
                p0 = g.initial_p_mw
                model.add_constraint([(p, 1.0)], "<=", ramp + p0, Tag("ramp_up", g.id, t))
                model.add_constraint([(p, -1.0)], "<=", ramp - p0, Tag("ramp_down", g.id, t))
            else:
                prev = model.var("P_gt", g.id, t - 1)
                model.add_constraint([(p, 1.0), (prev, -1.0)], "<=", ramp, Tag("ramp_up", g.id, t))
                model.add_constraint([(prev, 1.0), (p, -1.0)], "<=", ramp, Tag("ramp_down", g.id, t))
    model.equations |= {5, 6, 7, 8}


def add_dc_network(model: MilpModel, case: Case) -> None:
    """Fixed-topology flow equations and limits (skipped under NR) plus the
    nodal balance, in its storage-aware form when storage is modelled."""
    if not model.scheme.has_nr:
        for br in case.branches:
            b = _flow_coef(case, br)
            for t in case.hours:
                pk = model.var("P_kt", br.id, t)
                model.add_constraint(
                    [(pk, 1.0), (model.var("theta_nt", br.from_bus, t), -b),
                     (model.var("theta_nt", br.to_bus, t), b)],
                    "==", 0.0, Tag("flow", br.id, t))
                model.add_constraint([(pk, 1.0)], "<=", br.rating_mw, Tag("flow_max", br.id, t))
                model.add_constraint([(pk, 1.0)], ">=", -br.rating_mw, Tag("flow_min", br.id, t))
        model.equations |= {9, 10}

    with_storage = model.scheme.has_storage
    for n in case.bus_ids:
        gens = [g for g in case.generators if g.bus == n]
        into = [br for br in case.branches if br.to_bus == n]
        out = [br for br in case.branches if br.from_bus == n]
        units = [es for es in case.storage_units if es.bus == n] if with_storage else []
        for t in case.hours:
            terms = [(model.var("P_gt", g.id, t), 1.0) for g in gens]
            terms += [(model.var("P_kt", br.id, t), 1.0) for br in into]
            terms += [(model.var("P_kt", br.id, t), -1.0) for br in out]
            for es in units:
                terms += [(model.var("P_c_et", es.id, t), -1.0), (model.var("P_d_et", es.id, t), 1.0)]
            rhs = demand(case, n, t) - solar_injection(case, n, t)
            model.add_constraint(terms, "==", rhs, Tag("balance", n, t))
    model.equations.add(17 if with_storage else 11)


def add_storage(model: MilpModel, case: Case) -> None:
    if not case.storage_units:
        raise FormulationError(f"{model.scheme.value} needs at least one storage unit")
    dt = case.interval_hours
    for es in case.storage_units:
        for t in case.hours:
            pc, pd = model.var("P_c_et", es.id, t), model.var("P_d_et", es.id, t)
            uc, ud = model.var("u_c_et", es.id, t), model.var("u_d_et", es.id, t)
            e = model.var("E_et", es.id, t)
            model.add_constraint([(uc, 1.0), (ud, 1.0)], "<=", 1.0, Tag("storage_mode", es.id, t))
            model.add_constraint([(pc, 1.0), (uc, -es.p_charge_max_mw)], "<=", 0.0,
                                 Tag("charge_max", es.id, t))
            model.add_constraint([(pd, 1.0), (ud, -es.p_discharge_max_mw)], "<=", 0.0,
                                 Tag("discharge_max", es.id, t))
            model.add_constraint([(e, 1.0)], ">=", es.e_min_mwh, Tag("energy_min", es.id, t))
            model.add_constraint([(e, 1.0)], "<=", es.e_max_mwh, Tag("energy_max", es.id, t))
            terms = [(e, 1.0), (pc, -es.eta_charge * dt), (pd, dt / es.eta_discharge)]
            if t == 0:
                model.add_constraint(terms, "==", es.e_start, Tag("energy_balance", es.id, t))
            else:
                terms.append((model.var("E_et", es.id, t - 1), -1.0))
                model.add_constraint(terms, "==", 0.0, Tag("energy_balance", es.id, t))
        if model.options.cyclic_storage:
            last = model.var("E_et", es.id, case.horizon_hours - 1)
            model.add_constraint([(last, 1.0)], ">=", es.e_start,
                                 Tag("energy_cyclic", es.id, case.horizon_hours - 1))
    model.equations |= {12, 13, 14, 15, 16}


def add_vt_coupling(model: MilpModel, case: Case) -> None:
    if not case.vt_pairs:
        raise FormulationError(f"{model.scheme.value} needs at least one VT pair")
    for vt in case.vt_pairs:
        for t in case.hours:
            members = (vt.storage_a, vt.storage_b)
            for e in members:
                if not model.has_var("u_c_et", e, t):
                    raise FormulationError(f"vt pair {vt.id} references storage {e} not in the model")
            model.add_constraint([(model.var("u_c_et", e, t), 1.0) for e in members], "<=", 1.0,
                                 Tag("vt_charge", vt.id, t))
            model.add_constraint([(model.var("u_d_et", e, t), 1.0) for e in members], "<=", 1.0,
                                 Tag("vt_discharge", vt.id, t))
    model.equations |= {18, 19}


def add_reconfiguration(model: MilpModel, case: Case) -> None:
    big_m = model.big_m
    if big_m is None or not big_m > 0:
        raise FormulationError(f"big_m must be positive, got {big_m}")
    for t in case.hours:
        # sum_k (1 - J_kt) <= 1  <=>  sum_k J_kt >= |K| - 1
        model.add_constraint([(model.var("J_kt", br.id, t), 1.0) for br in case.branches],
                             ">=", len(case.branches) - 1.0, Tag("switch_budget", "sys", t))
    for br in case.branches:
        b = _flow_coef(case, br)
        for t in case.hours:
            pk, j = model.var("P_kt", br.id, t), model.var("J_kt", br.id, t)
            th_f, th_t = model.var("theta_nt", br.from_bus, t), model.var("theta_nt", br.to_bus, t)
            gap = [(pk, 1.0), (th_f, -b), (th_t, b)]
            model.add_constraint(gap + [(j, big_m)], "<=", big_m, Tag("nr_flow_hi", br.id, t))
            model.add_constraint(gap + [(j, -big_m)], ">=", -big_m, Tag("nr_flow_lo", br.id, t))
            model.add_constraint([(pk, 1.0), (j, -br.rating_mw)], "<=", 0.0, Tag("nr_limit_hi", br.id, t))
            model.add_constraint([(pk, 1.0), (j, br.rating_mw)], ">=", 0.0, Tag("nr_limit_lo", br.id, t))
    model.equations |= {21, 22, 23}


# --------------------------------------------------------------------------- entry points


def build(case: Case, scheme: SchemeId | str,
          options: FormulationOptions | None = None) -> MilpModel:
    """Assemble the MILP for ``scheme`` on ``case``."""
    scheme = SchemeId.parse(scheme) if isinstance(scheme, str) else scheme
    options = options or FormulationOptions()
    if scheme.has_storage and not case.storage_units:
        raise FormulationError(f"{scheme.value} needs storage units in the case")
    if scheme.has_vt and not case.vt_pairs:
        raise FormulationError(f"{scheme.value} needs VT pairs in the case")
    if scheme is SchemeId.SCUC_PT and not any(br.twin_of is not None for br in case.branches):
        raise FormulationError("SCUC_PT needs a case with a parallel line (see add_parallel_line)")

    big_m = None
    if scheme.has_nr:
        big_m = options.big_m if options.big_m is not None else default_big_m(case, options.angle_limit)
    model = MilpModel(scheme=scheme, case=case, big_m=big_m, options=options)
    register_variables(model)
    add_objective(model, case)
    add_commitment_logic(model, case)
    add_generator_limits(model, case)
    if scheme.has_storage:
        add_storage(model, case)
    if scheme.has_vt:
        add_vt_coupling(model, case)
    if scheme.has_nr:
        add_reconfiguration(model, case)
    add_dc_network(model, case)
    return model


def add_parallel_line(case: Case, branch_id: int) -> Case:
    """Return a copy of ``case`` with a twin of ``branch_id`` (same ends, x and rating)."""
    try:
        src = case.branch(branch_id)
    except KeyError:
        raise FormulationError(f"unknown branch {branch_id}") from None
    new_id = max(br.id for br in case.branches) + 1
    twin = replace(src, id=new_id, twin_of=src.twin_of or src.id)
    return replace(case, branches=case.branches + (twin,))


def scheme_case(case: Case, scheme: SchemeId, pt_branch: int = 19) -> Case:
    """The case a scheme runs on: PT gets the parallel line, storage-free
    schemes drop the storage units."""
    if scheme is SchemeId.SCUC_PT:
        case = add_parallel_line(case, pt_branch)
    if not scheme.has_storage and case.storage_units:
        case = replace(case, storage_units=(), vt_pairs=())
    return case
