"""Solving MilpModels and pricing them.

Two backends sit behind the same contract: ``highs`` (highspy, the default)
and ``scipy`` (``scipy.optimize.milp`` / ``linprog``).  Prices come from the
commitment-fixed LP: every integer column is pinned at its rounded MIP value
and the remaining continuous program is re-solved; the dual of each row is
reported as d(objective)/d(rhs).
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .formulation import MilpModel, Tag

log = logging.getLogger(__name__)

BACKENDS = ("highs", "scipy")
ROUNDING_TOL = 1e-5


class SolverError(RuntimeError):
    """The backend failed for reasons other than infeasibility/limits."""


class FixedLpInfeasible(SolverError):
    """Pinning the integers at the MIP incumbent gave an infeasible LP."""


@dataclass(frozen=True)
class SolverConfig:
    time_limit_s: float = 3600.0
    mip_gap: float = 1e-4
    threads_hint: int = 1
    feasibility_tol: float = 1e-6
    backend: str = "highs"

    def __post_init__(self):
        if not (self.time_limit_s > 0 and self.mip_gap > 0 and self.threads_hint > 0
                and self.feasibility_tol > 0):
            raise ValueError("solver settings must all be positive")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; choose from {BACKENDS}")


@dataclass
class MipSolution:
    status: str  # optimal | gap_limit | time_limit | infeasible | unbounded
    objective: float
    values: np.ndarray | None
    gap: float
    solve_time_s: float
    bound: float = math.nan
    model: MilpModel | None = field(default=None, repr=False)

    @property
    def has_values(self) -> bool:
        return self.values is not None

    def value(self, kind: str, entity: int, t: int) -> float:
        return float(self.values[self.model.var(kind, entity, t).index])


@dataclass
class LpSolution:
    status: str
    objective: float
    values: np.ndarray
    duals: dict[Tag, float]
    solve_time_s: float = 0.0
    model: MilpModel | None = field(default=None, repr=False)

    def value(self, kind: str, entity: int, t: int) -> float:
        return float(self.values[self.model.var(kind, entity, t).index])

    def dual(self, family: str, entity, t: int) -> float:
        return self.duals[Tag(family, entity, t)]


# --------------------------------------------------------------------------- HiGHS


def _highs_instance(model: MilpModel, lower, upper, integer, config: SolverConfig,
                    lp_tolerances: bool = False):
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("time_limit", float(config.time_limit_s))
    h.setOptionValue("mip_rel_gap", float(config.mip_gap))
    h.setOptionValue("threads", int(config.threads_hint))
    h.setOptionValue("random_seed", 0)
    tol = min(config.feasibility_tol, 1e-7)
    h.setOptionValue("primal_feasibility_tolerance", tol * (1e-2 if lp_tolerances else 1.0))
    h.setOptionValue("dual_feasibility_tolerance", 1e-9 if lp_tolerances else tol)
    h.setOptionValue("mip_feasibility_tolerance", tol)

    a = model.matrix().tocsc()
    lo, hi = model.row_bounds()
    lp = highspy.HighsLp()
    lp.num_col_ = model.num_vars
    lp.num_row_ = model.num_rows
    lp.col_cost_ = model.objective_vector()
    lp.col_lower_ = np.asarray(lower, dtype=float)
    lp.col_upper_ = np.asarray(upper, dtype=float)
    lp.row_lower_ = lo
    lp.row_upper_ = hi
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = a.indptr
    lp.a_matrix_.index_ = a.indices
    lp.a_matrix_.value_ = a.data
    if any(integer):
        lp.integrality_ = [highspy.HighsVarType.kInteger if f else highspy.HighsVarType.kContinuous
                           for f in integer]
    lp.col_names_ = [v.name for v in model.variables]
    lp.row_names_ = [c.tag.name for c in model.constraints]
    status = h.passModel(lp)
    if status == highspy.HighsStatus.kError:
        raise SolverError("HiGHS rejected the model")
    return h


def _highs_status(h) -> str:
    import highspy

    ms = h.getModelStatus()
    S = highspy.HighsModelStatus
    if ms in (S.kOptimal, S.kModelEmpty):
        return "optimal"
    if ms == S.kTimeLimit:
        return "time_limit"
    if ms in (S.kInfeasible, S.kUnboundedOrInfeasible):
        return "infeasible"
    if ms == S.kUnbounded:
        return "unbounded"
    if ms in (S.kIterationLimit, S.kSolutionLimit, S.kInterrupt, S.kObjectiveBound,
              S.kObjectiveTarget):
        return "time_limit"
    raise SolverError(f"HiGHS stopped with {h.modelStatusToString(ms)}")


def _solve_mip_highs(model: MilpModel, config: SolverConfig, start=None) -> MipSolution:
    import highspy

    h = _highs_instance(model, model.lower, model.upper, model.is_integer, config)
    if start is not None:
        sol = highspy.HighsSolution()
        sol.col_value = list(map(float, start))
        sol.value_valid = True
        if h.setSolution(sol) == highspy.HighsStatus.kError:
            log.warning("%s: MIP start rejected", model.scheme.value)
    t0 = time.perf_counter()
    h.run()
    elapsed = time.perf_counter() - t0
    status = _highs_status(h)
    info = h.getInfo()
    values = None
    if info.primal_solution_status == 2 and model.num_vars:
        values = np.array(h.getSolution().col_value)
    elif model.num_vars == 0:
        values = np.zeros(0)
    objective = model.objective_value(values) if values is not None else math.nan
    if any(model.is_integer):
        bound, gap = info.mip_dual_bound, info.mip_gap
    else:
        bound, gap = objective, 0.0
    return _finish(model, status, objective, values, gap, bound, elapsed, config)


def _solve_lp_highs(model: MilpModel, lower, upper, config: SolverConfig):
    h = _highs_instance(model, lower, upper, [False] * model.num_vars, config, lp_tolerances=True)
    t0 = time.perf_counter()
    h.run()
    elapsed = time.perf_counter() - t0
    status = _highs_status(h)
    if status != "optimal":
        return status, None, None, elapsed
    sol = h.getSolution()
    return status, np.array(sol.col_value), np.array(sol.row_dual), elapsed


# --------------------------------------------------------------------------- scipy


def _scipy_bounds(lower, upper):
    from scipy.optimize import Bounds

    return Bounds(np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))


def _solve_mip_scipy(model: MilpModel, config: SolverConfig) -> MipSolution:
    from scipy.optimize import LinearConstraint, milp

    cons = ()
    if model.num_rows:
        lo, hi = model.row_bounds()
        cons = (LinearConstraint(model.matrix(), lo, hi),)
    t0 = time.perf_counter()
    res = milp(model.objective_vector(), integrality=np.asarray(model.is_integer, dtype=int),
               bounds=_scipy_bounds(model.lower, model.upper), constraints=cons,
               options={"time_limit": config.time_limit_s, "mip_rel_gap": config.mip_gap,
                        "disp": False})
    elapsed = time.perf_counter() - t0
    status = {0: "optimal", 1: "time_limit", 2: "infeasible", 3: "unbounded"}.get(res.status)
    if status is None:
        raise SolverError(f"scipy.milp failed: {res.message}")
    values = None if res.x is None else np.asarray(res.x)
    objective = model.objective_value(values) if values is not None else math.nan
    gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
    bound = float(getattr(res, "mip_dual_bound", objective) or objective)
    return _finish(model, status, objective, values, gap, bound, elapsed, config)


def _solve_lp_scipy(model: MilpModel, lower, upper, config: SolverConfig):
    from scipy.optimize import linprog

    a = model.matrix()
    senses = np.array([c.sense for c in model.constraints])
    rhs = np.array([c.rhs for c in model.constraints])
    le, ge, eq = senses == "<=", senses == ">=", senses == "=="
    ub_rows = np.flatnonzero(le | ge)
    sign = np.where(ge[ub_rows], -1.0, 1.0)
    a_ub = a[ub_rows].multiply(sign[:, None]).tocsr() if len(ub_rows) else None
    b_ub = rhs[ub_rows] * sign if len(ub_rows) else None
    eq_rows = np.flatnonzero(eq)
    a_eq = a[eq_rows] if len(eq_rows) else None
    b_eq = rhs[eq_rows] if len(eq_rows) else None
    bounds = [(None if math.isinf(lo) else lo, None if math.isinf(hi) else hi)
              for lo, hi in zip(lower, upper)]
    t0 = time.perf_counter()
    res = linprog(model.objective_vector(), A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=bounds, method="highs",
                  options={"time_limit": config.time_limit_s,
                           "primal_feasibility_tolerance": 1e-9,
                           "dual_feasibility_tolerance": 1e-9})
    elapsed = time.perf_counter() - t0
    status = {0: "optimal", 1: "time_limit", 2: "infeasible", 3: "unbounded"}.get(res.status)
    if status is None:
        raise SolverError(f"scipy.linprog failed: {res.message}")
    if status != "optimal":
        return status, None, None, elapsed
    duals = np.zeros(model.num_rows)
    if len(ub_rows):
        duals[ub_rows] = np.asarray(res.ineqlin.marginals) * sign
    if len(eq_rows):
        duals[eq_rows] = np.asarray(res.eqlin.marginals)
    return status, np.asarray(res.x), duals, elapsed


# --------------------------------------------------------------------------- public API


def _finish(model, status, objective, values, gap, bound, elapsed, config) -> MipSolution:
    if status == "optimal" and any(model.is_integer) and gap > 1e-9:
        status = "gap_limit"
    if values is not None and status in ("optimal", "gap_limit"):
        viol = model.max_violation(values)
        if viol > config.feasibility_tol * max(1.0, _scale(model)):
            log.warning("%s: solution violates constraints by %.3g", model.scheme.value, viol)
    return MipSolution(status=status, objective=objective, values=values, gap=float(gap),
                       solve_time_s=elapsed, bound=float(bound), model=model)


def _scale(model: MilpModel) -> float:
    # Row activities reach big-M scale in NR models; tolerances are relative to that.
    return 1.0 if model.big_m is None else model.big_m * 1e-3


def solve_mip(model: MilpModel, config: SolverConfig | None = None,
              start: np.ndarray | None = None) -> MipSolution:
    """Solve the MILP. Infeasibility and limits come back as a status, not an error.

    ``start`` is an optional full-length column vector offered as the first
    incumbent (HiGHS only; the SciPy backend ignores it).
    """
    config = config or SolverConfig()
    if start is not None and len(start) != model.num_vars:
        raise ValueError(f"start vector has {len(start)} entries, model has {model.num_vars}")
    if config.backend == "scipy":
        return _solve_mip_scipy(model, config)
    return _solve_mip_highs(model, config, start)


def transfer_start(source: MipSolution, model: MilpModel) -> np.ndarray:
    """Map a solution of one scheme onto the columns of ``model``.

    Columns the source lacks are filled with their lower bound, except switch
    states, which start closed; a solution without switching is therefore a
    feasible start for its reconfiguration variant.
    """
    if source.values is None:
        raise SolverError("source solution has no values")
    x = np.empty(model.num_vars)
    for v in model.variables:
        if source.model.has_var(v.kind, v.entity, v.t):
            x[v.index] = source.value(v.kind, v.entity, v.t)
        elif v.kind == "J_kt":
            x[v.index] = 1.0
        else:
            lo = model.lower[v.index]
            x[v.index] = lo if math.isfinite(lo) else 0.0
    ints = np.flatnonzero(model.is_integer)
    x[ints] = np.round(x[ints])
    return x


def solve_lp(model: MilpModel, lower, upper, config: SolverConfig | None = None) -> LpSolution:
    """Solve the continuous relaxation of ``model`` under the given column bounds."""
    config = config or SolverConfig()
    runner = _solve_lp_scipy if config.backend == "scipy" else _solve_lp_highs
    status, x, duals, elapsed = runner(model, lower, upper, config)
    if status != "optimal":
        return LpSolution(status=status, objective=math.nan, values=np.zeros(0), duals={},
                          solve_time_s=elapsed, model=model)
    return LpSolution(status=status, objective=model.objective_value(x), values=x,
                      duals={c.tag: float(d) for c, d in zip(model.constraints, duals)},
                      solve_time_s=elapsed, model=model)


def resolve_lp_fixed(model: MilpModel, mip: MipSolution,
                     config: SolverConfig | None = None) -> LpSolution:
    """Pin integers at the rounded incumbent and re-solve for duals."""
    if mip.values is None or mip.status not in ("optimal", "gap_limit", "time_limit"):
        raise SolverError(f"no incumbent to fix (MIP status {mip.status})")
    lower = np.array(model.lower, dtype=float)
    upper = np.array(model.upper, dtype=float)
    ints = np.flatnonzero(model.is_integer)
    if len(ints):
        raw = mip.values[ints]
        fixed = np.round(raw)
        drift = float(np.max(np.abs(raw - fixed)))
        if drift > ROUNDING_TOL:
            log.warning("integer column off by %.2g before pinning", drift)
        lower[ints] = fixed
        upper[ints] = fixed
    lp = solve_lp(model, lower, upper, config)
    if lp.status == "infeasible":
        raise FixedLpInfeasible(
            f"{model.scheme.value}: LP with integers pinned at the incumbent is infeasible")
    if lp.status != "optimal":
        raise SolverError(f"fixed LP ended with status {lp.status}")
    return lp


# --------------------------------------------------------------------------- export


def _num(x: float) -> str:
    x = float(x)
    if x == 0:
        return "0"
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def write_mps(model: MilpModel, path: str | Path) -> None:
    """Free-format MPS; row names are the constraint tags."""
    names = [v.name for v in model.variables]
    lines = [f"NAME {model.scheme.value}", "ROWS", " N  obj"]
    code = {"<=": "L", ">=": "G", "==": "E"}
    lines += [f" {code[c.sense]}  {c.tag.name}" for c in model.constraints]

    by_col: list[list[tuple[str, float]]] = [[] for _ in names]
    for i, coef in model.objective.items():
        if coef != 0:
            by_col[i].append(("obj", coef))
    for c in model.constraints:
        for i, coef in c.terms:
            by_col[i].append((c.tag.name, coef))

    lines.append("COLUMNS")
    in_int = False
    for i, name in enumerate(names):
        if model.is_integer[i] != in_int:
            in_int = model.is_integer[i]
            lines.append(f"    MARKER 'MARKER' '{'INTORG' if in_int else 'INTEND'}'")
        entries = by_col[i] or [("obj", 0.0)]
        lines += [f"    {name} {row} {_num(v)}" for row, v in entries]
    if in_int:
        lines.append("    MARKER 'MARKER' 'INTEND'")

    lines.append("RHS")
    lines += [f"    RHS {c.tag.name} {_num(c.rhs)}" for c in model.constraints if c.rhs != 0]

    lines.append("BOUNDS")
    for i, name in enumerate(names):
        lo, hi = model.lower[i], model.upper[i]
        if lo == hi:
            lines.append(f" FX BND {name} {_num(lo)}")
            continue
        if math.isinf(lo) and math.isinf(hi):
            lines.append(f" FR BND {name}")
            continue
        if math.isinf(lo):
            lines.append(f" MI BND {name}")
        elif lo != 0 or model.is_integer[i]:
            lines.append(f" LO BND {name} {_num(lo)}")
        if not math.isinf(hi):
            lines.append(f" UP BND {name} {_num(hi)}")
        elif model.is_integer[i]:
            lines.append(f" PL BND {name}")
    lines.append("ENDATA")
    Path(path).write_text("\n".join(lines) + "\n")


def _lp_expr(terms: list[tuple[str, float]], width: int = 200) -> list[str]:
    out, line = [], ""
    for name, coef in terms:
        piece = f"{'-' if coef < 0 else '+'} {_num(abs(coef))} {name}"
        if line and len(line) + len(piece) > width:
            out.append(line)
            line = ""
        line = f"{line} {piece}" if line else piece
    if line:
        out.append(line)
    return out


def write_lp(model: MilpModel, path: str | Path) -> None:
    """CPLEX-style LP text; row names are the constraint tags."""
    names = [v.name for v in model.variables]
    lines = [f"\\ {model.scheme.value}", "Minimize"]
    obj = [(names[i], c) for i, c in sorted(model.objective.items()) if c != 0]
    if not obj and names:
        obj = [(names[0], 0.0)]
    body = _lp_expr(obj)
    lines.append(" obj: " + (body[0] if body else "0"))
    lines += ["   " + b for b in body[1:]]
    lines.append("Subject To")
    op = {"<=": "<=", ">=": ">=", "==": "="}
    for c in model.constraints:
        body = _lp_expr([(names[i], v) for i, v in c.terms]) or ["0 " + names[0]]
        body[-1] += f" {op[c.sense]} {_num(c.rhs)}"
        lines.append(f" {c.tag.name}: {body[0]}")
        lines += ["   " + b for b in body[1:]]
    lines.append("Bounds")
    for i, name in enumerate(names):
        lo, hi = model.lower[i], model.upper[i]
        if lo == hi:
            lines.append(f" {name} = {_num(lo)}")
        elif math.isinf(lo) and math.isinf(hi):
            lines.append(f" {name} free")
        else:
            lo_s = "-inf" if math.isinf(lo) else _num(lo)
            hi_s = "+inf" if math.isinf(hi) else _num(hi)
            lines.append(f" {lo_s} <= {name} <= {hi_s}")
    ints = [names[i] for i in range(len(names)) if model.is_integer[i]]
    if ints:
        lines.append("General")
        lines += [f" {n}" for n in ints]
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")


def export_model(model: MilpModel, path: str | Path, format: str = "mps") -> None:
    fmt = format.lower()
    if fmt == "mps":
        write_mps(model, path)
    elif fmt == "lp":
        write_lp(model, path)
    else:
        raise ValueError(f"unknown export format {format!r} (mps or lp)")


def solve_file(path: str | Path, config: SolverConfig | None = None) -> tuple[str, float]:
    """Read an exported MPS/LP file with HiGHS and solve it; returns (status, objective)."""
    import highspy

    config = config or SolverConfig()
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", float(config.mip_gap))
    h.setOptionValue("time_limit", float(config.time_limit_s))
    h.setOptionValue("threads", int(config.threads_hint))
    if h.readModel(str(path)) == highspy.HighsStatus.kError:
        raise SolverError(f"HiGHS could not read {path}")
    h.run()
    status = _highs_status(h)
    return status, float(h.getInfo().objective_function_value)
