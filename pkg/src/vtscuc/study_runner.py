"""Experiment orchestration: scheme comparison, size sweep, flow traces and
LMP differences, with CSV output."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import market_metrics as mm
from .formulation import FormulationOptions, MilpModel, SchemeId, build, scheme_case
from .grid_model import Case, load_case, with_storage_size
from .solve_gateway import (FixedLpInfeasible, LpSolution, MipSolution, SolverConfig,
                            SolverError, resolve_lp_fixed, solve_mip, transfer_start)

log = logging.getLogger(__name__)

ALL_SCHEMES = tuple(SchemeId)
DEFAULT_SWEEP_MW = (100.0, 150.0, 200.0, 250.0, 300.0, 350.0, 400.0)
SWEEP_DURATION_H = 4.0
PT_BRANCH = 19
# Reconfiguration schemes start from the solution of the same scheme without switching.
NR_BASE = {SchemeId.SCUC_NR: SchemeId.SCUC, SchemeId.SCUC_BESS_NR: SchemeId.SCUC_BESS,
           SchemeId.SCUC_VT_NR: SchemeId.SCUC_VT}

COMPARISON_COLUMNS = ("scheme", "total_cost_usd", "cost_reduction_pct",
                      "avg_congested_lines_per_hour", "solve_time_s", "mip_gap", "status")
SWEEP_COLUMNS = ("size_mw", "energy_mwh", "total_cost_usd", "load_payment_usd")


@dataclass
class StudyConfig:
    case_path: Path | None = None
    schemes: Sequence[SchemeId] = ALL_SCHEMES
    solver: SolverConfig = field(default_factory=SolverConfig)
    out_dir: Path | None = None
    sweep_sizes_mw: Sequence[float] = DEFAULT_SWEEP_MW
    strict_paper_mode: bool = True
    options: FormulationOptions = field(default_factory=FormulationOptions)
    binding_tol: float = mm.BINDING_TOL
    stress_threshold: float = mm.STRESS_THRESHOLD
    case: Case | None = None  # takes precedence over case_path
    pt_branch: int = PT_BRANCH

    def __post_init__(self):
        if not self.schemes:
            raise ValueError("no schemes selected")
        sizes = list(self.sweep_sizes_mw)
        floor = 0.0 if not self.strict_paper_mode else 1e-12
        if any(s < floor for s in sizes) or sizes != sorted(sizes) or len(set(sizes)) != len(sizes):
            raise ValueError("sweep sizes must be positive and strictly ascending")

    def load(self) -> Case:
        if self.case is not None:
            return self.case
        if self.case_path is None:
            raise ValueError("no case given")
        return load_case(self.case_path)


@dataclass
class SchemeRun:
    scheme: SchemeId
    case: Case
    model: MilpModel
    mip: MipSolution
    lp: LpSolution | None = None
    lmp: mm.LmpMatrix | None = None
    congestion: mm.CongestionReport | None = None
    storage: mm.StorageProfile | None = None
    load_payment: float = math.nan
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.mip.values is not None and self.lp is not None

    @property
    def cost(self) -> float:
        return self.mip.objective


@dataclass
class ComparisonRow:
    scheme: SchemeId
    operation_cost: float
    cost_reduction: float
    avg_congested_per_hour: float
    solve_time_s: float
    gap: float
    status: str
    load_payment: float = math.nan
    bound: float = math.nan


@dataclass
class SweepPoint:
    size_mw: float
    energy_mwh: float
    operation_cost: float
    load_payment: float
    status: str = ""
    gap: float = math.nan


def run_scheme(case: Case, scheme: SchemeId, solver: SolverConfig | None = None,
               options: FormulationOptions | None = None, binding_tol: float = mm.BINDING_TOL,
               stress_threshold: float = mm.STRESS_THRESHOLD,
               pt_branch: int = PT_BRANCH, warm_start: MipSolution | None = None) -> SchemeRun:
    """build -> solve -> commitment-fixed LP -> metrics for one scheme.

    ``warm_start`` is a solved run whose values seed the MIP (see NR_BASE).
    """
    solver = solver or SolverConfig()
    cs = scheme_case(case, scheme, pt_branch)
    model = build(cs, scheme, options)
    start = None
    if warm_start is not None and warm_start.values is not None:
        start = transfer_start(warm_start, model)
    mip = solve_mip(model, solver, start)
    run = SchemeRun(scheme, cs, model, mip)
    log.info("%s: %s, cost %.2f, gap %.2g, %.1f s", scheme.value, mip.status, mip.objective,
             mip.gap, mip.solve_time_s)
    if mip.values is None:
        run.note = f"no incumbent ({mip.status})"
        return run
    try:
        run.lp = resolve_lp_fixed(model, mip, solver)
    except FixedLpInfeasible as exc:
        run.note = str(exc)
        return run
    except SolverError as exc:
        run.note = f"pricing failed: {exc}"
        return run
    run.lmp = mm.compute_lmp(run.lp, cs)
    run.load_payment = mm.load_payment(run.lmp, cs)
    # Metrics read the re-solved primal: integers exact, continuous part re-optimized.
    run.congestion = mm.congestion_stats(run.lp, cs, binding_tol, stress_threshold)
    if scheme.has_storage:
        run.storage = mm.storage_profile(run.lp, cs)
    return run


def comparison_row(run: SchemeRun, benchmark: float | None) -> ComparisonRow:
    cost = run.cost if run.mip.values is not None else math.nan
    red = mm.cost_reduction(cost, benchmark) if benchmark and math.isfinite(cost) else math.nan
    return ComparisonRow(
        scheme=run.scheme, operation_cost=cost, cost_reduction=red,
        avg_congested_per_hour=run.congestion.avg_congested_per_hour if run.congestion else math.nan,
        solve_time_s=run.mip.solve_time_s, gap=run.mip.gap, status=run.mip.status,
        load_payment=run.load_payment, bound=run.mip.bound)


def run_comparison(config: StudyConfig,
                   runs: dict[SchemeId, SchemeRun] | None = None) -> list[ComparisonRow]:
    """One row per scheme; reductions are measured against the SCUC benchmark.

    ``runs`` (if given) is filled with the full per-scheme results.
    """
    case = config.load()
    schemes = list(dict.fromkeys(config.schemes))
    if SchemeId.SCUC not in schemes:
        schemes.insert(0, SchemeId.SCUC)
    runs = {} if runs is None else runs
    for s in schemes:
        if s in runs:
            continue
        try:
            base = runs.get(NR_BASE.get(s))
            runs[s] = run_scheme(case, s, config.solver, config.options,
                                 config.binding_tol, config.stress_threshold, config.pt_branch,
                                 base.mip if base is not None else None)
        except SolverError as exc:
            log.error("%s failed: %s", s.value, exc)
    bench = runs.get(SchemeId.SCUC)
    bench_cost = bench.cost if bench is not None and bench.mip.values is not None else None
    rows = [comparison_row(runs[s], bench_cost) for s in schemes if s in runs]
    if config.out_dir is not None:
        write_comparison_outputs(config.out_dir, rows, [runs[s] for s in schemes if s in runs])
    return rows


def run_size_sweep(config: StudyConfig, scheme: SchemeId = SchemeId.SCUC_VT) -> list[SweepPoint]:
    """Resize both batteries (power = size, energy = 4 h x size, same starting
    energy in MWh) and re-solve."""
    case = config.load()
    points = []
    for size in config.sweep_sizes_mw:
        sized = with_storage_size(case, size, SWEEP_DURATION_H)
        s = scheme if sized.storage_units else SchemeId.SCUC
        run = run_scheme(sized, s, config.solver, config.options, config.binding_tol,
                         config.stress_threshold, config.pt_branch)
        points.append(SweepPoint(size, SWEEP_DURATION_H * size,
                                 run.cost if run.mip.values is not None else math.nan,
                                 run.load_payment, run.mip.status, run.mip.gap))
    anomalies = sweep_anomalies(points, config.solver.mip_gap)
    for a in anomalies:
        log.warning("sweep cost rises from %.0f MW to %.0f MW beyond 2x gap (solver tolerance?)", *a)
    if config.out_dir is not None:
        write_sweep(Path(config.out_dir) / "sweep.csv", points)
    return points


def sweep_anomalies(points: Sequence[SweepPoint], gap: float) -> list[tuple[float, float]]:
    """Consecutive size pairs where cost goes up by more than 2x the MIP gap."""
    bad = []
    for a, b in zip(points, points[1:]):
        if b.operation_cost > a.operation_cost * (1 + 2 * gap):
            bad.append((a.size_mw, b.size_mw))
    return bad


def flow_trace(run: SchemeRun, branch_id: int) -> list[dict]:
    """Signed hourly flow on ``branch_id``; for a case with twins of that
    branch, also the corridor total."""
    case = run.case
    try:
        case.branch(branch_id)
    except KeyError:
        raise ValueError(f"unknown branch {branch_id}") from None
    twins = [br.id for br in case.branches if br.twin_of == branch_id]
    sol = run.lp if run.lp is not None else run.mip
    rows = []
    for t in case.hours:
        f = sol.value("P_kt", branch_id, t)
        rows.append({"scheme": run.scheme.value, "hour": t, "flow_mw": f,
                     "corridor_mw": f + sum(sol.value("P_kt", k, t) for k in twins)})
    return rows


def run_flow_trace(config: StudyConfig, branch_id: int = PT_BRANCH,
                   schemes: Sequence[SchemeId] = (SchemeId.SCUC, SchemeId.SCUC_PT),
                   runs: dict[SchemeId, SchemeRun] | None = None) -> list[dict]:
    case = config.load()
    runs = {} if runs is None else runs
    rows = []
    for s in schemes:
        if s not in runs:
            runs[s] = run_scheme(case, s, config.solver, config.options, config.binding_tol,
                                 config.stress_threshold, config.pt_branch)
        if runs[s].mip.values is None:
            continue
        rows += flow_trace(runs[s], branch_id)
    if config.out_dir is not None:
        _write_csv(Path(config.out_dir) / "flows.csv", ("scheme", "hour", "flow_mw", "corridor_mw"),
                   [(r["scheme"], r["hour"], r["flow_mw"], r["corridor_mw"]) for r in rows])
    return rows


def run_lmp_difference(config: StudyConfig, a: SchemeId, b: SchemeId,
                       runs: dict[SchemeId, SchemeRun] | None = None) -> np.ndarray:
    case = config.load()
    runs = {} if runs is None else runs
    for s in (a, b):
        if s not in runs:
            runs[s] = run_scheme(case, s, config.solver, config.options, config.binding_tol,
                                 config.stress_threshold, config.pt_branch)
        if runs[s].lmp is None:
            raise SolverError(f"{s.value} has no prices ({runs[s].mip.status} {runs[s].note})")
    diff = mm.lmp_difference(runs[a].lmp, runs[b].lmp)
    if config.out_dir is not None:
        buses = runs[a].lmp.buses
        _write_csv(Path(config.out_dir) / f"lmp_diff_{a.value}_minus_{b.value}.csv",
                   ("bus",) + tuple(f"h{t}" for t in range(diff.shape[1])),
                   [(n, *diff[i]) for i, n in enumerate(buses)])
    return diff


# --------------------------------------------------------------------------- CSV


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(round(x, 6)) if math.isfinite(x) else ""
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def write_comparison_outputs(out_dir: Path | str, rows: Sequence[ComparisonRow],
                             runs: Sequence[SchemeRun]) -> None:
    out = Path(out_dir)
    _write_csv(out / "comparison.csv", COMPARISON_COLUMNS,
               [(r.scheme.value, r.operation_cost, 100 * r.cost_reduction,
                 r.avg_congested_per_hour, r.solve_time_s, r.gap, r.status) for r in rows])
    _write_csv(out / "settlement.csv", ("scheme", "total_cost", "load_payment", "reduction"),
               [(r.scheme.value, r.operation_cost, r.load_payment, r.cost_reduction) for r in rows])
    cong, lmp, stor = [], [], []
    for run in runs:
        if run.congestion is not None:
            cong += [(run.scheme.value, k, t, u) for (k, t), u in sorted(run.congestion.utilization.items())]
        if run.lmp is not None:
            lmp += [(run.scheme.value, n, t, run.lmp.values[i, t])
                    for i, n in enumerate(run.lmp.buses) for t in range(run.lmp.hours)]
        if run.storage is not None:
            p = run.storage
            stor += [(run.scheme.value, e, t, p.charge[i, t], p.discharge[i, t], p.energy[i, t])
                     for i, e in enumerate(p.units) for t in range(p.charge.shape[1])]
    _write_csv(out / "congestion.csv", ("scheme", "branch", "hour", "utilization"), cong)
    _write_csv(out / "lmp.csv", ("scheme", "bus", "hour", "price"), lmp)
    _write_csv(out / "storage.csv", ("scheme", "unit", "hour", "charge", "discharge", "energy"), stor)


def write_sweep(path: Path, points: Sequence[SweepPoint]) -> None:
    _write_csv(path, SWEEP_COLUMNS,
               [(p.size_mw, p.energy_mwh, p.operation_cost, p.load_payment) for p in points])


def with_solver(config: StudyConfig, **changes) -> StudyConfig:
    return replace(config, solver=replace(config.solver, **changes))
