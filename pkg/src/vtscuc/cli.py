"""Command-line entry point (``vtscuc`` / ``python -m vtscuc``)."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .formulation import FormulationError, SchemeId, build, scheme_case
from .grid_model import CaseError, load_case
from .solve_gateway import SolverConfig, SolverError, export_model
from .study_runner import (ALL_SCHEMES, DEFAULT_SWEEP_MW, PT_BRANCH, StudyConfig,
                           comparison_row, run_comparison, run_flow_trace, run_lmp_difference, run_scheme,
                           run_size_sweep, write_comparison_outputs)


def _schemes(values):
    return [SchemeId.parse(v) for v in values]


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--time-limit", type=float, default=3600.0, help="seconds per MIP solve")
    common.add_argument("--gap", type=float, default=1e-4, help="relative MIP gap")
    common.add_argument("--backend", choices=("highs", "scipy"), default="highs")
    common.add_argument("--seed-note", default="", help="free-form note logged with the run")
    common.add_argument("--strict-paper", action="store_true",
                        help="reject sweep sizes of 0 and other non-study settings")
    common.add_argument("--pt-branch", type=int, default=PT_BRANCH,
                        help="branch duplicated by SCUC_PT")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="vtscuc", description=__doc__, parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", parents=[common], help="load and validate a case file")
    v.add_argument("case")

    r = sub.add_parser("run", parents=[common], help="solve one scheme and write its CSVs")
    r.add_argument("--case", required=True)
    r.add_argument("--scheme", required=True)
    r.add_argument("--out", required=True)

    c = sub.add_parser("compare", parents=[common], help="seven-scheme comparison table")
    c.add_argument("--case", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--schemes", nargs="+", default=[s.value for s in ALL_SCHEMES])

    s = sub.add_parser("sweep", parents=[common], help="battery size sweep under SCUC_VT")
    s.add_argument("--case", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--sizes", type=float, nargs="+", default=list(DEFAULT_SWEEP_MW))

    f = sub.add_parser("flows", parents=[common], help="hourly flow trace on one branch")
    f.add_argument("--case", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--branch", type=int, default=PT_BRANCH)
    f.add_argument("--schemes", nargs="+", default=["SCUC", "SCUC_PT"])

    d = sub.add_parser("lmp-diff", parents=[common], help="LMP(a) - LMP(b) per bus and hour")
    d.add_argument("--case", required=True)
    d.add_argument("--a", required=True)
    d.add_argument("--b", required=True)
    d.add_argument("--out", required=True)

    e = sub.add_parser("export", parents=[common], help="write a scheme's MILP as MPS or LP")
    e.add_argument("--case", required=True)
    e.add_argument("--scheme", required=True)
    e.add_argument("--format", choices=("mps", "lp"), default="mps")
    e.add_argument("--out", help="output file (default: <scheme>.<format>)")
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed_note:
        logging.getLogger("vtscuc").warning("note: %s", args.seed_note)
    try:
        return _dispatch(args)
    except (CaseError, FormulationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


def _dispatch(args) -> int:
    if args.command == "validate":
        case = load_case(args.case)
        print(f"{args.case}: ok ({len(case.buses)} buses, {len(case.branches)} branches, "
              f"{len(case.generators)} generators, {len(case.solar_plants)} solar, "
              f"{len(case.storage_units)} storage, {len(case.vt_pairs)} vt pairs)")
        return 0

    solver = SolverConfig(time_limit_s=args.time_limit, mip_gap=args.gap, backend=args.backend)
    case_path = Path(args.case)

    if args.command == "export":
        case = load_case(case_path)
        scheme = SchemeId.parse(args.scheme)
        model = build(scheme_case(case, scheme, args.pt_branch), scheme)
        out = args.out or f"{scheme.value}.{args.format}"
        export_model(model, out, args.format)
        print(f"wrote {out} ({model.num_vars} columns, {model.num_rows} rows)")
        return 0

    if args.command == "run":
        case = load_case(case_path)
        scheme = SchemeId.parse(args.scheme)
        run = run_scheme(case, scheme, solver, pt_branch=args.pt_branch)
        write_comparison_outputs(args.out, [comparison_row(run, None)], [run])
        print(f"{scheme.value}: {run.mip.status}, cost {run.cost:.2f}, gap {run.mip.gap:.2g}")
        return 0 if run.ok else 1

    config = StudyConfig(case_path=case_path, solver=solver, out_dir=Path(args.out),
                         strict_paper_mode=args.strict_paper, pt_branch=args.pt_branch,
                         sweep_sizes_mw=getattr(args, "sizes", DEFAULT_SWEEP_MW),
                         schemes=_schemes(getattr(args, "schemes", None) or ["SCUC"]))

    if args.command == "compare":
        rows = run_comparison(config)
        print(f"{'scheme':14s} {'cost':>14s} {'reduction':>10s} {'cong/h':>7s} {'time s':>8s} status")
        for r in rows:
            red = f"{100 * r.cost_reduction:.2f}%" if math.isfinite(r.cost_reduction) else "-"
            print(f"{r.scheme.value:14s} {r.operation_cost:14.2f} {red:>10s} "
                  f"{r.avg_congested_per_hour:7.2f} {r.solve_time_s:8.1f} {r.status}")
        return 0 if all(math.isfinite(r.operation_cost) for r in rows) else 1

    if args.command == "sweep":
        points = run_size_sweep(config)
        for p in points:
            print(f"{p.size_mw:6.0f} MW  cost {p.operation_cost:14.2f}  payment {p.load_payment:14.2f}")
        return 0

    if args.command == "flows":
        rows = run_flow_trace(config, args.branch, config.schemes)
        print(f"wrote {len(rows)} rows to {Path(args.out) / 'flows.csv'}")
        return 0

    if args.command == "lmp-diff":
        a, b = SchemeId.parse(args.a), SchemeId.parse(args.b)
        diff = run_lmp_difference(config, a, b)
        print(f"LMP {a.value} - {b.value}: {diff.shape[0]}x{diff.shape[1]}, "
              f"max |diff| {abs(diff).max():.3f} $/MWh")
        return 0

    raise ValueError(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
