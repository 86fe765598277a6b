"""Command-line interface: ``rnfopf solve`` and ``rnfopf bench``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .bench import CASE_DIR_ENV, default_spec, load_case, run_bench
from .bnc import METHODS, SolveConfig
from .case_io import CaseError
from .solve import point_table, solve_case

EXIT_OK, EXIT_INFEASIBLE, EXIT_TIME_LIMIT, EXIT_USAGE, EXIT_DATA = 0, 2, 3, 64, 65
REPORT_SCHEMA = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(v: str) -> float:
    x = float(v)
    if x <= 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return x


def _nonneg_int(v: str) -> int:
    x = int(v)
    if x < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return x


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rnfopf", description="Pyramidal relaxations of the branch-flow ACOPF.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve one case")
    s.add_argument("case", help="case file path or bundled name (case5, case30, two_bus)")
    s.add_argument("--method", default="pr", type=str.lower,
                   choices=[m.lower() for m in METHODS])
    s.add_argument("--k", type=_nonneg_int, default=None, help="stages for static methods")
    s.add_argument("--kmax", type=_nonneg_int, default=None, help="maximum depth for dynamic methods")
    s.add_argument("--kinit", type=_nonneg_int, default=0)
    s.add_argument("--gap", type=float, default=1e-3)
    s.add_argument("--time-limit", type=_positive, default=None)
    s.add_argument("--eps", type=_positive, default=None)
    s.add_argument("--eta", type=_positive, default=1e-8)
    s.add_argument("--warm-start", action="store_true")
    s.add_argument("--postprocess", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, default=None, help="report JSON path (default: stdout)")
    s.add_argument("--errors-csv", type=Path, default=None,
                   help="per-branch conic-error CSV (default: next to --out)")
    s.add_argument("--cut-log", type=Path, default=None, help="JSON-lines cut event log")
    s.add_argument("--quiet", action="store_true")

    b = sub.add_parser("bench", help="run the benchmark tables")
    b.add_argument("--out", type=Path, default=Path("bench_out"))
    b.add_argument("--extended", action="store_true", help="include case118")
    b.add_argument("--time-limit", type=_positive, default=None, help="per-solve limit (s)")
    b.add_argument("--format", dest="formats", action="append", choices=["csv", "json"])
    b.add_argument("--cases", nargs="+", default=None,
                   help="cases to run (default: case5 case30, plus case118 with --extended)")
    return p


def _errors_csv(path: Path, out) -> None:
    model, blocks, x = out.model, out.blocks, out.incumbent.x
    from .bfm import block_error, four_d_error

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["branch", "delta_rel_4d", "delta_abs_4d", "power_rel", "cv_rel"])
        for l, t in enumerate(model.branch_terms):
            a, r = four_d_error(x[t.P], x[t.Q], x[t.Phi], x[t.W_from] * t.inv_tap2)
            per = {b.kind: block_error(*b.values(x))[2] for b in blocks if b.branch == l}
            w.writerow([l, r, a, per.get("power"), per.get("cv")])


def cmd_solve(args) -> int:
    method = args.method.upper()
    k = args.kmax if method in ("DPR", "DQPR") else args.k
    if k is None:
        k = args.k if args.k is not None else (args.kmax if args.kmax is not None else 5)
    if method == "PA" and k < 1:
        print("rnfopf: error: PA needs --k >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = SolveConfig(method=method, gap=args.gap, time_limit=args.time_limit,
                          k_init=min(args.kinit, k), k_max=k, eps=args.eps, eta=args.eta,
                          seed=args.seed, warm_start=args.warm_start, postprocess=args.postprocess)
    except ValueError as exc:
        print(f"rnfopf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        case = load_case(args.case)
    except (CaseError, FileNotFoundError) as exc:
        print(f"rnfopf: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    out = solve_case(case, cfg, log=log, cut_log=str(args.cut_log) if args.cut_log else None)
    rep = out.report.to_dict()
    rep["schema"] = REPORT_SCHEMA
    rep["case"] = case.name
    rep["k"] = k
    if out.incumbent is not None:
        rep["solution"] = point_table(out.model, out.incumbent.x)
    text = json.dumps(rep, indent=1)
    if args.out:
        args.out.write_text(text)
        csv_path = args.errors_csv or args.out.with_suffix(".errors.csv")
    else:
        print(text)
        csv_path = args.errors_csv
    if csv_path and out.incumbent is not None:
        _errors_csv(csv_path, out)
    status = out.report.status
    if status == "optimal":
        return EXIT_OK
    if status == "infeasible":
        return EXIT_INFEASIBLE
    return EXIT_TIME_LIMIT


def cmd_bench(args) -> int:
    spec = default_spec(args.out, args.extended, args.time_limit, args.cases)
    if args.formats:
        spec.formats = tuple(args.formats)
    try:
        spec.validate()
    except FileNotFoundError as exc:
        print(f"rnfopf: error: {exc}; put the file in ${CASE_DIR_ENV} or pass --cases", file=sys.stderr)
        return EXIT_DATA
    run_bench(spec, log=lambda m: print(m, file=sys.stderr))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args)
    return cmd_bench(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
