"""Benchmark harness: runs a matrix of (case, method, K) solves and writes CSV/JSON tables."""

from __future__ import annotations

import csv
import json
import math
import os
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

from .bnc import SolveConfig
from .case_io import NetworkCase, bundled_case_path, read_case
from .solve import solve_case

CASE_DIR_ENV = "RNFOPF_CASE_DIR"
SCHEMA_VERSION = 1

RUN_COLUMNS = ["case", "method", "k", "status", "objective", "bound", "gap", "nodes", "lp_solves",
               "time", "rel_inf", "abs_inf", "abs_one", "rnf_mappings", "outer_cuts", "checks",
               "avg_rnf_per_block", "avg_outer_per_block", "warm_start", "error"]
CRITICAL_N_COLUMNS = ["case", "k", "n", "status", "objective", "time"]
LNS_COLUMNS = ["case", "k_max", "applicable", "objective_before", "objective_after",
               "rel_inf_before", "abs_inf_before", "abs_one_before",
               "rel_inf_after", "abs_inf_after", "abs_one_after"]
SCATTER_COLUMNS = ["case", "method", "k", "time", "rel_inf"]


def resolve_case(name: str) -> Path:
    """Find a case by path, in ``$RNFOPF_CASE_DIR``, or among the bundled files."""
    p = Path(name)
    if p.is_file():
        return p
    env = os.environ.get(CASE_DIR_ENV)
    if env:
        for cand in (Path(env) / name, Path(env) / f"{name}.m"):
            if cand.is_file():
                return cand
    bundled = bundled_case_path(name)
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"case {name!r} not found")


def load_case(name: str) -> NetworkCase:
    return read_case(resolve_case(name))


@dataclass
class BenchRun:
    case: str
    method: str
    k: int
    overrides: dict = field(default_factory=dict)


@dataclass
class BenchSpec:
    runs: list[BenchRun]
    out_dir: Path
    formats: tuple[str, ...] = ("csv", "json")
    critical_n: list[str] = field(default_factory=list)
    lns: list[tuple[str, int]] = field(default_factory=list)
    time_limit: float | None = None

    def validate(self) -> None:
        for name in {r.case for r in self.runs} | set(self.critical_n) | {c for c, _ in self.lns}:
            resolve_case(name)


def default_spec(out_dir, extended: bool = False, time_limit: float | None = None,
                 cases: list[str] | None = None) -> BenchSpec:
    if cases is None:
        cases = ["case5", "case30"] + (["case118"] if extended else [])
    runs = []
    for c in cases:
        if c == "case118":
            runs.append(BenchRun(c, "SOCP", 0))
            continue
        for m in ("PR", "QPR", "DPR", "DQPR"):
            for k in (1, 3, 5):
                runs.append(BenchRun(c, m, k))
    return BenchSpec(runs, Path(out_dir), critical_n=[c for c in cases if c != "case118"],
                     lns=[(c, 2) for c in cases if c != "case118"], time_limit=time_limit)


def _finite(v):
    return v if v is not None and math.isfinite(v) else None


def _row_from_outcome(run: BenchRun, out) -> dict:
    rep = out.report
    cs = rep.cut_stats or {}
    err = rep.errors or {}
    return {
        "case": run.case, "method": run.method, "k": run.k, "status": rep.status,
        "objective": _finite(rep.objective), "bound": _finite(rep.bound), "gap": _finite(rep.gap), "nodes": rep.nodes,
        "lp_solves": rep.lp_solves, "time": round(rep.wall_time, 4),
        "rel_inf": err.get("rel_inf"), "abs_inf": err.get("abs_inf"), "abs_one": err.get("abs_one"),
        "rnf_mappings": cs.get("rnf_mappings", 0), "outer_cuts": cs.get("outer_cuts", 0),
        "checks": rep.checks, "avg_rnf_per_block": cs.get("avg_rnf_per_block", 0.0),
        "avg_outer_per_block": cs.get("avg_outer_per_block", 0.0),
        "warm_start": (rep.extra.get("warm_start") or {}).get("accepted", ""), "error": "",
    }


def run_one(run: BenchRun, time_limit=None) -> dict:
    try:
        case = load_case(run.case)
        cfg = SolveConfig(method=run.method, k_max=max(run.k, 1) if run.method == "PA" else run.k,
                          time_limit=time_limit, **run.overrides)
        return _row_from_outcome(run, solve_case(case, cfg))
    except Exception as exc:  # harness continues past failing rows
        row = {c: "" for c in RUN_COLUMNS}
        row.update(case=run.case, method=run.method, k=run.k, status="error",
                   error=f"{type(exc).__name__}: {exc}")
        row["_trace"] = traceback.format_exc()
        return row


def critical_n_scan(name: str, k_limit: int = 6, time_limit=None) -> list[dict]:
    """Solve PA with N = 4, 8, 16, ... until the first feasible size."""
    case = load_case(name)
    rows = []
    for k in range(1, k_limit + 1):
        t0 = time.perf_counter()
        out = solve_case(case, SolveConfig(method="PA", k_max=k, time_limit=time_limit))
        rows.append({"case": name, "k": k, "n": 2 ** (k + 1), "status": out.report.status,
                     "objective": _finite(out.report.objective), "time": round(time.perf_counter() - t0, 4)})
        if out.report.status == "optimal":
            break
    return rows


def lns_row(name: str, k_max: int, time_limit=None) -> dict:
    case = load_case(name)
    out = solve_case(case, SolveConfig(method="DPR", k_max=k_max, postprocess=True, time_limit=time_limit))
    pp = out.report.extra.get("postprocess", {})
    b, a = pp.get("before", {}), pp.get("after", {})
    return {"case": name, "k_max": k_max, "applicable": pp.get("applicable"),
            "objective_before": out.report.incumbents[0]["objective"] if out.report.incumbents else None,
            "objective_after": pp.get("objective"),
            "rel_inf_before": b.get("rel_inf"), "abs_inf_before": b.get("abs_inf"),
            "abs_one_before": b.get("abs_one"), "rel_inf_after": a.get("rel_inf"),
            "abs_inf_after": a.get("abs_inf"), "abs_one_after": a.get("abs_one")}


def write_table(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def run_bench(spec: BenchSpec, log=None) -> dict[str, list[dict]]:
    spec.validate()
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    tables: dict[str, list[dict]] = {"runs": [], "critical_n": [], "lns": [], "scatter": []}
    for run in spec.runs:
        row = run_one(run, spec.time_limit)
        if log:
            log(f"{run.case} {run.method} K={run.k}: {row['status']} {row['objective']}")
        tables["runs"].append(row)
        if row["status"] != "error":
            tables["scatter"].append({k: row[k] for k in SCATTER_COLUMNS})
    for name in spec.critical_n:
        tables["critical_n"].extend(critical_n_scan(name, time_limit=spec.time_limit))
    for name, k in spec.lns:
        tables["lns"].append(lns_row(name, k, spec.time_limit))
    cols = {"runs": RUN_COLUMNS, "critical_n": CRITICAL_N_COLUMNS, "lns": LNS_COLUMNS,
            "scatter": SCATTER_COLUMNS}
    if "csv" in spec.formats:
        for name, rows in tables.items():
            write_table(spec.out_dir / f"{name}.csv", cols[name], rows)
    if "json" in spec.formats:
        clean = {k: [{c: r.get(c) for c in cols[k]} for r in v] for k, v in tables.items()}
        (spec.out_dir / "bench.json").write_text(json.dumps({"schema": SCHEMA_VERSION, **clean}, indent=1))
    return tables
