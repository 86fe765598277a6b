"""Solve drivers for every method: SOCP, static PA/PR/QPR and dynamic DPR/DQPR."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bfm import build_base_model
from .bnc import Incumbent, SolveConfig, SolveReport, branch_and_cut
from .case_io import NetworkCase, errors, validate_case, CaseValidationError
from .dynamic import build_dynamic_model, dynamic_solve
from .rnf import build_static


@dataclass
class Outcome:
    incumbent: Incumbent | None
    report: SolveReport
    model: object
    blocks: list


def solve_socp(case: NetworkCase, config: SolveConfig | None = None):
    """Cone relaxation solved as an LP with tangent outer approximation."""
    model, blocks = build_base_model(case)
    for b in blocks:
        b.exact_soc = True
    cfg = config or SolveConfig(method="SOCP")
    inc, rep = branch_and_cut(model, blocks, None, cfg)
    return inc, rep, model, blocks


def solve_static(case: NetworkCase, config: SolveConfig, warm_start=None, log=None):
    model, blocks = build_base_model(case)
    build_static(model, blocks, config.kind, config.k_max)
    x0 = warm_start(model, blocks) if callable(warm_start) else warm_start
    inc, rep = branch_and_cut(model, blocks, None, config, warm_start=x0, log=log)
    rep.extra["model"] = {"rows": model.n_rows, "cols": model.n_vars,
                          "binaries": len(model.vars.binaries())}
    return inc, rep, model, blocks


def solve_case(case: NetworkCase, config: SolveConfig, log=None, cut_log: str | None = None) -> Outcome:
    """Validate, optionally warm start, solve, optionally post-process."""
    bad = errors(validate_case(case))
    if bad:
        raise CaseValidationError("; ".join(d.message for d in bad))
    t0 = time.perf_counter()
    warm = None
    warm_info: dict = {}
    if config.warm_start and config.method != "SOCP":
        from .warm import WarmStartError, ac_warm_point, map_warm_start

        try:
            pf = ac_warm_point(case, log=log)
            warm = lambda model, blocks: map_warm_start(model, blocks, case, pf)  # noqa: E731
            warm_info = {"status": "mapped", "mismatch": pf.mismatch}
        except WarmStartError as exc:
            warm_info = {"status": "skipped", "reason": str(exc)}
            if log:
                log(f"warm start skipped: {exc}")
    if config.method == "SOCP":
        inc, rep, model, blocks = solve_socp(case, config)
    elif config.method in ("DPR", "DQPR"):
        inc, rep, model, blocks = dynamic_solve(case, config, warm_start=warm, log=log, cut_log=cut_log)
    else:
        inc, rep, model, blocks = solve_static(case, config, warm_start=warm, log=log)
    if warm_info:
        accepted = any(h["origin"] == "warm-start" for h in rep.incumbents)
        warm_info["accepted"] = accepted
        rep.extra["warm_start"] = warm_info
    if config.postprocess and inc is not None and config.method != "SOCP":
        from .warm import lns_postprocess

        res = lns_postprocess(inc.x, model, blocks, config.eta)
        rep.extra["postprocess"] = {
            "applicable": res.applicable, "message": res.message, "objective": res.objective,
            "before": res.before.summary(), "after": res.errors.summary(),
        }
        if res.applicable:
            inc = Incumbent(res.x, res.objective, res.errors, time.perf_counter() - t0, "post-processed")
            rep.incumbents.append({"time": inc.timestamp, "objective": inc.objective,
                                   "origin": "post-processed"})
            rep.errors = res.errors.summary()
    rep.wall_time = time.perf_counter() - t0
    return Outcome(inc, rep, model, blocks)


def default_config(method: str, k: int = 5, **kw) -> SolveConfig:
    return SolveConfig(method=method, k_max=k, **kw)


def point_table(model, x: np.ndarray) -> dict:
    """Named values of the physical variables (for JSON output)."""
    out = {}
    for name in ("W", "pg", "qg", "P", "Q", "S", "Phi"):
        idx = model.vars.groups.get(name, [])
        out[name] = [float(x[j]) for j in idx]
    return out
