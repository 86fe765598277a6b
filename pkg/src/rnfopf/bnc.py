"""Branch-and-cut over a :class:`LinearModel` with lazy-constraint callbacks.

Node LPs run in one incremental HiGHS session; branching only changes the
bounds of binary columns, and rows or columns added by callbacks are
global.  Blocks flagged ``exact_soc`` are handled by tangent
outer-approximation rows.
"""

from __future__ import annotations

import heapq
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Protocol

import numpy as np

from .bfm import ETA, ConicErrorReport, SocBlock, conic_errors
from .lp import INFEASIBLE, OPTIMAL, TIME_LIMIT, LpSession
from .model import LE, LinearModel, combine
from .rnf import PA, PR, QPR, tolerance

METHODS = ("SOCP", "PA", "PR", "QPR", "DPR", "DQPR")
SOC_TOL = 1e-7
ROW_TOL = 1e-6


@dataclass
class SolveConfig:
    method: str = "PR"
    gap: float = 1e-3
    time_limit: float | None = None
    k_init: int = 0
    k_max: int = 5
    eps: float | None = None
    eta: float = ETA
    seed: int = 0
    warm_start: bool = False
    postprocess: bool = False
    int_tol: float = 1e-6
    node_limit: int | None = None
    max_cut_rounds: int = 200
    soc_tol: float = SOC_TOL
    # HiGHS primal feasibility; its 1e-7 default lets points sit on the wrong side of
    # fresh tangent rows by as much as the separation tolerance, which stalls the OA loop
    lp_feas_tol: float | None = 1e-9

    def __post_init__(self):
        self.method = self.method.upper()
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not 0 <= self.k_init <= self.k_max:
            raise ValueError("need 0 <= k_init <= k_max")
        if self.gap < 0:
            raise ValueError("gap must be >= 0")
        if self.eps is not None and self.eps <= 0:
            raise ValueError("eps must be > 0")

    @property
    def kind(self) -> str | None:
        return {"PA": PA, "PR": PR, "DPR": PR, "QPR": QPR, "DQPR": QPR}.get(self.method)

    @property
    def epsilon(self) -> float | None:
        if self.eps is not None:
            return self.eps
        if self.kind is None:
            return None
        return tolerance(self.kind, self.k_max)


@dataclass
class Incumbent:
    x: np.ndarray
    objective: float
    errors: ConicErrorReport | None
    timestamp: float
    origin: str  # warm-start | node | post-processed


@dataclass
class SolveReport:
    status: str
    objective: float
    bound: float
    gap: float
    nodes: int
    lp_solves: int
    wall_time: float
    checks: int = 0
    soc_cuts: int = 0
    cut_stats: dict = field(default_factory=dict)
    incumbents: list = field(default_factory=list)
    method: str = ""
    errors: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("objective", "bound", "gap"):
            if not math.isfinite(d[k]):
                d[k] = None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


class Callback(Protocol):
    def __call__(self, model: LinearModel, x: np.ndarray, dry_run: bool = False) -> int:
        """Examine an integer-feasible candidate; return the number of rows added
        (or, with ``dry_run``, the number that would be added)."""


def soc_separation(block: SocBlock, point, tol: float = SOC_TOL) -> tuple[dict, str, float] | None:
    """Tangent row at a point outside ``x^2 + y^2 <= z^2 (1 + tol)``, else ``None``."""
    xv, yv, zv = block.values(np.asarray(point, dtype=float))
    rho2 = xv * xv + yv * yv
    if rho2 <= zv * zv * (1.0 + tol) or rho2 == 0.0:
        return None
    rho = math.sqrt(rho2)
    return combine((xv / rho, block.x), (yv / rho, block.y), (-1.0, block.z)), LE, 0.0


def _rnf_triples(blocks: list[SocBlock]) -> np.ndarray:
    out = []
    for blk in blocks:
        for st in blk.stages:
            for b, (w1, w2) in zip(st.binaries, st.omegas):
                out.append((b, w1, w2))
    return np.array(out, dtype=np.int64).reshape(-1, 3)


def snap_binaries(x: np.ndarray, triples: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                  tol: float = 1e-9) -> None:
    """Move R&F binaries to an integral value when the LP point allows it.

    A binary only enters its two ``omega`` rows, so setting it to 1 when
    ``omega2 = 0`` (or to 0 when ``omega1 = 0``) keeps the point feasible
    and the objective unchanged.  ``lb``/``ub`` are the node bounds.
    """
    if not len(triples):
        return
    b, w1, w2 = triples[:, 0], triples[:, 1], triples[:, 2]
    can1 = (x[w2] <= tol) & (ub[b] >= 1.0)
    can0 = (x[w1] <= tol) & (lb[b] <= 0.0)
    both = can1 & can0
    x[b[both]] = np.where(x[b[both]] >= 0.5, 1.0, 0.0)
    x[b[can1 & ~both]] = 1.0
    x[b[can0 & ~both]] = 0.0


def check_point(model: LinearModel, x: np.ndarray, tol: float = ROW_TOL) -> float:
    """Largest row residual or bound violation of ``x``."""
    res = model.residuals(x)
    return max(float(res.max(initial=0.0)), model.bound_violation(x))


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    depth: int = field(compare=False)
    fix: dict = field(compare=False)


def branch_and_cut(model: LinearModel, blocks: list[SocBlock] | None = None,
                   callback: Callback | None = None, config: SolveConfig | None = None,
                   warm_start: np.ndarray | None = None,
                   log: Callable[[str], None] | None = None) -> tuple[Incumbent | None, SolveReport]:
    """Best-bound branch-and-cut; see the module docstring."""
    cfg = config or SolveConfig()
    blocks = blocks or []
    t0 = time.perf_counter()
    session = LpSession(model)
    if cfg.lp_feas_tol is not None:
        session.set_option("primal_feasibility_tolerance", cfg.lp_feas_tol)
    lp_solves = 0
    soc_cuts = 0
    checks = 0
    history: list[dict] = []
    best: Incumbent | None = None
    ub_val = math.inf
    triples = _rnf_triples(blocks)
    n_known = model.n_vars

    def elapsed():
        return time.perf_counter() - t0

    def remaining():
        if cfg.time_limit is None:
            return None
        return max(cfg.time_limit - elapsed(), 1e-3)

    def soc_round(x) -> int:
        added = 0
        for blk in blocks:
            if blk.exact_soc:
                row = soc_separation(blk, x, cfg.soc_tol)
                if row is not None:
                    model.add_row(*row, "soc-oa")
                    added += 1
        return added

    def accept(x, obj, origin):
        nonlocal best, ub_val
        best = Incumbent(x.copy(), obj, conic_errors(x, blocks, model, cfg.eta) if blocks else None,
                         elapsed(), origin)
        ub_val = obj
        history.append({"time": best.timestamp, "objective": obj, "origin": origin})
        if log:
            log(f"incumbent {obj:.6f} ({origin}) at {best.timestamp:.2f}s")

    if warm_start is not None:
        x0 = np.asarray(warm_start, dtype=float)
        bins = model.vars.binaries()
        ok = len(x0) == model.n_vars and check_point(model, x0) <= ROW_TOL
        ok = ok and all(min(x0[j], 1 - x0[j]) <= cfg.int_tol for j in bins)
        ok = ok and all(soc_separation(b, x0, cfg.soc_tol) is None for b in blocks if b.exact_soc)
        if ok and callback is not None:
            checks += 1
            ok = callback(model, x0, dry_run=True) == 0
        if ok:
            accept(x0, model.objective_value(x0), "warm-start")
        elif log:
            log("warm start rejected")

    heap: list[_Node] = [_Node(-math.inf, 0, 0, {})]
    seq = 1
    nodes = 0
    pruned_bound = math.inf
    status = None

    def gap_closed(bound):
        return ub_val < math.inf and ub_val - bound <= cfg.gap * max(abs(ub_val), 1e-9)

    while heap:
        if cfg.time_limit is not None and elapsed() >= cfg.time_limit:
            status = TIME_LIMIT
            break
        if cfg.node_limit is not None and nodes >= cfg.node_limit:
            status = "node_limit"
            break
        node = heapq.heappop(heap)
        if gap_closed(node.bound):
            pruned_bound = min(pruned_bound, node.bound)
            continue
        nodes += 1
        if model.n_vars != n_known:
            triples = _rnf_triples(blocks)
            n_known = model.n_vars
        bins = np.array(model.vars.binaries(), dtype=np.int64)
        lb = np.array(model.vars.lb)
        ub = np.array(model.vars.ub)
        for j, v in node.fix.items():
            lb[j] = ub[j] = v
        session.sync()
        session.set_bounds(bins, lb[bins], ub[bins])

        rounds = 0
        node_status = None
        while True:
            sol = session.solve(remaining())
            lp_solves += 1
            if sol.status != OPTIMAL:
                node_status = sol.status
                break
            x = sol.x
            if model.n_vars != n_known:
                triples = _rnf_triples(blocks)
                n_known = model.n_vars
                bins = np.array(model.vars.binaries(), dtype=np.int64)
                lb = np.array(model.vars.lb)
                ub = np.array(model.vars.ub)
                for j, v in node.fix.items():
                    lb[j] = ub[j] = v
            if gap_closed(sol.obj):
                node_status = "pruned"
                pruned_bound = min(pruned_bound, sol.obj)
                break
            rounds += 1
            if rounds <= cfg.max_cut_rounds:
                k = soc_round(x)
                if k:
                    soc_cuts += k
                    continue
            snap_binaries(x, triples, lb, ub)
            frac = np.minimum(x[bins], 1.0 - x[bins]) if bins.size else np.zeros(0)
            if frac.size and frac.max() > cfg.int_tol:
                node_status = "branch"
                break
            if callback is not None:
                checks += 1
                added = callback(model, x)
                if added:
                    session.sync()
                    if model.n_vars != n_known:
                        new_bins = np.array(model.vars.binaries(), dtype=np.int64)
                        fresh = np.setdiff1d(new_bins, bins)
                        session.reset_bounds(fresh)
                        bins = new_bins
                    continue
            x = np.where(np.isin(np.arange(len(x)), bins), np.round(x), x)
            if sol.obj < ub_val:
                accept(x, sol.obj, "node")
            node_status = "integral"
            break

        if node_status == TIME_LIMIT:
            heapq.heappush(heap, node)
            status = TIME_LIMIT
            break
        if node_status != "branch":
            continue
        j = int(bins[np.argmax(frac)])  # argmax returns the lowest index among ties
        for v in (0.0, 1.0):
            child = dict(node.fix)
            child[j] = v
            heapq.heappush(heap, _Node(sol.obj, seq, node.depth + 1, child))
            seq += 1

    open_bound = min((n.bound for n in heap), default=math.inf)
    bound = min(open_bound, pruned_bound, ub_val)
    if status is None:
        status = OPTIMAL if best is not None else INFEASIBLE
    if best is None:
        obj, gap = math.nan, math.inf
        if status == INFEASIBLE:
            bound = math.inf
    else:
        obj = best.objective
        gap = max(0.0, (obj - bound) / max(abs(obj), 1e-9))
    report = SolveReport(status=status, objective=obj, bound=bound, gap=gap, nodes=nodes,
                         lp_solves=lp_solves, wall_time=elapsed(), checks=checks,
                         soc_cuts=soc_cuts, incumbents=history, method=cfg.method,
                         errors=best.errors.summary() if best is not None and best.errors else None)
    return best, report
