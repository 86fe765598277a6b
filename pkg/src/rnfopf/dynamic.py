"""Lazy generation of R&F stages, inner cuts and tangent outer cuts."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bfm import ETA, SocBlock, block_error
from .model import LinearModel
from .rnf import (PR, QPR, append_rnf_stage, inner_cut_row, outer_cut_row, outer_level_error,
                  rnf_trace, theta)

INSIDE, OUTSIDE = "inside", "outside"
_NOISE = 1e-9
_ROW_TOL = 1e-9


@dataclass
class CutRequest:
    kind: str  # inner | outer
    block: int
    level: int
    angles: tuple[float, ...] = ()
    stages_added: int = 0
    rows: list[int] = field(default_factory=list)


def _terminal_ok(kind: str, g: float, h: float, z: float, K: int, tol: float = _ROW_TOL) -> bool:
    t1 = theta(K + 1)
    scale = max(abs(z), 1.0)
    inner = z * math.cos(t1) <= g * math.cos(t1) + h * math.sin(t1) + tol * scale
    if kind == QPR:
        return inner
    tK = theta(K)
    return (inner and g <= z + tol * scale
            and g * math.cos(tK) + h * math.sin(tK) <= z + tol * scale)


def violation_check(point: tuple[float, float, float], block: SocBlock, K_max: int, eps: float,
                    kind: str = PR, eta: float = ETA) -> str | None:
    """Classify a candidate that needs a cut as ``inside``/``outside``; ``None`` if it passes."""
    x, y, z = point
    d, _, rel = block_error(x, y, z, eta)
    if rel <= eps + _NOISE:
        return None
    g, h, _ = rnf_trace(x, y, z, K_max)[-1]
    if _terminal_ok(kind, g, h, z, K_max):
        return None
    if x == 0.0 and y == 0.0:
        return INSIDE
    return OUTSIDE if d > 0 else INSIDE


def inner_cut_level(point: tuple[float, float, float], k0: int, K_max: int) -> int | None:
    """Smallest ``k1 > k0`` whose inner cut the point violates."""
    x, y, z = point
    trace = rnf_trace(x, y, z, K_max)
    for k1 in range(k0 + 1, K_max + 1):
        g, h, _ = trace[k1]
        t = theta(k1 + 1)
        if z * math.cos(t) > g * math.cos(t) + h * math.sin(t) + _ROW_TOL * max(abs(z), 1.0):
            return k1
    return None


def add_inner_cut(model: LinearModel, block: SocBlock, point, K_max: int) -> CutRequest:
    k0 = block.depth
    k1 = inner_cut_level(point, k0, K_max)
    if k1 is None:
        raise RuntimeError(f"block {block.id}: no violated inner cut up to level {K_max}")
    rows = []
    for k in range(k0 + 1, k1 + 1):
        rows.extend(append_rnf_stage(model, block, k).rows)
    rows.append(model.add_row(*inner_cut_row(block, k1), "dyn-inner"))
    block.inner_levels.add(k1)
    return CutRequest("inner", block.id, k1, (), k1 - k0, rows)


def outer_cut_angles(point, k0: int, K_max: int, eta: float = ETA) -> tuple[int, float, float]:
    """Level ``k_new`` and the two bracketing tangent angles in level-``k0`` coordinates."""
    x, y, z = point
    g, h, _ = rnf_trace(x, y, z, k0)[-1]
    rel = block_error(x, y, z, eta)[2]
    k_new = K_max
    for k in range(k0 + 1, K_max + 1):
        if rel > outer_level_error(k):
            k_new = k
            break
    step = math.pi / 2 ** (k_new + 1)
    theta_star = math.atan2(h, g)
    psi1 = step * math.floor(theta_star / step + 1e-12)
    top = theta(k0)
    psi1 = min(psi1, top)
    psi2 = min(psi1 + step, top)
    return k_new, psi1, psi2


def add_outer_cut(model: LinearModel, block: SocBlock, point, K_max: int,
                  eta: float = ETA) -> CutRequest:
    k0 = block.depth
    k_new, psi1, psi2 = outer_cut_angles(point, k0, K_max, eta)
    x, y, z = point
    g, h, _ = rnf_trace(x, y, z, k0)[-1]
    rows = []
    for psi in dict.fromkeys((psi1, psi2)):
        key = (k0, round(psi / (math.pi / 2 ** (K_max + 1))))
        if key in block.outer_angles:
            continue
        if g * math.cos(psi) + h * math.sin(psi) <= z + _ROW_TOL * max(abs(z), 1.0):
            continue
        rows.append(model.add_row(*outer_cut_row(block, k0, psi), "dyn-outer"))
        block.outer_angles.add(key)
    return CutRequest("outer", block.id, k_new, (psi1, psi2), 0, rows)


class DynamicCallback:
    """Lazy-cut callback: route every ε-violating block to an inner or outer cut."""

    def __init__(self, blocks: list[SocBlock], kind: str, K_max: int, eps: float,
                 eta: float = ETA, log_path: str | None = None):
        self.blocks = blocks
        self.kind = kind
        self.K_max = K_max
        self.eps = eps
        self.eta = eta
        self.checks = 0
        self.rnf_added = {b.id: 0 for b in blocks}
        self.outer_added = {b.id: 0 for b in blocks}
        self.events: list[dict] = []
        self.stuck = 0
        self._log = open(log_path, "w") if log_path else None

    def __call__(self, model: LinearModel, x: np.ndarray, dry_run: bool = False) -> int:
        if not dry_run:
            self.checks += 1
        added = 0
        for blk in self.blocks:
            pt = blk.values(x)
            verdict = violation_check(pt, blk, self.K_max, self.eps, self.kind, self.eta)
            if verdict is None:
                continue
            if dry_run:
                added += 1
                continue
            if verdict == INSIDE:
                req = add_inner_cut(model, blk, pt, self.K_max)
                self.rnf_added[blk.id] += req.stages_added
            else:
                req = add_outer_cut(model, blk, pt, self.K_max, self.eta)
                self.outer_added[blk.id] += len(req.rows)
            if not req.rows:
                self.stuck += 1
            added += len(req.rows)
            ev = {"block": blk.id, "kind": req.kind, "level": req.level,
                  "angles": list(req.angles), "rows": len(req.rows),
                  "delta_rel": block_error(*pt, self.eta)[2]}
            self.events.append(ev)
            if self._log:
                self._log.write(json.dumps(ev) + "\n")
        return added

    def close(self):
        if self._log:
            self._log.close()
            self._log = None

    def stats(self) -> dict:
        n = max(len(self.blocks), 1)
        return {
            "checks": self.checks,
            "rnf_mappings": sum(self.rnf_added.values()),
            "outer_cuts": sum(self.outer_added.values()),
            "avg_rnf_per_block": sum(self.rnf_added.values()) / n,
            "avg_outer_per_block": sum(self.outer_added.values()) / n,
            "max_depth": max((b.depth for b in self.blocks), default=-1),
            "stuck": self.stuck,
            "per_block": {str(b.id): {"rnf": self.rnf_added[b.id], "outer": self.outer_added[b.id],
                                      "depth": b.depth} for b in self.blocks},
        }


def build_dynamic_model(case, kind: str, k_init: int):
    """Base model plus ``k_init`` stages and the starting terminal rows per block."""
    from .bfm import build_base_model
    from .rnf import build_static

    model, blocks = build_base_model(case)
    build_static(model, blocks, kind, k_init)
    return model, blocks


def dynamic_solve(case, config, warm_start=None, model_blocks=None, log=None, cut_log: str | None = None):
    """Solve DPR/DQPR: start at ``k_init`` stages and deepen blocks on demand.

    ``warm_start`` may be a callable ``(model, blocks) -> x`` evaluated on the
    initial model.
    """
    from .bnc import branch_and_cut

    kind = config.kind
    if config.method not in ("DPR", "DQPR"):
        raise ValueError("dynamic_solve needs method DPR or DQPR")
    model, blocks = model_blocks or build_dynamic_model(case, kind, config.k_init)
    x0 = warm_start(model, blocks) if callable(warm_start) else warm_start
    cb = DynamicCallback(blocks, kind, config.k_max, config.epsilon, config.eta, cut_log)
    try:
        inc, rep = branch_and_cut(model, blocks, cb, config, warm_start=x0, log=log)
    finally:
        cb.close()
    rep.cut_stats = cb.stats()
    rep.checks = cb.checks
    rep.extra["model"] = {"rows": model.n_rows, "cols": model.n_vars,
                          "binaries": len(model.vars.binaries())}
    return inc, rep, model, blocks
