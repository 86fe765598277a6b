"""Relaxed branch-flow OPF assembly, cone blocks and conic-error metrics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .case_io import NetworkCase, effective_s_max
from .model import EQ, GE, LE, LinearModel, LinExpr, eval_expr

ETA = 1e-8

POWER_CONE = "power"
CV_CONE = "cv"


class AssemblyError(RuntimeError):
    pass


@dataclass
class SocBlock:
    """One 3-D cone surface ``x^2 + y^2 = z^2`` over linear expressions."""

    id: int
    kind: str
    branch: int
    z: LinExpr
    x: LinExpr
    y: LinExpr
    z_max: float
    big_m: float
    depth: int = -1
    stages: list = field(default_factory=list)
    terminal: str | None = None
    terminal_level: int | None = None
    exact_soc: bool = False
    inner_levels: set = field(default_factory=set)
    outer_angles: set = field(default_factory=set)

    def values(self, x) -> tuple[float, float, float]:
        return eval_expr(self.x, x), eval_expr(self.y, x), eval_expr(self.z, x)

    def clone(self) -> "SocBlock":
        return SocBlock(
            self.id, self.kind, self.branch, dict(self.z), dict(self.x), dict(self.y),
            self.z_max, self.big_m, self.depth, list(self.stages), self.terminal,
            self.terminal_level, self.exact_soc, set(self.inner_levels), set(self.outer_angles),
        )


@dataclass
class BranchTerms:
    """Per-branch quantities needed by error metrics and warm starts."""

    P: int
    Q: int
    S: int
    Phi: int
    W_from: int
    W_to: int
    inv_tap2: float


def build_base_model(case: NetworkCase) -> tuple[LinearModel, list[SocBlock]]:
    """Assemble objective and all linear rows of the relaxed branch-flow OPF.

    The returned model has no conic rows; each branch contributes two
    :class:`SocBlock` descriptors (power cone and current-voltage cone)
    that the relaxation builders turn into rows.
    """
    model = LinearModel()
    vm = model.vars
    nb = len(case.buses)

    W = []
    for b in case.buses:
        W.append(vm.add(f"W[{b.id}]", b.v_min ** 2, b.v_max ** 2, group="W"))
    pg, qg = {}, {}
    for g, gen in case.online_generators:
        pg[g] = vm.add(f"pg[{g}]", gen.p_min, gen.p_max, group="pg")
        qg[g] = vm.add(f"qg[{g}]", gen.q_min, gen.q_max, group="qg")
        model.objective[pg[g]] = gen.c1
        model.obj_offset += gen.c0

    bal_p = [dict() for _ in range(nb)]
    bal_q = [dict() for _ in range(nb)]

    def acc(row, j, c):
        row[j] = row.get(j, 0.0) + c

    for g, gen in case.online_generators:
        i = case.bus_index(gen.bus)
        acc(bal_p[i], pg[g], 1.0)
        acc(bal_q[i], qg[g], 1.0)
    for i, b in enumerate(case.buses):
        if b.g_s:
            acc(bal_p[i], W[i], -b.g_s)
        if b.b_s:
            acc(bal_q[i], W[i], b.b_s)

    blocks: list[SocBlock] = []
    terms: list[BranchTerms] = []
    for l, br in enumerate(case.branches):
        i, j = case.bus_index(br.from_bus), case.bus_index(br.to_bus)
        s_max = effective_s_max(case, br)
        if not math.isfinite(s_max) or s_max <= 0:
            raise AssemblyError(f"branch {l}: no finite flow bound")
        t2 = 1.0 / br.tap ** 2
        vmin_int2 = case.buses[i].v_min ** 2 * t2
        vmax_int2 = case.buses[i].v_max ** 2 * t2
        phi_max = s_max ** 2 / vmin_int2
        P = vm.add(f"P[{l}]", -s_max, s_max, group="P")
        Q = vm.add(f"Q[{l}]", -s_max, s_max, group="Q")
        S = vm.add(f"S[{l}]", 0.0, s_max, group="S")
        Phi = vm.add(f"Phi[{l}]", 0.0, phi_max, group="Phi")
        r, x, half_b = br.r, br.x, br.b_c / 2.0

        # sending end: series flow plus from-side half charging
        acc(bal_p[i], P, -1.0)
        acc(bal_q[i], Q, -1.0)
        acc(bal_q[i], W[i], half_b * t2)
        # receiving end: series flow minus losses plus to-side half charging
        acc(bal_p[j], P, 1.0)
        acc(bal_p[j], Phi, -r)
        acc(bal_q[j], Q, 1.0)
        acc(bal_q[j], Phi, -x)
        acc(bal_q[j], W[j], half_b)

        model.add_row({W[i]: t2, W[j]: -1.0, P: -2 * r, Q: -2 * x, Phi: r * r + x * x}, EQ, 0.0,
                      f"vdrop[{l}]")
        lo = max(br.ang_min - br.shift, -math.radians(89.9))
        hi = min(br.ang_max - br.shift, math.radians(89.9))
        for tan_t, sense, tag in ((math.tan(lo), GE, "angle-lo"), (math.tan(hi), LE, "angle-hi")):
            # x P - r Q  vs  tan * (W_i' - r P - x Q)
            model.add_row({P: x + tan_t * r, Q: -r + tan_t * x, W[i]: -tan_t * t2}, sense, 0.0,
                          f"{tag}[{l}]")

        z_cv_max = (vmax_int2 + phi_max) / 2.0
        blocks.append(SocBlock(id=len(blocks), kind=POWER_CONE, branch=l, z={S: 1.0}, x={P: 1.0},
                               y={Q: 1.0}, z_max=s_max, big_m=s_max))
        blocks.append(SocBlock(id=len(blocks), kind=CV_CONE, branch=l,
                               z={W[i]: 0.5 * t2, Phi: 0.5}, x={S: 1.0},
                               y={W[i]: 0.5 * t2, Phi: -0.5},
                               z_max=z_cv_max, big_m=z_cv_max))
        terms.append(BranchTerms(P, Q, S, Phi, W[i], W[j], t2))

    for i, b in enumerate(case.buses):
        model.add_row(bal_p[i], EQ, b.p_d, f"balance-p[{b.id}]")
        model.add_row(bal_q[i], EQ, b.q_d, f"balance-q[{b.id}]")
    model.branch_terms = terms
    return model, blocks


def base_row_count(n_bus: int, n_branch: int) -> int:
    """Rows emitted by :func:`build_base_model`: 2 balances per bus, 3 per branch."""
    return 2 * n_bus + 3 * n_branch


# --------------------------------------------------------------------------
# conic errors


@dataclass
class ConicErrorReport:
    block_abs: list[float]
    block_rel: list[float]
    branch_abs: list[float]
    branch_rel: list[float]
    eta: float

    @property
    def rel_inf(self) -> float:
        return max(self.branch_rel, default=0.0)

    @property
    def abs_inf(self) -> float:
        return max(self.branch_abs, default=0.0)

    @property
    def abs_one(self) -> float:
        return float(sum(self.branch_abs))

    @property
    def block_rel_inf(self) -> float:
        return max(self.block_rel, default=0.0)

    def summary(self) -> dict:
        return {"rel_inf": float(self.rel_inf), "abs_inf": float(self.abs_inf),
                "abs_one": float(self.abs_one), "block_rel_inf": float(self.block_rel_inf)}

    def to_json(self) -> str:
        d = {k: [float(v) for v in vals] if isinstance(vals, list) else vals
             for k, vals in asdict(self).items()}
        d.update(self.summary())
        return json.dumps(d)


def block_error(xv: float, yv: float, zv: float, eta: float = ETA) -> tuple[float, float, float]:
    """Signed error ``x^2 + y^2 - z^2`` and its absolute / relative forms."""
    d = xv * xv + yv * yv - zv * zv
    return d, abs(d), abs(d) / (zv * zv + eta)


def conic_errors(point, blocks: list[SocBlock], model: LinearModel | None = None,
                 eta: float = ETA) -> ConicErrorReport:
    """Per-block 3-D errors and per-branch 4-D errors ``|P^2+Q^2-Phi W|``.

    The 4-D figures need the branch variables and are only filled when
    ``model`` (as returned by :func:`build_base_model`) is given.
    """
    x = np.asarray(point, dtype=float)
    b_abs, b_rel = [], []
    for blk in blocks:
        _, a, r = block_error(*blk.values(x), eta)
        b_abs.append(a)
        b_rel.append(r)
    br_abs, br_rel = [], []
    terms = getattr(model, "branch_terms", None) if model is not None else None
    if terms:
        for t in terms:
            P, Q, Phi = x[t.P], x[t.Q], x[t.Phi]
            Wp = x[t.W_from] * t.inv_tap2
            d = abs(P * P + Q * Q - Phi * Wp)
            br_abs.append(d)
            br_rel.append(d / (((Wp + Phi) / 2.0) ** 2 + eta))
    return ConicErrorReport(b_abs, b_rel, br_abs, br_rel, eta)


def four_d_error(P: float, Q: float, Phi: float, W: float, eta: float = ETA) -> tuple[float, float]:
    d = abs(P * P + Q * Q - Phi * W)
    return d, d / (((W + Phi) / 2.0) ** 2 + eta)


def epsilon_feasible(point, blocks: list[SocBlock], eps: float, eta: float = ETA):
    """``(ok, worst_block_id)``; the worst id is ``None`` when every block passes."""
    x = np.asarray(point, dtype=float)
    worst, worst_val = None, -1.0
    for blk in blocks:
        r = block_error(*blk.values(x), eta)[2]
        if r > worst_val:
            worst, worst_val = blk.id, r
    if worst_val <= eps:
        return True, None
    return False, worst
