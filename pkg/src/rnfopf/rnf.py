"""Rotation-and-fold (R&F) encodings of a 3-D cone surface.

A block ``x^2 + y^2 = z^2`` is folded into the first quadrant
(``g0 = |x|, h0 = |y|``) and then repeatedly rotated by
``theta_k = pi / 2**(k+1)`` and folded again.  Each absolute value is a
big-M system with one binary.  The terminal rows decide which object is
modelled: the inscribed pyramid (PA), the wedge relaxation (PR) or the
circular-segment relaxation that keeps the exact cone (QPR).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .bfm import SocBlock
from .model import EQ, LE, LinearModel, combine

PA, PR, QPR = "PA", "PR", "QPR"


class DepthError(ValueError):
    pass


def theta(k: int) -> float:
    if k < 0:
        raise ValueError("k must be >= 0")
    return math.pi / 2 ** (k + 1)


def tolerance(kind: str, K: int) -> float:
    """Worst relative conic error of a K-stage formulation."""
    if kind == PA:
        if K < 1:
            raise DepthError("PA needs K >= 1")
        return math.sin(theta(K)) ** 2
    if kind == PR:
        return math.tan(theta(K + 1)) ** 2
    if kind == QPR:
        return math.sin(theta(K + 1)) ** 2
    raise ValueError(f"unknown kind {kind!r}")


def outer_level_error(k: int) -> float:
    """Largest relative error left by tangents spaced ``pi / 2**(k+1)`` apart."""
    return math.tan(math.pi / 2 ** (k + 2)) ** 2


@dataclass
class RnfStage:
    level: int
    g: int
    h: int
    binaries: list[int]
    omegas: list[tuple[int, int]]
    rows: list[int] = field(default_factory=list)


@dataclass
class TerminalCut:
    kind: str
    level: int
    rows: list[int]


def _abs_system(model: LinearModel, X: dict, Y: int, M: float, name: str, rows: list[int]):
    """Big-M encoding of ``Y = |X|``; returns (beta, (omega1, omega2))."""
    w1 = model.add_var(f"{name}.w1", 0.0, 1.0)
    w2 = model.add_var(f"{name}.w2", 0.0, 1.0)
    beta = model.add_var(f"{name}.beta", 0.0, 1.0, binary=True)
    rows.append(model.add_row(combine((1.0, X), (1.0, {w1: -M, w2: M})), EQ, 0.0, "rnf-x"))
    rows.append(model.add_row({Y: 1.0, w1: -M, w2: -M}, EQ, 0.0, "rnf-y"))
    rows.append(model.add_row({w1: 1.0, beta: -1.0}, LE, 0.0, "rnf-w1"))
    rows.append(model.add_row({w2: 1.0, beta: 1.0}, LE, 1.0, "rnf-w2"))
    return beta, (w1, w2)


def append_rnf_stage(model: LinearModel, block: SocBlock, k: int) -> RnfStage:
    """Add the level-``k`` fold (plus its ``g_k <= z`` row) to ``block``."""
    if k != block.depth + 1:
        raise DepthError(f"block {block.id} is at depth {block.depth}; cannot add stage {k}")
    M = block.big_m
    tag = f"b{block.id}.k{k}"
    rows: list[int] = []
    z_neg = {j: -c for j, c in block.z.items()}
    if k == 0:
        g = model.add_var(f"{tag}.g", 0.0, M)
        h = model.add_var(f"{tag}.h", 0.0, M)
        bx, wx = _abs_system(model, block.x, g, M, f"{tag}.x", rows)
        by, wy = _abs_system(model, block.y, h, M, f"{tag}.y", rows)
        rows.append(model.add_row(combine((1.0, {g: 1.0}), (1.0, z_neg)), LE, 0.0, "rnf-gz"))
        rows.append(model.add_row(combine((1.0, {h: 1.0}), (1.0, z_neg)), LE, 0.0, "rnf-gz"))
        stage = RnfStage(0, g, h, [bx, by], [wx, wy], rows)
    else:
        prev = block.stages[k - 1]
        c, s = math.cos(theta(k)), math.sin(theta(k))
        g = model.add_var(f"{tag}.g", 0.0, math.sqrt(2.0) * M)
        h = model.add_var(f"{tag}.h", 0.0, M)
        rows.append(model.add_row({g: 1.0, prev.g: -c, prev.h: -s}, EQ, 0.0, "rnf-rot"))
        b, w = _abs_system(model, {prev.g: -s, prev.h: c}, h, M, f"{tag}.r", rows)
        rows.append(model.add_row(combine((1.0, {g: 1.0}), (1.0, z_neg)), LE, 0.0, "rnf-gz"))
        stage = RnfStage(k, g, h, [b], [w], rows)
    block.stages.append(stage)
    block.depth = k
    return stage


def inner_cut_row(block: SocBlock, k: int) -> tuple[dict, str, float]:
    """``z cos t <= g_k cos t + h_k sin t`` with ``t = theta(k+1)`` as (coefs, sense, rhs)."""
    st = block.stages[k]
    t = theta(k + 1)
    c, s = math.cos(t), math.sin(t)
    return combine((c, block.z), (1.0, {st.g: -c, st.h: -s})), LE, 0.0


def outer_cut_row(block: SocBlock, k: int, psi: float) -> tuple[dict, str, float]:
    """Tangent ``g_k cos psi + h_k sin psi <= z`` in level-``k`` folded coordinates."""
    st = block.stages[k]
    return combine((1.0, {st.g: math.cos(psi), st.h: math.sin(psi)}), (-1.0, block.z)), LE, 0.0


def append_terminal(model: LinearModel, block: SocBlock, K: int, kind: str) -> TerminalCut:
    if block.depth != K:
        raise DepthError(f"block {block.id} is at depth {block.depth}, terminal needs {K}")
    st = block.stages[K]
    rows: list[int] = []
    if kind == PA:
        if K < 1:
            raise DepthError("PA needs K >= 1")
        c, s = math.cos(theta(K)), math.sin(theta(K))
        rows.append(model.add_row(combine((1.0, {st.g: 1.0}), (-c, block.z)), EQ, 0.0, "pa-facet"))
        rows.append(model.add_row(combine((1.0, {st.h: 1.0}), (-s, block.z)), LE, 0.0, "pa-facet"))
    elif kind == PR:
        # g_K <= z is already part of the stage; at K = 0 so is h_0 <= z
        c, s = math.cos(theta(K)), math.sin(theta(K))
        if K == 0:
            rows.extend(st.rows[-2:])
        else:
            rows.append(st.rows[-1])
            rows.append(model.add_row(combine((1.0, {st.g: c, st.h: s}), (-1.0, block.z)), LE, 0.0, "pr-outer"))
        rows.append(model.add_row(*inner_cut_row(block, K), "pr-inner"))
        block.inner_levels.add(K)
    elif kind == QPR:
        rows.append(model.add_row(*inner_cut_row(block, K), "qpr-inner"))
        block.inner_levels.add(K)
        block.exact_soc = True
    else:
        raise ValueError(f"unknown terminal kind {kind!r}")
    block.terminal = kind
    block.terminal_level = K
    return TerminalCut(kind, K, rows)


def build_static(model: LinearModel, blocks: list[SocBlock], kind: str, K: int) -> None:
    """Give every block ``K`` stages and the ``kind`` terminal rows."""
    for blk in blocks:
        for k in range(blk.depth + 1, K + 1):
            append_rnf_stage(model, blk, k)
        append_terminal(model, blk, K, kind)


# --------------------------------------------------------------------------
# numeric R&F


def rnf_trace(x: float, y: float, z: float, K: int) -> list[tuple[float, float, object]]:
    """Apply the folds numerically; level 0 carries the two quadrant signs.

    A binary is 1 when the folded argument is non-negative.
    """
    g, h = abs(x), abs(y)
    out: list[tuple[float, float, object]] = [(g, h, (int(x >= 0), int(y >= 0)))]
    for k in range(1, K + 1):
        t = theta(k)
        c, s = math.cos(t), math.sin(t)
        arg = -s * g + c * h
        g, h = c * g + s * h, abs(arg)
        out.append((g, h, int(arg >= 0)))
    return out


def rnf_trace_array(x: np.ndarray, y: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised trace returning ``g, h`` of shape ``(K+1, n)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    G = np.empty((K + 1,) + x.shape)
    H = np.empty_like(G)
    g, h = np.abs(x), np.abs(y)
    G[0], H[0] = g, h
    for k in range(1, K + 1):
        t = theta(k)
        c, s = math.cos(t), math.sin(t)
        g, h = c * g + s * h, np.abs(-s * g + c * h)
        G[k], H[k] = g, h
    return G, H


def unfold(g: np.ndarray, h: np.ndarray, signs: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Invert the folds: ``signs`` has shape ``(K+2, n)`` with entries +-1.

    Rows ``0..K-1`` undo levels ``K..1`` (innermost first); the last two
    give the signs of ``x`` and ``y``.
    """
    g = np.asarray(g, dtype=float).copy()
    h = np.asarray(h, dtype=float).copy()
    for idx, k in enumerate(range(K, 0, -1)):
        t = theta(k)
        c, s = math.cos(t), math.sin(t)
        a = signs[idx] * h  # the signed pre-fold value of -s g + c h
        g, h = c * g - s * a, s * g + c * a
    return signs[K] * g, signs[K + 1] * h


def direct_pyramid_oracle(x: float, y: float, z: float, K: int, tol: float = 1e-9) -> bool:
    """Membership of ``(x, y, z)`` in the surface of the regular ``2**(K+1)``-gon pyramid."""
    if z < -tol:
        return False
    if abs(z) <= tol:
        return abs(x) <= tol and abs(y) <= tol
    N = 2 ** (K + 1)
    for n in range(N):
        a = 2 * math.pi * n / N
        b = 2 * math.pi * (n + 1) / N
        A = np.array([[z * math.cos(a), z * math.cos(b)], [z * math.sin(a), z * math.sin(b)]])
        w = np.linalg.solve(A, [x, y])
        if w.min() >= -tol and abs(w.sum() - 1.0) <= tol:
            return True
    return False


def _single_block(K: int, kind: str, M: float = 2.0) -> tuple[LinearModel, SocBlock, tuple[int, int, int]]:
    m = LinearModel()
    xi = m.add_var("x", -M, M)
    yi = m.add_var("y", -M, M)
    zi = m.add_var("z", 0.0, M)
    blk = SocBlock(0, "test", 0, {zi: 1.0}, {xi: 1.0}, {yi: 1.0}, M, M)
    build_static(m, [blk], kind, K)
    return m, blk, (xi, yi, zi)


def rnf_membership(points: np.ndarray, K: int, kind: str = PA, tol: float = 1e-9) -> np.ndarray:
    """Decide R&F feasibility by enumerating every binary assignment.

    For each of the ``2**(K+2)`` assignments the binaries are substituted
    into the generated rows, single-variable rows become bounds, the
    remaining equalities are solved, and the result is checked against all
    rows and bounds.  Nothing here reuses :func:`rnf_trace`.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m, blk, (xi, yi, zi) = _single_block(K, kind)
    n = m.n_vars
    A = m.matrix().toarray()
    lo_r, hi_r = m.row_bounds()
    lb0 = np.array(m.vars.lb)
    ub0 = np.array(m.vars.ub)
    bins = m.vars.binaries()
    fixed_base = {xi, yi, zi}
    result = np.zeros(len(pts), dtype=bool)
    for assign in itertools.product((0.0, 1.0), repeat=len(bins)):
        lb, ub = lb0.copy(), ub0.copy()
        for j, v in zip(bins, assign):
            lb[j] = ub[j] = v
        fixed = set(bins) | fixed_base
        # rows touching a single free variable tighten its bounds
        for _ in range(3):
            for i in range(m.n_rows):
                row = A[i]
                nz = np.nonzero(row)[0]
                free = [j for j in nz if j not in fixed]
                if len(free) != 1 or any(j in fixed_base for j in nz):
                    continue
                j = free[0]
                const = sum(row[q] * lb[q] for q in nz if q != j)
                a = row[j]
                lo_v = (lo_r[i] - const) / a if np.isfinite(lo_r[i]) else -np.inf
                hi_v = (hi_r[i] - const) / a if np.isfinite(hi_r[i]) else np.inf
                if a < 0:
                    lo_v, hi_v = hi_v, lo_v
                lb[j] = max(lb[j], lo_v)
                ub[j] = min(ub[j], hi_v)
                if ub[j] - lb[j] <= 1e-12:
                    ub[j] = lb[j] = (lb[j] + ub[j]) / 2 if np.isfinite(lb[j]) else ub[j]
                    fixed.add(j)
        if any(lb[j] > ub[j] + tol for j in range(n)):
            continue
        free = [j for j in range(n) if j not in fixed]
        eq_rows = [i for i in range(m.n_rows) if lo_r[i] == hi_r[i]]
        Af = A[np.ix_(eq_rows, free)]
        Ax = A[np.ix_(eq_rows, [xi, yi, zi])]
        fixed_other = [j for j in fixed if j not in fixed_base]
        base_rhs = lo_r[eq_rows] - A[np.ix_(eq_rows, fixed_other)] @ lb[fixed_other]
        rhs = base_rhs[:, None] - Ax @ pts.T
        sol, *_ = np.linalg.lstsq(Af, rhs, rcond=None)
        X = np.tile(lb[:, None], (1, len(pts)))
        X[free] = sol
        X[xi], X[yi], X[zi] = pts[:, 0], pts[:, 1], pts[:, 2]
        act = A @ X
        ok = np.all(act >= lo_r[:, None] - tol, axis=0) & np.all(act <= hi_r[:, None] + tol, axis=0)
        ok &= np.all(X >= lb0[:, None] - tol, axis=0) & np.all(X <= ub0[:, None] + tol, axis=0)
        result |= ok
    return result
