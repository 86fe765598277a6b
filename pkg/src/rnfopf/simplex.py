"""Dense bounded-variable revised simplex for small LPs.

Used as a reference backend and in tests; large relaxations go through
HiGHS (see :mod:`rnfopf.lp`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL, INFEASIBLE, UNBOUNDED, ITERATION_LIMIT = "optimal", "infeasible", "unbounded", "iteration_limit"

_AT_LB, _AT_UB, _FREE, _BASIC = 0, 1, 2, 3


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray | None
    obj: float
    iterations: int


class _Tableau:
    """State of one bounded simplex run on ``A v = b, l <= v <= u``."""

    def __init__(self, A, b, l, u, basis, status, v, tol):
        self.A, self.b, self.l, self.u = A, b, l, u
        self.basis = list(basis)
        self.status = status
        self.v = v
        self.tol = tol
        self.iterations = 0

    def _basic_values(self):
        B = self.A[:, self.basis]
        nb = self.status != _BASIC
        rhs = self.b - self.A[:, nb] @ self.v[nb]
        self.v[self.basis] = np.linalg.solve(B, rhs)

    def run(self, c, max_iter):
        tol = self.tol
        degenerate = 0
        m, n = self.A.shape
        while self.iterations < max_iter:
            self._basic_values()
            B = self.A[:, self.basis]
            y = np.linalg.solve(B.T, c[self.basis])
            d = c - self.A.T @ y
            bland = degenerate > 10 * m
            can_up = (self.status != _BASIC) & (d < -tol) & (self.v < self.u - tol)
            can_dn = (self.status != _BASIC) & (d > tol) & (self.v > self.l + tol)
            cand = np.nonzero(can_up | can_dn)[0]
            if cand.size == 0:
                return OPTIMAL
            j = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if can_up[j] else -1.0
            w = np.linalg.solve(B, self.A[:, j])
            delta = -direction * w  # change of basics per unit step
            t_best = self.u[j] - self.l[j]
            leave, leave_to = -1, None
            for i in range(m):
                k = self.basis[i]
                if delta[i] < -1e-11:
                    t = (self.v[k] - self.l[k]) / -delta[i]
                    to = self.l[k]
                elif delta[i] > 1e-11:
                    t = (self.u[k] - self.v[k]) / delta[i]
                    to = self.u[k]
                else:
                    continue
                t = max(t, 0.0)
                if t < t_best - 1e-12 or (t <= t_best + 1e-12 and leave >= 0 and bland and k < self.basis[leave]):
                    t_best, leave, leave_to = t, i, to
            if not np.isfinite(t_best):
                return UNBOUNDED
            self.iterations += 1
            degenerate = degenerate + 1 if t_best <= 1e-12 else 0
            if leave < 0:
                # bound flip
                self.v[j] = self.u[j] if direction > 0 else self.l[j]
                self.status[j] = _AT_UB if direction > 0 else _AT_LB
                continue
            self.v[j] += direction * t_best
            k = self.basis[leave]
            self.v[k] = leave_to
            self.status[k] = _AT_LB if leave_to == self.l[k] else _AT_UB
            self.basis[leave] = j
            self.status[j] = _BASIC
        return ITERATION_LIMIT


def simplex_solve(c, A, row_lo, row_hi, lb, ub, tol: float = 1e-9, max_iter: int = 50_000) -> SimplexResult:
    """Minimise ``c x`` subject to ``row_lo <= A x <= row_hi`` and ``lb <= x <= ub``.

    Rows get explicit slack columns so every constraint is an equality
    with a bounded variable; phase one drives artificial columns to zero.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    c = np.asarray(c, dtype=float)
    Af = np.hstack([A, -np.eye(m)])
    l = np.concatenate([np.asarray(lb, float), np.asarray(row_lo, float)])
    u = np.concatenate([np.asarray(ub, float), np.asarray(row_hi, float)])
    if np.any(l > u + tol):
        return SimplexResult(INFEASIBLE, None, np.nan, 0)
    N = n + m
    v = np.zeros(N)
    status = np.full(N, _FREE)
    fin_l, fin_u = np.isfinite(l), np.isfinite(u)
    v[fin_l] = l[fin_l]
    status[fin_l] = _AT_LB
    only_u = ~fin_l & fin_u
    v[only_u] = u[only_u]
    status[only_u] = _AT_UB

    r = -Af @ v
    sign = np.where(r >= 0, 1.0, -1.0)
    A1 = np.hstack([Af, np.diag(sign)])
    l1 = np.concatenate([l, np.zeros(m)])
    u1 = np.concatenate([u, np.full(m, np.inf)])
    v1 = np.concatenate([v, np.abs(r)])
    st1 = np.concatenate([status, np.full(m, _BASIC)])
    tab = _Tableau(A1, np.zeros(m), l1, u1, range(N, N + m), st1, v1, tol)
    c1 = np.concatenate([np.zeros(N), np.ones(m)])
    res = tab.run(c1, max_iter)
    if res != OPTIMAL:
        return SimplexResult(res, None, np.nan, tab.iterations)
    if tab.v[N:].sum() > 1e-7 * max(1.0, np.abs(tab.v[:N]).max(initial=0.0)):
        return SimplexResult(INFEASIBLE, None, np.nan, tab.iterations)
    # artificials stay at zero from here on
    tab.u[N:] = 0.0
    tab.v[N:] = np.where(tab.status[N:] == _BASIC, tab.v[N:], 0.0)
    c2 = np.concatenate([c, np.zeros(m + m)])
    res = tab.run(c2, max_iter)
    if res != OPTIMAL:
        return SimplexResult(res, None, np.nan, tab.iterations)
    x = tab.v[:n].copy()
    return SimplexResult(OPTIMAL, x, float(c @ x), tab.iterations)
