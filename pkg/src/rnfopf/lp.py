"""LP backends: an incremental HiGHS session and the dense reference simplex."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LinearModel
from .simplex import simplex_solve

try:  # pragma: no cover - depends on the environment
    import highspy as _hs

    _Highs = _hs.Highs
    _Status = _hs.HighsModelStatus
    _INF = _hs.kHighsInf
    BACKEND = "highspy"
except ImportError:  # scipy ships the same bindings privately
    from scipy.optimize._highspy import _core as _hs

    _Highs = _hs._Highs
    _Status = _hs.HighsModelStatus
    _INF = _hs.kHighsInf
    BACKEND = "scipy-highs"

OPTIMAL, INFEASIBLE, UNBOUNDED, TIME_LIMIT, ERROR = (
    "optimal", "infeasible", "unbounded", "time_limit", "error")

_STATUS_MAP = {
    _Status.kOptimal: OPTIMAL,
    _Status.kInfeasible: INFEASIBLE,
    _Status.kUnbounded: UNBOUNDED,
    _Status.kUnboundedOrInfeasible: INFEASIBLE,
    _Status.kTimeLimit: TIME_LIMIT,
    _Status.kIterationLimit: TIME_LIMIT,
}


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None
    obj: float
    row_dual: np.ndarray | None = None


def _finite(a: np.ndarray) -> np.ndarray:
    return np.clip(np.nan_to_num(a, posinf=_INF, neginf=-_INF), -_INF, _INF)


class LpSession:
    """A HiGHS instance kept in step with an append-only :class:`LinearModel`.

    Columns and rows added to the model after construction are pushed on
    the next :meth:`sync`; HiGHS keeps its basis, so re-solves after new
    cuts or bound changes are warm.
    """

    def __init__(self, model: LinearModel, threads: int = 1):
        self.model = model
        self.h = _Highs()
        self.h.setOptionValue("output_flag", False)
        self.h.setOptionValue("presolve", "off")
        self.h.setOptionValue("threads", threads)
        self.n_cols = 0
        self.n_rows = 0
        self.sync()

    def set_option(self, name: str, value) -> None:
        self.h.setOptionValue(name, value)

    def sync(self) -> None:
        m = self.model
        nc = m.n_vars
        if nc > self.n_cols:
            new = range(self.n_cols, nc)
            cost = np.array([m.objective.get(j, 0.0) for j in new])
            lb = _finite(np.array(m.vars.lb[self.n_cols:nc]))
            ub = _finite(np.array(m.vars.ub[self.n_cols:nc]))
            k = nc - self.n_cols
            self.h.addCols(k, cost, lb, ub, 0, np.zeros(k, dtype=np.int32),
                           np.zeros(0, dtype=np.int32), np.zeros(0))
            self.n_cols = nc
        nr = m.n_rows
        if nr > self.n_rows:
            rows = range(self.n_rows, nr)
            A = m.matrix(rows, nc)
            lo, hi = m.row_bounds(rows)
            self.h.addRows(len(rows), _finite(lo), _finite(hi), A.nnz,
                           A.indptr[:-1].astype(np.int32), A.indices.astype(np.int32),
                           A.data.astype(float))
            self.n_rows = nr

    def set_bounds(self, idx, lb, ub) -> None:
        idx = np.asarray(idx, dtype=np.int32)
        if idx.size:
            self.h.changeColsBounds(idx.size, idx, _finite(np.asarray(lb, float)),
                                    _finite(np.asarray(ub, float)))

    def reset_bounds(self, idx) -> None:
        idx = np.asarray(idx, dtype=int)
        self.set_bounds(idx, np.asarray(self.model.vars.lb)[idx], np.asarray(self.model.vars.ub)[idx])

    def solve(self, time_limit: float | None = None) -> LpSolution:
        self.sync()
        self.h.setOptionValue("time_limit", float(time_limit) if time_limit else _INF)
        self.h.run()
        st = _STATUS_MAP.get(self.h.getModelStatus(), ERROR)
        if st != OPTIMAL:
            return LpSolution(st, None, np.nan)
        sol = self.h.getSolution()
        x = np.array(sol.col_value)
        obj = self.model.objective_value(x)
        return LpSolution(OPTIMAL, x, obj, np.array(sol.row_dual))


def solve_lp(model: LinearModel, lb=None, ub=None, backend: str = "highs",
             time_limit: float | None = None) -> LpSolution:
    """One-shot solve of ``model`` with optional overriding column bounds."""
    lb = np.asarray(model.vars.lb if lb is None else lb, dtype=float)
    ub = np.asarray(model.vars.ub if ub is None else ub, dtype=float)
    if backend == "simplex":
        lo, hi = model.row_bounds()
        res = simplex_solve(model.cost_vector(), model.matrix().toarray(), lo, hi, lb, ub)
        if res.status != OPTIMAL:
            return LpSolution(res.status if res.status in (INFEASIBLE, UNBOUNDED) else ERROR, None, np.nan)
        return LpSolution(OPTIMAL, res.x, model.objective_value(res.x))
    if backend != "highs":
        raise ValueError(f"unknown backend {backend!r}")
    s = LpSession(model)
    s.set_bounds(np.arange(model.n_vars), lb, ub)
    return s.solve(time_limit)
