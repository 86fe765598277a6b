"""Sparse linear model container shared by the relaxation builders and solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<=", "==", ">="

LinExpr = dict  # variable index -> coefficient


class VariableMap:
    """Dense, append-only registry of decision variables and their bounds."""

    def __init__(self):
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.is_binary: list[bool] = []
        self.index: dict[str, int] = {}
        # named groups of indices, e.g. groups["P"][l]
        self.groups: dict[str, list[int]] = {}

    def __len__(self):
        return len(self.names)

    def add(self, name: str, lb: float, ub: float, binary: bool = False, group: str | None = None) -> int:
        if name in self.index:
            raise KeyError(f"duplicate variable {name}")
        if binary:
            lb, ub = 0.0, 1.0
        if lb > ub:
            raise ValueError(f"{name}: lb {lb} > ub {ub}")
        j = len(self.names)
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.is_binary.append(binary)
        self.index[name] = j
        if group is not None:
            self.groups.setdefault(group, []).append(j)
        return j

    def binaries(self) -> list[int]:
        return [j for j, b in enumerate(self.is_binary) if b]

    def copy(self) -> "VariableMap":
        new = VariableMap()
        new.names = list(self.names)
        new.lb = list(self.lb)
        new.ub = list(self.ub)
        new.is_binary = list(self.is_binary)
        new.index = dict(self.index)
        new.groups = {k: list(v) for k, v in self.groups.items()}
        return new


@dataclass
class LinearModel:
    """Rows ``sum(coef * x) <sense> rhs`` plus a linear objective.

    Rows are only ever appended, so a solver that has seen the first ``n``
    rows can pick up the rest incrementally.
    """

    vars: VariableMap = field(default_factory=VariableMap)
    row_idx: list[np.ndarray] = field(default_factory=list)
    row_val: list[np.ndarray] = field(default_factory=list)
    senses: list[str] = field(default_factory=list)
    rhs: list[float] = field(default_factory=list)
    tags: list[str] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    obj_offset: float = 0.0
    branch_terms: list = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    @property
    def n_vars(self) -> int:
        return len(self.vars)

    def add_var(self, name, lb, ub, binary=False, group=None) -> int:
        return self.vars.add(name, lb, ub, binary, group)

    def add_row(self, coefs: LinExpr, sense: str, rhs: float, tag: str = "") -> int:
        if sense not in (LE, EQ, GE):
            raise ValueError(f"bad sense {sense!r}")
        merged: dict[int, float] = {}
        for j, c in coefs.items():
            if j < 0 or j >= len(self.vars):
                raise IndexError(f"row references unknown variable {j}")
            if c != 0.0:
                merged[j] = merged.get(j, 0.0) + c
        idx = np.fromiter(merged.keys(), dtype=np.int64, count=len(merged))
        val = np.fromiter(merged.values(), dtype=float, count=len(merged))
        self.row_idx.append(idx)
        self.row_val.append(val)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.tags.append(tag)
        return len(self.rhs) - 1

    def row(self, i: int) -> dict[int, float]:
        return dict(zip(self.row_idx[i].tolist(), self.row_val[i].tolist()))

    def copy(self) -> "LinearModel":
        return LinearModel(
            vars=self.vars.copy(),
            row_idx=list(self.row_idx),
            row_val=list(self.row_val),
            senses=list(self.senses),
            rhs=list(self.rhs),
            tags=list(self.tags),
            objective=dict(self.objective),
            obj_offset=self.obj_offset,
            branch_terms=self.branch_terms,
        )

    def count_tag(self, prefix: str) -> int:
        return sum(t.startswith(prefix) for t in self.tags)

    def matrix(self, rows: range | None = None, n_cols: int | None = None) -> sp.csr_matrix:
        rows = range(self.n_rows) if rows is None else rows
        n_cols = self.n_vars if n_cols is None else n_cols
        indptr = [0]
        indices = []
        data = []
        for i in rows:
            indices.append(self.row_idx[i])
            data.append(self.row_val[i])
            indptr.append(indptr[-1] + len(self.row_idx[i]))
        if indices:
            indices = np.concatenate(indices)
            data = np.concatenate(data)
        else:
            indices = np.zeros(0, dtype=np.int64)
            data = np.zeros(0)
        return sp.csr_matrix((data, indices, np.array(indptr)), shape=(len(rows), n_cols))

    def row_bounds(self, rows: range | None = None) -> tuple[np.ndarray, np.ndarray]:
        rows = range(self.n_rows) if rows is None else rows
        lo = np.empty(len(rows))
        hi = np.empty(len(rows))
        for k, i in enumerate(rows):
            s, b = self.senses[i], self.rhs[i]
            lo[k] = b if s in (EQ, GE) else -np.inf
            hi[k] = b if s in (EQ, LE) else np.inf
        return lo, hi

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for j, v in self.objective.items():
            c[j] = v
        return c

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Per-row violation (0 when satisfied) of the point ``x``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.n_rows)
        for i in range(self.n_rows):
            act = float(self.row_val[i] @ x[self.row_idx[i]])
            s, b = self.senses[i], self.rhs[i]
            if s == LE:
                out[i] = max(0.0, act - b)
            elif s == GE:
                out[i] = max(0.0, b - act)
            else:
                out[i] = abs(act - b)
        return out

    def bound_violation(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        lb = np.asarray(self.vars.lb)
        ub = np.asarray(self.vars.ub)
        return float(max(0.0, np.max(lb - x, initial=0.0), np.max(x - ub, initial=0.0)))

    def objective_value(self, x: np.ndarray) -> float:
        return float(sum(c * x[j] for j, c in self.objective.items()) + self.obj_offset)


def eval_expr(expr: LinExpr, x) -> float:
    return float(sum(c * x[j] for j, c in expr.items()))


def combine(*terms: tuple[float, LinExpr]) -> LinExpr:
    """Linear combination ``sum(a * expr)`` of sparse expressions."""
    out: dict[int, float] = {}
    for a, expr in terms:
        for j, c in expr.items():
            out[j] = out.get(j, 0.0) + a * c
    return {j: c for j, c in out.items() if c != 0.0}
