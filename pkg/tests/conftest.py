from __future__ import annotations

import math

import numpy as np
import pytest

from rnfopf.bench import resolve_case
from rnfopf.case_io import load_bundled, read_case

TWO_BUS_TEXT = """
function mpc = tiny
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0   0 0 0 1 1 0 100 1 1.1 0.9;
  2 1 10  0 0 0 1 1 0 100 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 100 -100 1 100 1 100 0;
];
mpc.branch = [
  1 2 0.01 0.1 0 100 100 100 0 0 1 -60 60;
];
mpc.gencost = [
  2 0 0 2 10 0;
];
"""


@pytest.fixture(scope="session")
def case5():
    return load_bundled("case5")


@pytest.fixture(scope="session")
def two_bus():
    return load_bundled("two_bus")


def find_case(name: str):
    """Load a case from the bundle or ``$RNFOPF_CASE_DIR``; ``None`` if absent."""
    try:
        return read_case(resolve_case(name))
    except FileNotFoundError:
        return None


def two_bus_socp_oracle(n: int = 4001) -> float:
    """Optimum of the 2-bus cone relaxation by grid search.

    With one branch the balance rows give ``P = p_d + r*Phi``, ``Q = x*Phi``;
    the cost is ``c1 * P``.  The grid runs over ``(Phi, W1)`` and keeps points
    satisfying ``P^2 + Q^2 <= Phi*W1`` and the voltage bounds at bus 2, then
    refines around the best point.
    """
    r, x, pd, c1 = 0.01, 0.1, 0.1, 1000.0
    w_lo, w_hi = 0.81, 1.21
    phi_lo, phi_hi = 0.0, 0.05
    best = math.inf
    for _ in range(6):
        phi = np.linspace(phi_lo, phi_hi, n)[:, None]
        w1 = np.linspace(w_lo, w_hi, 41)[None, :]
        P = pd + r * phi
        Q = x * phi
        w2 = w1 - 2 * (r * P + x * Q) + (r * r + x * x) * phi
        ok = (P * P + Q * Q <= phi * w1) & (w2 >= 0.81) & (w2 <= 1.21)
        cost = np.where(ok, c1 * P + 0 * w1, np.inf)
        k = np.unravel_index(np.argmin(cost), cost.shape)
        best = min(best, float(cost[k]))
        step = (phi_hi - phi_lo) / (n - 1)
        phi_lo, phi_hi = max(0.0, float(phi[k[0], 0]) - 2 * step), float(phi[k[0], 0]) + 2 * step
    return best
