import math

import numpy as np
import pytest

from rnfopf.bfm import SocBlock, epsilon_feasible
from rnfopf.bnc import (OPTIMAL, SolveConfig, branch_and_cut, check_point, snap_binaries,
                        soc_separation)
from rnfopf.model import EQ, LE, LinearModel
from rnfopf.solve import solve_case

from oracles import milp_enumeration, random_milp


def test_pure_lp_single_node():
    m = LinearModel()
    x = m.add_var("x", 0.0, 5.0)
    m.objective[x] = 2.0
    m.add_row({x: 1.0}, EQ, 1.5)
    inc, rep = branch_and_cut(m)
    assert rep.status == OPTIMAL
    assert rep.nodes == 1 and rep.lp_solves == 1
    assert inc.objective == pytest.approx(3.0)


def test_knapsack_vs_enumeration():
    # max 5a + 4b + 3c, 2a + 3b + c <= 4
    m = LinearModel()
    a, b, c = (m.add_var(n, 0, 1, binary=True) for n in "abc")
    m.objective.update({a: -5.0, b: -4.0, c: -3.0})
    m.add_row({a: 2.0, b: 3.0, c: 1.0}, LE, 4.0)
    best = min(-(5 * p + 4 * q + 3 * r) for p in (0, 1) for q in (0, 1) for r in (0, 1)
               if 2 * p + 3 * q + r <= 4)
    inc, rep = branch_and_cut(m, config=SolveConfig(gap=0.0))
    assert inc.objective == best == -8
    assert set(np.round(inc.x, 9)) <= {0.0, 1.0}


def test_random_milps_vs_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(20):
        model, data = random_milp(rng)
        want = milp_enumeration(*data)
        inc, rep = branch_and_cut(model, config=SolveConfig(gap=0.0))
        assert inc is not None
        assert inc.objective == pytest.approx(want, abs=1e-7)
        assert check_point(model, inc.x) <= 1e-6
        assert rep.gap >= 0 and rep.bound <= inc.objective + 1e-9


def test_infeasible_milp():
    m = LinearModel()
    a, b = m.add_var("a", 0, 1, binary=True), m.add_var("b", 0, 1, binary=True)
    m.add_row({a: 1.0, b: 1.0}, EQ, 1.0)
    m.add_row({a: 1.0, b: -1.0}, EQ, 0.0)
    inc, rep = branch_and_cut(m)
    assert inc is None and rep.status == "infeasible"


def _free_block():
    m = LinearModel()
    xi, yi, zi = m.add_var("x", -5, 5), m.add_var("y", -5, 5), m.add_var("z", 0, 5)
    return m, SocBlock(0, "power", 0, {zi: 1.0}, {xi: 1.0}, {yi: 1.0}, 5.0, 5.0), (xi, yi, zi)


def test_soc_separation_examples():
    m, blk, (xi, yi, zi) = _free_block()
    assert soc_separation(blk, np.array([1.0, 0.0, 1.0])) is None
    coefs, sense, rhs = soc_separation(blk, np.array([1.0, 1.0, 1.0]))
    r = 1 / math.sqrt(2)
    assert coefs == {xi: pytest.approx(r), yi: pytest.approx(r), zi: -1.0}
    assert sense == LE and rhs == 0.0
    assert (1 + 1) * r > 1  # the point violates its own tangent
    assert soc_separation(blk, np.array([0.0, 0.0, 0.0])) is None


def test_outer_approximation_converges():
    rng = np.random.default_rng(9)
    for _ in range(5):
        a, b = rng.normal(size=2)
        zc = rng.uniform(0.5, 2.0)
        m, blk, (xi, yi, zi) = _free_block()
        blk.exact_soc = True
        m.objective.update({xi: a, yi: b})
        m.add_row({zi: 1.0}, EQ, zc)
        inc, rep = branch_and_cut(m, [blk], config=SolveConfig(method="SOCP", max_cut_rounds=30))
        xv, yv, zv = blk.values(inc.x)
        assert xv * xv + yv * yv <= zv * zv * (1 + 1e-7)
        phi = np.linspace(-math.pi, math.pi, 2_000_001)
        grid = float(np.min(zc * (a * np.cos(phi) + b * np.sin(phi))))
        assert inc.objective == pytest.approx(grid, abs=1e-5)
        assert rep.soc_cuts <= 30


def test_snap_binaries_respects_node_bounds():
    x = np.array([0.5, 0.0, 0.2, 0.5, 0.3, 0.0])
    triples = np.array([[0, 1, 2], [3, 4, 5]])
    lb, ub = np.zeros(6), np.ones(6)
    ub[3] = 0.5
    snap_binaries(x, triples, lb, ub)
    assert x[0] == 0.0  # omega1 = 0 allows beta = 0
    assert x[3] == 0.5  # omega2 = 0 would allow 1 but the node bound forbids it


def test_static_pr_case5(case5):
    out = solve_case(case5, SolveConfig(method="PR", k_max=2))
    assert out.report.status == OPTIMAL
    x = out.incumbent.x
    assert check_point(out.model, x) <= 1e-6
    eps = SolveConfig(method="PR", k_max=2).epsilon
    assert epsilon_feasible(x, out.blocks, eps + 1e-9)[0]
    objs = [h["objective"] for h in out.report.incumbents]
    assert objs == sorted(objs, reverse=True)


def test_determinism(case5):
    r1 = solve_case(case5, SolveConfig(method="PR", k_max=2)).report
    r2 = solve_case(case5, SolveConfig(method="PR", k_max=2)).report
    assert (r1.nodes, r1.objective, r1.lp_solves) == (r2.nodes, r2.objective, r2.lp_solves)


def test_pa_small_n_infeasible(case5):
    rep = solve_case(case5, SolveConfig(method="PA", k_max=1)).report
    assert rep.status == "infeasible"
    assert rep.to_dict()["objective"] is None


def test_node_limit_reports_gap():
    m = LinearModel()
    xs = [m.add_var(f"b{i}", 0, 1, binary=True) for i in range(12)]
    w = np.arange(1, 13, dtype=float)
    m.objective.update({j: -float(v) for j, v in zip(xs, w)})
    m.add_row({j: float(v) + 0.5 for j, v in zip(xs, w)}, LE, 30.3)
    inc, rep = branch_and_cut(m, config=SolveConfig(gap=0.0, node_limit=3))
    assert rep.status == "node_limit"
    assert rep.nodes == 3


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(method="XYZ")
    with pytest.raises(ValueError):
        SolveConfig(k_init=3, k_max=2)
    with pytest.raises(ValueError):
        SolveConfig(eps=0.0)
    assert SolveConfig(method="dqpr", k_max=3).epsilon == pytest.approx(math.sin(math.pi / 32) ** 2)


def test_warm_start_checks():
    m = LinearModel()
    a = m.add_var("a", 0, 1, binary=True)
    x = m.add_var("x", 0, 2)
    m.objective.update({a: 1.0, x: 1.0})
    m.add_row({a: 1.0, x: 1.0}, LE, 2.0)
    m.add_row({a: 1.0, x: 1.0}, EQ, 1.5)
    seen = []

    def cb(model, pt, dry_run=False):
        seen.append(dry_run)
        return 0

    inc, rep = branch_and_cut(m, callback=cb, warm_start=np.array([1.0, 0.5]))
    assert rep.incumbents[0]["origin"] == "warm-start"
    assert seen[0] is True
    inc, rep = branch_and_cut(m, callback=cb, warm_start=np.array([0.5, 1.0]))  # fractional
    assert all(h["origin"] != "warm-start" for h in rep.incumbents)
    inc, rep = branch_and_cut(m, warm_start=np.array([1.0, 1.0]))  # violates the equality
    assert all(h["origin"] != "warm-start" for h in rep.incumbents)
