import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnfopf.bfm import SocBlock
from rnfopf.lp import OPTIMAL, solve_lp
from rnfopf.model import EQ, LE, LinearModel
from rnfopf.rnf import (PA, PR, QPR, DepthError, _abs_system, append_rnf_stage, append_terminal,
                        build_static, direct_pyramid_oracle, rnf_membership, rnf_trace,
                        rnf_trace_array, theta, tolerance, unfold)

from regions import region_points, rel_error

SEED = 20240611


def _block(M=2.0):
    m = LinearModel()
    xi, yi, zi = m.add_var("x", -M, M), m.add_var("y", -M, M), m.add_var("z", 0.0, M)
    return m, SocBlock(0, "power", 0, {zi: 1.0}, {xi: 1.0}, {yi: 1.0}, M, M), (xi, yi, zi)


def test_theta_values():
    assert theta(0) == math.pi / 2
    assert theta(1) == math.pi / 4
    assert theta(4) == pytest.approx(0.09817477042468103, rel=1e-15)
    with pytest.raises(ValueError):
        theta(-1)


def test_tolerance_values():
    assert tolerance(PR, 0) == pytest.approx(1.0)
    assert tolerance(PA, 4) == pytest.approx(9.607359798384785e-3, rel=1e-12)
    assert tolerance(PA, 4) < 0.01
    assert tolerance(QPR, 3) == pytest.approx(9.607359798384785e-3, rel=1e-12)
    with pytest.raises(DepthError):
        tolerance(PA, 0)


def test_tolerance_one_percent_choices():
    # smallest depth reaching 1 %: 4-PA, 3-PR, 3-QPR
    first = {kind: min(k for k in range(1, 10) if tolerance(kind, k) < 0.01) for kind in (PA, PR, QPR)}
    assert first == {PA: 4, PR: 3, QPR: 3}


def test_trace_origin():
    assert all(g == 0 and h == 0 for g, h, _ in rnf_trace(0.0, 0.0, 1.0, 3))


def test_trace_hand_values():
    tr = rnf_trace(3.0, 4.0, 5.0, 2)
    assert tr[0][:2] == (3.0, 4.0)
    c = math.cos(math.pi / 4)
    assert tr[1][0] == pytest.approx(7 * c, rel=1e-15)
    assert tr[1][1] == pytest.approx(c, rel=1e-14)
    assert tr[2][0] == pytest.approx(7 * c * math.cos(math.pi / 8) + c * math.sin(math.pi / 8), rel=1e-15)
    assert tr[0][2] == (1, 1)


def test_trace_axis_point():
    tr = rnf_trace(1.0, 0.0, 1.0, 1)
    assert tr[0][:2] == (1.0, 0.0)
    c = math.cos(math.pi / 4)
    assert tr[1][0] == pytest.approx(c) and tr[1][1] == pytest.approx(c)


def test_trace_norm_random():
    rng = np.random.default_rng(SEED)
    x, y = rng.normal(size=1000), rng.normal(size=1000)
    for K in (1, 4, 8):
        G, H = rnf_trace_array(x, y, K)
        np.testing.assert_allclose(G[-1] ** 2 + H[-1] ** 2, x * x + y * y, rtol=1e-12)
        assert (H >= 0).all()
        # every fold lands in the sector [0, theta(k)]
        assert (np.arctan2(H[K], G[K]) <= theta(K) + 1e-12).all()


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.integers(0, 8))
def test_trace_norm_property(x, y, K):
    g, h, _ = rnf_trace(x, y, 1.0, K)[-1]
    assert math.isclose(g * g + h * h, x * x + y * y, rel_tol=1e-12, abs_tol=1e-300)


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 6))
def test_unfold_inverts_trace(x, y, K):
    tr = rnf_trace(x, y, 1.0, K)
    g, h, _ = tr[-1]
    signs = [1.0 if tr[k][2] else -1.0 for k in range(K, 0, -1)]
    signs += [1.0 if tr[0][2][0] else -1.0, 1.0 if tr[0][2][1] else -1.0]
    xr, yr = unfold(np.array([g]), np.array([h]), np.array(signs)[:, None], K)
    assert xr[0] == pytest.approx(x, abs=1e-9)
    assert yr[0] == pytest.approx(y, abs=1e-9)


def test_stage_and_binary_counts():
    for K in range(5):
        m, blk, _ = _block()
        for k in range(K + 1):
            append_rnf_stage(m, blk, k)
        assert len(blk.stages) == K + 1
        assert len(m.vars.binaries()) == K + 2
        assert blk.depth == K


def test_stage_skip_rejected():
    m, blk, _ = _block()
    with pytest.raises(DepthError):
        append_rnf_stage(m, blk, 1)


def test_big_m_example():
    m = LinearModel()
    X = m.add_var("X", -3.0, -3.0)
    Y = m.add_var("Y", 0.0, 10.0)
    rows = []
    beta, (w1, w2) = _abs_system(m, {X: 1.0}, Y, 10.0, "t", rows)
    assert len(rows) == 4
    lb, ub = np.array(m.vars.lb), np.array(m.vars.ub)
    lb[beta] = ub[beta] = 0.0
    sol = solve_lp(m, lb, ub)
    assert sol.status == OPTIMAL
    assert sol.x[w1] == pytest.approx(0.0, abs=1e-12)
    assert sol.x[w2] == pytest.approx(0.3, abs=1e-12)
    assert sol.x[Y] == pytest.approx(3.0, abs=1e-12)
    lb[beta] = ub[beta] = 1.0
    assert solve_lp(m, lb, ub).status != OPTIMAL


def test_pr_terminal_k0_rows():
    m, blk, (x, y, z) = _block()
    build_static(m, [blk], PR, 0)
    st0 = blk.stages[0]
    g, h = st0.g, st0.h
    c = math.cos(math.pi / 4)
    tagged = [i for i, t in enumerate(m.tags) if t in ("rnf-gz", "pr-outer", "pr-inner")]
    rows = [(m.row(i), m.senses[i]) for i in tagged]
    assert ({g: 1.0, z: -1.0}, LE) in rows  # g_0 <= z
    # g_0 cos(pi/2) + h_0 sin(pi/2) <= z
    assert any(s == LE and r.get(h) == pytest.approx(1.0) and r.get(z) == -1.0 and abs(r.get(g, 0.0)) < 1e-15
               for r, s in rows)
    inner = m.row(tagged[-1])
    assert inner[z] == pytest.approx(c) and inner[g] == pytest.approx(-c) and inner[h] == pytest.approx(-c)
    assert m.count_tag("pr-") == 1  # the outer rows at K=0 are the stage rows


def test_qpr_terminal_k0():
    m, blk, (x, y, z) = _block()
    build_static(m, [blk], QPR, 0)
    assert m.count_tag("qpr-inner") == 1
    assert blk.exact_soc
    i = m.tags.index("qpr-inner")
    r = m.row(i)
    c = math.cos(math.pi / 4)
    assert r[z] == pytest.approx(c)
    assert r[blk.stages[0].g] == pytest.approx(-c) and r[blk.stages[0].h] == pytest.approx(-c)


def test_pa_terminal():
    m, blk, (x, y, z) = _block()
    build_static(m, [blk], PA, 1)
    i = m.tags.index("pa-facet")
    assert m.senses[i] == EQ
    assert m.row(i) == {blk.stages[1].g: 1.0, z: pytest.approx(-math.cos(math.pi / 4))}
    m2, blk2, _ = _block()
    append_rnf_stage(m2, blk2, 0)
    with pytest.raises(DepthError):
        append_terminal(m2, blk2, 0, PA)


def test_pyramid_oracle_examples():
    K = 2
    z = 1.3
    phi2 = 2 * math.pi / 2 ** (K + 1)
    assert direct_pyramid_oracle(z * math.cos(phi2), z * math.sin(phi2), z, K)
    assert direct_pyramid_oracle(0.0, 0.0, 0.0, K)
    assert not direct_pyramid_oracle(0.9, 0.0, 1.0, 1)
    # K=1: the square x + y = z in the first quadrant, i.e. g_1 = z cos(pi/4) after one fold
    assert direct_pyramid_oracle(0.5, 0.5, 1.0, 1)
    assert direct_pyramid_oracle(0.2, 0.8, 1.0, 1)
    assert not direct_pyramid_oracle(0.5, 0.4, 1.0, 1)


def test_membership_matches_oracle_small_grid():
    xs = np.linspace(-1.0, 1.0, 21)
    pts = np.array([(a, b, 1.0) for a in xs for b in xs])
    for K in (1, 2):
        got = rnf_membership(pts, K, PA)
        want = np.array([direct_pyramid_oracle(*p, K) for p in pts])
        assert (got == want).all()
        assert want.any()


@pytest.mark.parametrize("kind,Ks", [(PA, range(1, 5)), (PR, range(0, 5)), (QPR, range(0, 5))])
def test_region_samples_are_model_feasible(kind, Ks):
    rng = np.random.default_rng(SEED)
    for K in Ks:
        pts = region_points(kind, K, 150, rng)
        ok = rnf_membership(pts, K, kind, tol=1e-8)
        assert ok.all(), (kind, K, pts[~ok][:3])
        err = rel_error(pts)
        assert err.max() <= tolerance(kind, K) + 1e-9


def test_region_excludes_outside_points():
    # scaling a PR vertex outwards leaves the K-PR rows
    rng = np.random.default_rng(SEED)
    for K in range(0, 4):
        pts = region_points(PR, K, 100, rng)
        pts[:, :2] *= 1 + 1e-3 + tolerance(PR, K)
        assert not rnf_membership(pts, K, PR, tol=1e-8).any()


def _random_plane(n, rng):
    r = rng.uniform(0.6, 1.5, n)
    a = rng.uniform(-math.pi, math.pi, n)
    return np.column_stack([r * np.cos(a), r * np.sin(a), np.ones(n)])


@pytest.mark.parametrize("kind", [PR, QPR])
def test_nesting(kind):
    rng = np.random.default_rng(SEED)
    pts = _random_plane(3000, rng)
    inside = (pts[:, 0] ** 2 + pts[:, 1] ** 2 <= 1.0 + 1e-9) if kind == QPR else np.ones(len(pts), bool)
    prev = rnf_membership(pts, 0, kind, tol=1e-9) & inside
    for K in range(1, 4):
        cur = rnf_membership(pts, K, kind, tol=1e-9) & inside
        assert not (cur & ~prev).any()
        assert cur.sum() < prev.sum()
        prev = cur


def test_inclusion_chain():
    rng = np.random.default_rng(SEED)
    for K in range(0, 4):
        pa = region_points(PA, K + 1, 200, rng)
        in_cone = pa[:, 0] ** 2 + pa[:, 1] ** 2 <= pa[:, 2] ** 2 * (1 + 1e-12)
        in_q = rnf_membership(pa, K, QPR, tol=1e-8) & in_cone
        assert in_q.all()
        qpr = region_points(QPR, K, 200, rng)
        assert rnf_membership(qpr, K, PR, tol=1e-8).all()


def test_proposition_two_sampled():
    rng = np.random.default_rng(SEED)
    for K in range(1, 7):
        g, h = rng.random(20000), rng.random(20000)
        keep = np.ones_like(g, dtype=bool)
        for k in range(1, K + 1):
            c, s = math.cos(theta(k)), math.sin(theta(k))
            g, h = c * g + s * h, np.abs(-s * g + c * h)
            keep &= g <= 1.0
        lhs = g * math.cos(theta(K)) + h * math.sin(theta(K))
        assert (lhs[keep] <= 1.0 + 1e-12).all()
