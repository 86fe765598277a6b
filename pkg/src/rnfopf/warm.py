"""AC warm starts and large-neighbourhood post-processing.

A warm start is a power-flow solution mapped onto the relaxation's
variables; it lies on every cone surface, so it is feasible for any PR or
QPR model.  Post-processing fixes an incumbent's R&F binaries and re-solves
with the exact cone inside the selected wedges.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from .bfm import ETA, ConicErrorReport, SocBlock, conic_errors
from .case_io import NetworkCase, effective_s_max
from .model import LinearModel
from .rnf import theta

PF_TOL = 1e-10
BOUND_TOL = 1e-6
LNS_SOC_TOL = 1e-9  # keeps refined points well inside the 1e-7 surface target


class WarmStartError(RuntimeError):
    pass


@dataclass
class PfSolution:
    v: np.ndarray  # complex bus voltages
    i_series: np.ndarray  # complex series current of each branch, from side
    pg: np.ndarray
    qg: np.ndarray
    converged: bool
    mismatch: float
    iterations: int

    def to_json(self) -> str:
        return json.dumps({
            "v_re": self.v.real.tolist(), "v_im": self.v.imag.tolist(),
            "i_re": self.i_series.real.tolist(), "i_im": self.i_series.imag.tolist(),
            "pg": self.pg.tolist(), "qg": self.qg.tolist(),
            "converged": self.converged, "mismatch": self.mismatch, "iterations": self.iterations,
        })

    @classmethod
    def from_json(cls, text: str) -> "PfSolution":
        d = json.loads(text)
        return cls(np.array(d["v_re"]) + 1j * np.array(d["v_im"]),
                   np.array(d["i_re"]) + 1j * np.array(d["i_im"]),
                   np.array(d["pg"]), np.array(d["qg"]), d["converged"], d["mismatch"],
                   d["iterations"])


# --------------------------------------------------------------------------
# network matrices


def _branch_data(case: NetworkCase):
    nb = len(case.buses)
    nl = len(case.branches)
    f = np.array([case.bus_index(br.from_bus) for br in case.branches], dtype=int)
    t = np.array([case.bus_index(br.to_bus) for br in case.branches], dtype=int)
    ys = np.array([1.0 / complex(br.r, br.x) for br in case.branches])
    bc = np.array([br.b_c for br in case.branches])
    tap = np.array([br.tap * np.exp(1j * br.shift) for br in case.branches])
    Cf = sp.csr_matrix((np.ones(nl), (np.arange(nl), f)), shape=(nl, nb))
    Ct = sp.csr_matrix((np.ones(nl), (np.arange(nl), t)), shape=(nl, nb))
    return f, t, ys, bc, tap, Cf, Ct


def make_ybus(case: NetworkCase) -> sp.csr_matrix:
    f, t, ys, bc, tap, Cf, Ct = _branch_data(case)
    Ytt = ys + 0.5j * bc
    Yff = Ytt / (tap * np.conj(tap))
    Yft = -ys / np.conj(tap)
    Ytf = -ys / tap
    nl = len(ys)
    Yf = sp.diags(Yff) @ Cf + sp.diags(Yft) @ Ct
    Yt = sp.diags(Ytf) @ Cf + sp.diags(Ytt) @ Ct
    ysh = np.array([complex(b.g_s, b.b_s) for b in case.buses])
    return (Cf.T @ Yf + Ct.T @ Yt + sp.diags(ysh)).tocsr()


def series_currents(case: NetworkCase, v: np.ndarray) -> np.ndarray:
    f, t, ys, _, tap, _, _ = _branch_data(case)
    return (v[f] / tap - v[t]) * ys


def _ds_dv(Y, v):
    """Partial derivatives of bus injections w.r.t. angle and magnitude."""
    ibus = Y @ v
    dv = sp.diags(v)
    dvn = sp.diags(v / np.abs(v))
    ds_da = 1j * dv @ np.conj(sp.diags(ibus) - Y @ dv)
    ds_dm = dv @ np.conj(Y @ dvn) + np.conj(sp.diags(ibus)) @ dvn
    return sp.csr_matrix(ds_da), sp.csr_matrix(ds_dm)


def largest_generator_bus(case: NetworkCase) -> int:
    cap: dict[int, float] = {}
    for _, g in case.online_generators:
        cap[g.bus] = cap.get(g.bus, 0.0) + g.p_max
    return max(cap, key=lambda b: (cap[b], -b))


def _spread(total: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Split ``total`` over units with the same fraction of each range."""
    span = hi - lo
    if span.sum() <= 0:
        return lo + (total - lo.sum()) / len(lo)
    frac = (total - lo.sum()) / span.sum()
    return lo + frac * span


def newton_power_flow(case: NetworkCase, p_dispatch, v_set=None, slack_bus: int | None = None,
                      v0=None, max_iter: int = 50, tol: float = PF_TOL) -> PfSolution:
    """Polar Newton-Raphson power flow.

    Every bus with an online generator is PV at ``v_set`` (a mapping from bus
    id to magnitude, default the case setpoints); ``slack_bus`` defaults to
    the bus with the largest generating capacity.
    """
    nb = len(case.buses)
    gens = case.online_generators
    p_dispatch = np.asarray(p_dispatch, dtype=float)
    slack_id = largest_generator_bus(case) if slack_bus is None else slack_bus
    ref = case.bus_index(slack_id)
    gen_buses = sorted({case.bus_index(g.bus) for _, g in gens})
    pv = [i for i in gen_buses if i != ref]
    pq = [i for i in range(nb) if i not in gen_buses and i != ref]
    vm = np.ones(nb)
    va = np.zeros(nb)
    if v0 is not None:
        vm, va = np.abs(v0).astype(float), np.angle(v0)
    for _, g in gens:
        i = case.bus_index(g.bus)
        vm[i] = g.v_g
    if v_set is not None:
        for bid, mag in dict(v_set).items():
            vm[case.bus_index(bid)] = mag
    sd = np.array([complex(b.p_d, b.q_d) for b in case.buses])
    sg = np.zeros(nb, dtype=complex)
    for k, (g_idx, g) in enumerate(gens):
        sg[case.bus_index(g.bus)] += p_dispatch[g_idx]
    sbus = sg - sd
    Y = make_ybus(case)
    pvpq = pv + pq
    v = vm * np.exp(1j * va)
    it = 0
    mis = np.inf
    converged = False
    for it in range(max_iter + 1):
        s = v * np.conj(Y @ v)
        dS = s - sbus
        F = np.concatenate([dS.real[pvpq], dS.imag[pq]])
        mis = float(np.abs(F).max(initial=0.0))
        if not np.isfinite(mis):
            break
        if mis <= tol:
            converged = True
            break
        if it == max_iter:
            break
        ds_da, ds_dm = _ds_dv(Y, v)
        J = sp.bmat([[ds_da[pvpq][:, pvpq].real, ds_dm[pvpq][:, pq].real],
                     [ds_da[pq][:, pvpq].imag, ds_dm[pq][:, pq].imag]]).toarray()
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        npv = len(pvpq)
        va[pvpq] += dx[:npv]
        vm[pq] += dx[npv:]
        if np.any(vm <= 0) or not np.all(np.isfinite(dx)):
            break
        v = vm * np.exp(1j * va)
    v = vm * np.exp(1j * va)
    s = v * np.conj(Y @ v) + sd
    pg = np.zeros(len(case.generators))
    qg = np.zeros(len(case.generators))
    by_bus: dict[int, list[int]] = {}
    for g_idx, g in gens:
        by_bus.setdefault(case.bus_index(g.bus), []).append(g_idx)
    for i, members in by_bus.items():
        gl = [case.generators[k] for k in members]
        if i == ref:
            pg[members] = _spread(s[i].real, np.array([g.p_min for g in gl]), np.array([g.p_max for g in gl]))
        else:
            pg[members] = p_dispatch[members]
        qg[members] = _spread(s[i].imag, np.array([g.q_min for g in gl]), np.array([g.q_max for g in gl]))
    return PfSolution(v, series_currents(case, v), pg, qg, converged, mis, it)


# --------------------------------------------------------------------------
# feasibility of an AC point


def ac_violations(case: NetworkCase, pf: PfSolution) -> list[str]:
    """Bound, limit and angle violations of a power-flow point (empty when feasible)."""
    out = []
    vm = np.abs(pf.v)
    for i, b in enumerate(case.buses):
        if vm[i] < b.v_min - BOUND_TOL or vm[i] > b.v_max + BOUND_TOL:
            out.append(f"bus {b.id}: |v|={vm[i]:.6f} outside [{b.v_min}, {b.v_max}]")
    for g_idx, g in case.online_generators:
        if not g.p_min - BOUND_TOL <= pf.pg[g_idx] <= g.p_max + BOUND_TOL:
            out.append(f"generator {g_idx}: p={pf.pg[g_idx]:.6f} outside [{g.p_min}, {g.p_max}]")
        if not g.q_min - BOUND_TOL <= pf.qg[g_idx] <= g.q_max + BOUND_TOL:
            out.append(f"generator {g_idx}: q={pf.qg[g_idx]:.6f} outside [{g.q_min}, {g.q_max}]")
    f, t, _, _, tap, _, _ = _branch_data(case)
    s_ser = pf.v[f] / tap * np.conj(pf.i_series)
    for l, br in enumerate(case.branches):
        smax = effective_s_max(case, br)
        if abs(s_ser[l]) > smax + BOUND_TOL:
            out.append(f"branch {l}: |s|={abs(s_ser[l]):.6f} > {smax}")
        d = np.angle(pf.v[f[l]]) - np.angle(pf.v[t[l]])
        d = (d + np.pi) % (2 * np.pi) - np.pi
        lo = max(br.ang_min, -math.radians(89.9))
        hi = min(br.ang_max, math.radians(89.9))
        if d < lo - BOUND_TOL or d > hi + BOUND_TOL:
            out.append(f"branch {l}: angle difference {math.degrees(d):.4f} deg outside limits")
    return out


# --------------------------------------------------------------------------
# local AC OPF used when the plain power flow violates limits


def local_acopf(case: NetworkCase, x0: PfSolution | None = None, margin: float = 1e-4,
                max_iter: int = 500) -> PfSolution | None:
    """Polar AC OPF by SLSQP, started from ``x0``; limits are tightened by ``margin``."""
    nb = len(case.buses)
    gens = case.online_generators
    ng = len(gens)
    gidx = np.array([g_idx for g_idx, _ in gens])
    ref = case.bus_index(largest_generator_bus(case))
    Y = make_ybus(case)
    f, t, ys, _, tap, Cf, Ct = _branch_data(case)
    Af = sp.diags(1.0 / tap) @ Cf
    Bm = sp.diags(ys) @ (Af - Ct)
    Cg = sp.csr_matrix((np.ones(ng), ([case.bus_index(g.bus) for _, g in gens], np.arange(ng))),
                       shape=(nb, ng))
    sd = np.array([complex(b.p_d, b.q_d) for b in case.buses])
    cost = np.array([g.c1 for _, g in gens])
    scale = max(np.abs(cost).max(initial=1.0), 1.0)
    smax = np.array([effective_s_max(case, br) for br in case.branches])
    a_lo = np.array([max(br.ang_min, -math.radians(89.9)) for br in case.branches]) + margin
    a_hi = np.array([min(br.ang_max, math.radians(89.9)) for br in case.branches]) - margin
    na = np.array([i for i in range(nb) if i != ref])

    def unpack(z):
        va = np.zeros(nb)
        va[na] = z[:nb - 1]
        vm = z[nb - 1:2 * nb - 1]
        pg = z[2 * nb - 1:2 * nb - 1 + ng]
        qg = z[2 * nb - 1 + ng:]
        return va, vm, pg, qg

    def voltage(z):
        va, vm, _, _ = unpack(z)
        return vm * np.exp(1j * va)

    n = 2 * nb - 1 + 2 * ng

    def eq(z):
        va, vm, pg, qg = unpack(z)
        v = vm * np.exp(1j * va)
        mis = v * np.conj(Y @ v) + sd - Cg @ (pg + 1j * qg)
        return np.concatenate([mis.real, mis.imag])

    def eq_jac(z):
        v = voltage(z)
        da, dm = _ds_dv(Y, v)
        da = da.toarray()[:, na]
        dm = dm.toarray()
        cg = Cg.toarray()
        zero = np.zeros_like(cg)
        top = np.hstack([da.real, dm.real, -cg, zero])
        bot = np.hstack([da.imag, dm.imag, zero, -cg])
        return np.vstack([top, bot])

    def flows(z):
        v = voltage(z)
        return (Af @ v) * np.conj(Bm @ v), v

    def ineq(z):
        s, v = flows(z)
        va = np.angle(v)
        dang = va[f] - va[t]
        lim = ((1 - margin) * smax) ** 2 - np.abs(s) ** 2
        return np.concatenate([lim / np.maximum(smax, 1e-6) ** 2, dang - a_lo, a_hi - dang])

    def ineq_jac(z):
        s, v = flows(z)
        va, vm, _, _ = unpack(z)
        A = Af @ v
        B = Bm @ v
        dv_a = 1j * v
        dv_m = np.exp(1j * va)
        Afd, Bmd = Af.toarray(), Bm.toarray()
        ds_a = (Afd * dv_a) * np.conj(B)[:, None] + A[:, None] * np.conj(Bmd * dv_a)
        ds_m = (Afd * dv_m) * np.conj(B)[:, None] + A[:, None] * np.conj(Bmd * dv_m)
        w = -2.0 / np.maximum(smax, 1e-6) ** 2
        g_a = w[:, None] * (np.conj(s)[:, None] * ds_a).real
        g_m = w[:, None] * (np.conj(s)[:, None] * ds_m).real
        nl = len(smax)
        lim = np.hstack([g_a[:, na], g_m, np.zeros((nl, 2 * ng))])
        D = (Cf - Ct).toarray()
        ang = np.hstack([D[:, na], np.zeros((nl, nb + 2 * ng))])
        return np.vstack([lim, ang, -ang])

    bounds = [(None, None)] * (nb - 1)
    bounds += [(b.v_min + margin, b.v_max - margin) for b in case.buses]
    bounds += [(g.p_min + margin * (g.p_max > g.p_min), g.p_max - margin * (g.p_max > g.p_min)) for _, g in gens]
    bounds += [(g.q_min + margin * (g.q_max > g.q_min), g.q_max - margin * (g.q_max > g.q_min)) for _, g in gens]
    if x0 is not None:
        v0 = x0.v
        z0 = np.concatenate([np.angle(v0)[na] - np.angle(v0)[ref], np.abs(v0), x0.pg[gidx], x0.qg[gidx]])
    else:
        z0 = np.concatenate([np.zeros(nb - 1), np.ones(nb), [(g.p_min + g.p_max) / 2 for _, g in gens],
                             [(g.q_min + g.q_max) / 2 for _, g in gens]])
    lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds])
    hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds])
    z0 = np.clip(z0, lo, hi)
    res = minimize(lambda z: float(cost @ unpack(z)[2]) / scale, z0,
                   jac=lambda z: np.concatenate([np.zeros(2 * nb - 1), cost / scale, np.zeros(ng)]),
                   method="SLSQP", bounds=bounds,
                   constraints=[{"type": "eq", "fun": eq, "jac": eq_jac},
                                {"type": "ineq", "fun": ineq, "jac": ineq_jac}],
                   options={"maxiter": max_iter, "ftol": 1e-12})
    if np.abs(eq(res.x)).max() > 1e-6 or ineq(res.x).min() < -1e-6:
        return None
    va, vm, pg_on, qg_on = unpack(res.x)
    pg = np.zeros(len(case.generators))
    pg[gidx] = pg_on
    v_set = {case.buses[case.bus_index(g.bus)].id: vm[case.bus_index(g.bus)] for _, g in gens}
    return newton_power_flow(case, pg, v_set, v0=vm * np.exp(1j * va))


# --------------------------------------------------------------------------
# mapping onto model variables


def fill_rnf(x: np.ndarray, blocks: list[SocBlock]) -> None:
    """Set every existing R&F auxiliary of ``blocks`` from the block values in ``x``."""
    for blk in blocks:
        if not blk.stages:
            continue
        xv, yv, zv = blk.values(x)
        M = blk.big_m

        def put(w, b, X):
            w1, w2 = w
            if X >= 0:
                x[b], x[w1], x[w2] = 1.0, X / M, 0.0
            else:
                x[b], x[w1], x[w2] = 0.0, 0.0, -X / M

        st = blk.stages[0]
        g, h = abs(xv), abs(yv)
        x[st.g], x[st.h] = g, h
        put(st.omegas[0], st.binaries[0], xv)
        put(st.omegas[1], st.binaries[1], yv)
        for st in blk.stages[1:]:
            c, s = math.cos(theta(st.level)), math.sin(theta(st.level))
            X = -s * g + c * h
            g, h = c * g + s * h, abs(X)
            x[st.g], x[st.h] = g, h
            put(st.omegas[0], st.binaries[0], X)


def map_warm_start(model: LinearModel, blocks: list[SocBlock], case: NetworkCase,
                   pf: PfSolution) -> np.ndarray:
    """Model assignment of a power-flow point: P + jQ = v' conj(i), S = |P + jQ|, ..."""
    x = np.zeros(model.n_vars)
    vm = model.vars
    f, t, ys, bc, tap, _, _ = _branch_data(case)
    for i, b in enumerate(case.buses):
        x[vm.index[f"W[{b.id}]"]] = abs(pf.v[i]) ** 2
    for g_idx, _ in case.online_generators:
        x[vm.index[f"pg[{g_idx}]"]] = pf.pg[g_idx]
        x[vm.index[f"qg[{g_idx}]"]] = pf.qg[g_idx]
    vprime = pf.v[f] / tap
    s = vprime * np.conj(pf.i_series)
    for l, terms in enumerate(model.branch_terms):
        x[terms.P] = s[l].real
        x[terms.Q] = s[l].imag
        x[terms.S] = abs(s[l])
        x[terms.Phi] = abs(pf.i_series[l]) ** 2
    fill_rnf(x, blocks)
    return x


def socp_dispatch(case: NetworkCase):
    """SOCP relaxation point: generator dispatch and bus voltage magnitudes."""
    from .solve import solve_socp

    inc, rep, model, _ = solve_socp(case)
    if inc is None:
        raise WarmStartError(f"SOCP relaxation {rep.status}")
    pg = np.zeros(len(case.generators))
    for g_idx, _ in case.online_generators:
        pg[g_idx] = inc.x[model.vars.index[f"pg[{g_idx}]"]]
    vmag = {b.id: math.sqrt(max(inc.x[model.vars.index[f"W[{b.id}]"]], 0.0)) for b in case.buses}
    return pg, vmag


def ac_warm_point(case: NetworkCase, allow_opf: bool = True, log=None) -> PfSolution:
    """Feasible AC point: SOCP dispatch + Newton power flow, then a local OPF if needed."""
    pg, vmag = socp_dispatch(case)
    gen_buses = {g.bus for _, g in case.online_generators}
    pf = newton_power_flow(case, pg, {b: vmag[b] for b in gen_buses})
    bad = ac_violations(case, pf) if pf.converged else ["power flow did not converge"]
    if not bad:
        return pf
    if log:
        log(f"power flow point infeasible ({bad[0]}); running local AC OPF")
    if not allow_opf:
        raise WarmStartError("; ".join(bad))
    pf2 = local_acopf(case, pf) if pf.converged else None
    if pf2 is None or not pf2.converged or ac_violations(case, pf2):
        pf2 = local_acopf(case, None)
    if pf2 is None or not pf2.converged:
        raise WarmStartError("local AC OPF failed")
    bad = ac_violations(case, pf2)
    if bad:
        raise WarmStartError("; ".join(bad))
    return pf2


# --------------------------------------------------------------------------
# LNS post-processing


@dataclass
class LnsResult:
    applicable: bool
    x: np.ndarray
    objective: float
    errors: ConicErrorReport
    before: ConicErrorReport
    message: str = ""


def lns_postprocess(x_inc: np.ndarray, model: LinearModel, blocks: list[SocBlock],
                    eta: float = ETA, time_limit: float | None = None) -> LnsResult:
    """Fix the incumbent's R&F binaries and re-solve with the exact cone in each wedge."""
    from .bnc import SolveConfig, branch_and_cut

    x_inc = np.asarray(x_inc, dtype=float)
    before = conic_errors(x_inc, blocks, model, eta)
    m = model.copy()
    n_inc = len(x_inc)
    for j in m.vars.binaries():
        if j >= n_inc:
            raise ValueError("incumbent is shorter than the model")
        v = float(round(x_inc[j]))
        m.vars.lb[j] = m.vars.ub[j] = v
    cblocks = [b.clone() for b in blocks]
    for b in cblocks:
        b.exact_soc = True
    inc, rep = branch_and_cut(m, cblocks, None, SolveConfig(method="SOCP", time_limit=time_limit,
                                                                  soc_tol=LNS_SOC_TOL))
    if inc is None:
        return LnsResult(False, x_inc, model.objective_value(x_inc), before, before,
                         f"fixed wedge does not meet the cone ({rep.status})")
    x = inc.x[:model.n_vars]
    return LnsResult(True, x, inc.objective, conic_errors(x, blocks, model, eta), before)
