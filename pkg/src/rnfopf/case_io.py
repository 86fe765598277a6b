"""MATPOWER case reader/writer and per-unit network model.

Only the subset of the MATPOWER format used by PGLib-OPF is understood:
``mpc.baseMVA`` plus the ``bus``, ``gen``, ``branch`` and ``gencost``
matrices.  Everything is converted to per unit on ``base_mva`` at parse time;
angle limits are stored in radians.
"""

from __future__ import annotations

import enum
import math
import re
from collections import deque
from dataclasses import dataclass, field

import numpy as np

ANGLE_CLIP_DEG = 89.9


class CaseError(ValueError):
    """Base class for case parsing and validation failures."""


class CaseParseError(CaseError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedCostError(CaseError):
    pass


class CaseValidationError(CaseError):
    pass


class BusType(enum.IntEnum):
    PQ = 1
    PV = 2
    SLACK = 3


@dataclass(frozen=True)
class Bus:
    id: int
    bus_type: BusType
    p_d: float
    q_d: float
    g_s: float
    b_s: float
    v_min: float
    v_max: float
    # Not used by the relaxation; kept so the writer can round-trip.
    v_m: float = 1.0
    v_a: float = 0.0
    base_kv: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_c: float
    s_max: float
    tap: float = 1.0
    shift: float = 0.0
    ang_min: float = -math.radians(ANGLE_CLIP_DEG)
    ang_max: float = math.radians(ANGLE_CLIP_DEG)


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    c1: float = 0.0
    c0: float = 0.0
    status: bool = True
    p_g: float = 0.0
    q_g: float = 0.0
    v_g: float = 1.0


@dataclass(frozen=True)
class NetworkCase:
    name: str
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    _bus_pos: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_bus_pos", {b.id: i for i, b in enumerate(self.buses)})

    def bus_index(self, bus_id: int) -> int:
        return self._bus_pos[bus_id]

    @property
    def online_generators(self) -> list[tuple[int, Generator]]:
        return [(g, gen) for g, gen in enumerate(self.generators) if gen.status]

    @property
    def slack_bus(self) -> Bus:
        slack = [b for b in self.buses if b.bus_type == BusType.SLACK]
        if len(slack) != 1:
            raise CaseValidationError(f"expected exactly one slack bus, found {len(slack)}")
        return slack[0]


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "warning" | "error"
    code: str
    message: str
    index: int | None = None
    value: float | None = None


# --------------------------------------------------------------------------
# parsing

_ASSIGN = re.compile(r"mpc\.(\w+)\s*=\s*")


def _strip_comment(line: str) -> str:
    # MATPOWER comments start with '%'; quoted strings never contain one in
    # the files we read.
    pos = line.find("%")
    return line if pos < 0 else line[:pos]


def _read_sections(text: str) -> tuple[dict[str, float], dict[str, list[tuple[int, list[float]]]]]:
    scalars: dict[str, float] = {}
    matrices: dict[str, list[tuple[int, list[float]]]] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = _strip_comment(lines[i])
        m = _ASSIGN.search(line)
        if not m:
            i += 1
            continue
        key = m.group(1)
        rest = line[m.end():].strip()
        if rest.startswith("["):
            rows: list[tuple[int, list[float]]] = []
            body = rest[1:]
            lineno = i + 1
            while True:
                closed = "]" in body
                if closed:
                    body = body[: body.index("]")]
                for chunk in body.split(";"):
                    tokens = chunk.replace(",", " ").split()
                    if not tokens:
                        continue
                    try:
                        rows.append((lineno, [float(t) for t in tokens]))
                    except ValueError:
                        raise CaseParseError(f"non-numeric entry in mpc.{key}: {chunk.strip()!r}", lineno)
                if closed:
                    break
                i += 1
                if i >= len(lines):
                    raise CaseParseError(f"unterminated matrix mpc.{key}", lineno)
                lineno = i + 1
                body = _strip_comment(lines[i])
            matrices[key] = rows
        else:
            value = rest.rstrip(";").strip()
            if key == "baseMVA":
                try:
                    scalars[key] = float(value)
                except ValueError:
                    raise CaseParseError(f"bad baseMVA value {value!r}", i + 1)
        i += 1
    return scalars, matrices


def _need(rows, key: str, width: int):
    for lineno, row in rows:
        if len(row) < width:
            raise CaseParseError(f"mpc.{key} row has {len(row)} columns, expected at least {width}", lineno)


def _clip_angle(deg: float, lower: bool) -> float:
    if lower:
        deg = max(deg, -ANGLE_CLIP_DEG)
        deg = min(deg, 0.0)
    else:
        deg = min(deg, ANGLE_CLIP_DEG)
        deg = max(deg, 0.0)
    return math.radians(deg)


def parse_case(text: str, name: str = "case") -> NetworkCase:
    """Parse MATPOWER case text into a per-unit :class:`NetworkCase`.

    Raises
    ------
    CaseParseError
        Missing sections or malformed rows (the message carries the line).
    UnsupportedCostError
        Piecewise-linear costs or any nonzero term of degree above one.
    CaseValidationError
        No slack bus, or dangling bus references.
    """
    m = re.search(r"function\s+mpc\s*=\s*(\w+)", text)
    if m:
        name = m.group(1)
    scalars, mats = _read_sections(text)
    if "baseMVA" not in scalars:
        raise CaseParseError("missing mpc.baseMVA")
    for key in ("bus", "gen", "branch"):
        if key not in mats:
            raise CaseParseError(f"missing mpc.{key}")
    base = scalars["baseMVA"]
    _need(mats["bus"], "bus", 13)
    _need(mats["gen"], "gen", 10)
    _need(mats["branch"], "branch", 11)

    buses = []
    for lineno, row in mats["bus"]:
        try:
            bus_type = BusType(int(row[1]))
        except ValueError:
            if int(row[1]) == 4:  # isolated bus
                continue
            raise CaseParseError(f"unknown bus type {row[1]}", lineno)
        buses.append(
            Bus(
                id=int(row[0]),
                bus_type=bus_type,
                p_d=row[2] / base,
                q_d=row[3] / base,
                g_s=row[4] / base,
                b_s=row[5] / base,
                v_min=row[12],
                v_max=row[11],
                v_m=row[7],
                v_a=row[8],
                base_kv=row[9],
            )
        )

    gencost = mats.get("gencost", [])
    if gencost and len(gencost) < len(mats["gen"]):
        raise CaseParseError("mpc.gencost has fewer rows than mpc.gen", gencost[-1][0])
    gens = []
    for k, (lineno, row) in enumerate(mats["gen"]):
        c1 = c0 = 0.0
        if gencost:
            cl, crow = gencost[k]
            c1, c0 = _linear_cost(crow, cl)
        gens.append(
            Generator(
                bus=int(row[0]),
                p_g=row[1] / base,
                q_g=row[2] / base,
                q_max=row[3] / base,
                q_min=row[4] / base,
                v_g=row[5],
                status=row[7] > 0,
                p_max=row[8] / base,
                p_min=row[9] / base,
                c1=c1 * base,
                c0=c0,
            )
        )

    branches = []
    for lineno, row in mats["branch"]:
        if row[10] <= 0:  # out of service
            continue
        tap = row[8] if row[8] != 0 else 1.0
        ang_min = row[11] if len(row) > 11 else -360.0
        ang_max = row[12] if len(row) > 12 else 360.0
        branches.append(
            Branch(
                from_bus=int(row[0]),
                to_bus=int(row[1]),
                r=row[2],
                x=row[3],
                b_c=row[4],
                s_max=row[5] / base,
                tap=tap,
                shift=math.radians(row[9]),
                ang_min=_clip_angle(ang_min, lower=True),
                ang_max=_clip_angle(ang_max, lower=False),
            )
        )

    case = NetworkCase(name=name, base_mva=base, buses=tuple(buses),
                       branches=tuple(branches), generators=tuple(gens))
    ids = {b.id for b in case.buses}
    for k, br in enumerate(case.branches):
        if br.from_bus not in ids or br.to_bus not in ids:
            raise CaseValidationError(f"branch {k} references an unknown bus")
    for k, g in enumerate(case.generators):
        if g.bus not in ids:
            raise CaseValidationError(f"generator {k} references unknown bus {g.bus}")
    case.slack_bus  # raises if missing or duplicated
    return case


def _linear_cost(row: list[float], lineno: int) -> tuple[float, float]:
    model = int(row[0])
    if model != 2:
        raise UnsupportedCostError(f"line {lineno}: only polynomial (model 2) costs are supported")
    n = int(row[3])
    coeffs = row[4:4 + n]
    if len(coeffs) < n:
        raise CaseParseError(f"gencost row lists {n} coefficients but has {len(coeffs)}", lineno)
    # highest degree first
    higher = coeffs[: max(n - 2, 0)]
    if any(c != 0.0 for c in higher):
        raise UnsupportedCostError(f"line {lineno}: nonlinear generator cost {coeffs} is not supported")
    if n >= 2:
        return coeffs[-2], coeffs[-1]
    if n == 1:
        return 0.0, coeffs[0]
    return 0.0, 0.0


def read_case(path) -> NetworkCase:
    from pathlib import Path

    path = Path(path)
    return parse_case(path.read_text(), name=path.stem)


# --------------------------------------------------------------------------
# canonical writer


def _exact(x: float, to_text, from_text) -> str:
    """Shortest nearby float ``v`` (as text) with ``from_text(v) == x``."""
    v = to_text(x)
    if from_text(v) == x:
        return repr(v)
    lo = hi = v
    for _ in range(16):
        lo = math.nextafter(lo, -math.inf)
        hi = math.nextafter(hi, math.inf)
        for cand in (lo, hi):
            if from_text(cand) == x:
                return repr(cand)
    return repr(v)


def _exact_scaled(x: float, base: float) -> str:
    return _exact(x, lambda u: u * base, lambda v: v / base)


def _exact_deg(rad: float) -> str:
    return _exact(rad, math.degrees, math.radians)


def write_case(case: NetworkCase) -> str:
    """Serialize to MATPOWER text that :func:`parse_case` reads back unchanged."""
    base = case.base_mva
    sc = lambda x: _exact_scaled(x, base)  # noqa: E731
    out = [f"function mpc = {case.name}", "mpc.version = '2';", f"mpc.baseMVA = {base!r};", "", "mpc.bus = ["]
    for b in case.buses:
        out.append("\t" + "\t".join([
            str(b.id), str(int(b.bus_type)), sc(b.p_d), sc(b.q_d), sc(b.g_s), sc(b.b_s),
            "1", repr(b.v_m), repr(b.v_a), repr(b.base_kv), "1", repr(b.v_max), repr(b.v_min),
        ]) + ";")
    out += ["];", "", "mpc.gen = ["]
    for g in case.generators:
        out.append("\t" + "\t".join([
            str(g.bus), sc(g.p_g), sc(g.q_g), sc(g.q_max), sc(g.q_min), repr(g.v_g), repr(base),
            "1" if g.status else "0", sc(g.p_max), sc(g.p_min),
        ]) + ";")
    out += ["];", "", "mpc.branch = ["]
    for br in case.branches:
        out.append("\t" + "\t".join([
            str(br.from_bus), str(br.to_bus), repr(br.r), repr(br.x), repr(br.b_c), sc(br.s_max),
            "0", "0", repr(br.tap), _exact_deg(br.shift), "1", _exact_deg(br.ang_min), _exact_deg(br.ang_max),
        ]) + ";")
    out += ["];", "", "mpc.gencost = ["]
    for g in case.generators:
        out.append(f"\t2\t0\t0\t2\t{_exact(g.c1, lambda u: u / base, lambda v: v * base)}\t{g.c0!r};")
    out += ["];", ""]
    return "\n".join(out)


# --------------------------------------------------------------------------
# validation


def default_flow_bound(case: NetworkCase) -> float:
    """Finite stand-in for ``s_max = 0`` (MATPOWER's "unlimited")."""
    load = sum(abs(b.p_d) + abs(b.q_d) for b in case.buses)
    gen = sum(g.p_max for _, g in case.online_generators)
    return 2.0 * load + gen


def effective_s_max(case: NetworkCase, branch: Branch) -> float:
    return branch.s_max if branch.s_max > 0 else default_flow_bound(case)


def validate_case(case: NetworkCase) -> list[Diagnostic]:
    """Collect warnings and errors; an error-free case is safe to model."""
    diags: list[Diagnostic] = []
    for i, b in enumerate(case.buses):
        if not (0 < b.v_min <= b.v_max):
            diags.append(Diagnostic("error", "voltage-bounds", f"bus {b.id}: v_min={b.v_min} v_max={b.v_max}", i))
        if not (math.isfinite(b.p_d) and math.isfinite(b.q_d)):
            diags.append(Diagnostic("error", "demand", f"bus {b.id}: non-finite demand", i))
    for k, g in enumerate(case.generators):
        if g.p_min > g.p_max:
            diags.append(Diagnostic("error", "gen-p-bounds", f"generator {k}: p_min > p_max", k))
        if g.q_min > g.q_max:
            diags.append(Diagnostic("error", "gen-q-bounds", f"generator {k}: q_min > q_max", k))
    big = None
    for k, br in enumerate(case.branches):
        if br.r < 0:
            diags.append(Diagnostic("error", "resistance", f"branch {k}: negative resistance", k))
        if br.x == 0 and br.r <= 0:
            diags.append(Diagnostic("error", "impedance", f"branch {k}: zero impedance", k))
        if br.tap <= 0:
            diags.append(Diagnostic("error", "tap", f"branch {k}: non-positive tap", k))
        if br.s_max <= 0:
            big = default_flow_bound(case) if big is None else big
            diags.append(Diagnostic("warning", "unbounded-flow",
                                    f"branch {k}: s_max=0 treated as {big:.6g} p.u.", k, big))
    n_slack = sum(b.bus_type == BusType.SLACK for b in case.buses)
    if n_slack != 1:
        diags.append(Diagnostic("error", "slack", f"{n_slack} slack buses"))
    comps = connected_components(case)
    if len(comps) > 1:
        diags.append(Diagnostic("warning", "disconnected", f"network has {len(comps)} islands"))
    return diags


def connected_components(case: NetworkCase) -> list[list[int]]:
    adj: dict[int, list[int]] = {b.id: [] for b in case.buses}
    for br in case.branches:
        adj[br.from_bus].append(br.to_bus)
        adj[br.to_bus].append(br.from_bus)
    seen: set[int] = set()
    comps = []
    for start in adj:
        if start in seen:
            continue
        comp = []
        queue = deque([start])
        seen.add(start)
        while queue:
            u = queue.popleft()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        comps.append(comp)
    return comps


def errors(diags: list[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diags if d.level == "error"]


def bundled_case_path(name: str):
    """Path of a case file shipped in ``rnfopf/data`` (``case5`` -> pglib case5_pjm, ...)."""
    from importlib import resources

    aliases = {
        "case5": "pglib_opf_case5_pjm.m",
        "case30": "pglib_opf_case30_ieee.m",
        "case118": "pglib_opf_case118_ieee.m",
        "two_bus": "two_bus.m",
    }
    fname = aliases.get(name, name if name.endswith(".m") else name + ".m")
    return resources.files("rnfopf") / "data" / fname


def load_bundled(name: str) -> NetworkCase:
    path = bundled_case_path(name)
    return parse_case(path.read_text(), name=path.name[:-2])


def as_arrays(case: NetworkCase) -> dict[str, np.ndarray]:
    """Dense per-unit arrays, convenient for vectorised power-flow code."""
    return {
        "p_d": np.array([b.p_d for b in case.buses]),
        "q_d": np.array([b.q_d for b in case.buses]),
        "g_s": np.array([b.g_s for b in case.buses]),
        "b_s": np.array([b.b_s for b in case.buses]),
        "v_min": np.array([b.v_min for b in case.buses]),
        "v_max": np.array([b.v_max for b in case.buses]),
    }
