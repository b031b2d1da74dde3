"""Bus admittance, Newton-Raphson AC power flow and the EV disturbance metric.

All electrical quantities are per-unit on ``GridCase.base_mva``.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import ValidationError

SLACK, PV, PQ = "slack", "PV", "PQ"
BUS_TYPES = (SLACK, PV, PQ)

TOLERANCE = 1e-8
MAX_ITER = 50


class ZeroImpedanceError(ValueError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    type: str
    p_load: float = 0.0
    q_load: float = 0.0
    lmp: float = 0.0
    vm: float = 1.0
    gs: float = 0.0
    bs: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0


@dataclass(frozen=True)
class Generator:
    bus: int
    p: float
    q: float = 0.0
    participation: float = 0.0


@dataclass(frozen=True)
class GridCase:
    buses: tuple
    branches: tuple
    generators: tuple
    base_mva: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "generators", tuple(self.generators))

    def problems(self):
        out = []
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            out.append("bus ids are not unique")
        n_slack = sum(b.type == SLACK for b in self.buses)
        if n_slack != 1:
            out.append(f"grid must have exactly one slack bus, found {n_slack}")
        for b in self.buses:
            if b.type not in BUS_TYPES:
                out.append(f"bus {b.id} has unknown type {b.type!r}")
        known = set(ids)
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                out.append(f"branch ({br.from_bus}, {br.to_bus}) references an unknown bus")
        for g in self.generators:
            if g.bus not in known:
                out.append(f"generator references unknown bus {g.bus}")
            if g.participation < 0:
                out.append(f"generator at bus {g.bus} has negative participation factor")
        if self.generators and not math.isclose(sum(g.participation for g in self.generators), 1.0, abs_tol=1e-9):
            out.append("generator participation factors must sum to 1")
        if not self.base_mva > 0:
            out.append("base_mva must be > 0")
        return out

    def bus_index(self):
        return {b.id: i for i, b in enumerate(self.buses)}


@dataclass
class PowerFlowSolution:
    vm: np.ndarray
    va: np.ndarray
    gen_p: np.ndarray
    gen_q: np.ndarray
    converged: bool
    iterations: int
    max_residual: float
    losses: float = 0.0
    bus_p: np.ndarray = field(default=None, repr=False)
    bus_q: np.ndarray = field(default=None, repr=False)


def build_admittance(case: GridCase) -> np.ndarray:
    """Dense complex Y-bus assembled by stamping the pi model of every branch."""
    idx = case.bus_index()
    n = len(case.buses)
    Y = np.zeros((n, n), dtype=complex)
    for i, b in enumerate(case.buses):
        Y[i, i] += b.gs + 1j * b.bs
    for br in case.branches:
        z = complex(br.r, br.x)
        if z == 0:
            raise ZeroImpedanceError(f"branch ({br.from_bus}, {br.to_bus}) has zero impedance")
        y = 1.0 / z
        f, t = idx[br.from_bus], idx[br.to_bus]
        Y[f, f] += y + 0.5j * br.b
        Y[t, t] += y + 0.5j * br.b
        Y[f, t] -= y
        Y[t, f] -= y
    return Y


def _injections(case: GridCase, gen_p, extra_p, extra_q):
    """Scheduled net injections (generation minus load) per bus."""
    idx = case.bus_index()
    p = -np.array([b.p_load for b in case.buses]) - extra_p
    q = -np.array([b.q_load for b in case.buses]) - extra_q
    for g, pg in zip(case.generators, gen_p):
        p[idx[g.bus]] += pg
        q[idx[g.bus]] += g.q
    return p, q


def _extra_arrays(case, extra_load):
    n = len(case.buses)
    ep, eq = np.zeros(n), np.zeros(n)
    if extra_load:
        idx = case.bus_index()
        for bus, (dp, dq) in extra_load.items():
            if bus not in idx:
                raise KeyError(f"unknown bus {bus}")
            if not (math.isfinite(dp) and math.isfinite(dq)):
                raise ValidationError(f"extra load at bus {bus} is not finite")
            ep[idx[bus]] += dp
            eq[idx[bus]] += dq
    return ep, eq


def _mismatch(Y, V, p_sched, q_sched):
    S = V * np.conj(Y @ V)
    return S.real - p_sched, S.imag - q_sched, S


def solve_power_flow(case: GridCase, extra_load=None, *, gen_p=None, tol=TOLERANCE, max_iter=MAX_ITER, start=None):
    """Newton-Raphson in polar form, from a flat start unless ``start`` gives
    a previous solution to warm-start from.

    ``extra_load`` maps bus id to an additional ``(P, Q)`` load. ``gen_p``
    overrides the scheduled real output of each generator. Non-convergence
    is reported through ``converged`` rather than raised.
    """
    Y = build_admittance(case)
    n = len(case.buses)
    types = [b.type for b in case.buses]
    slack = [i for i, t in enumerate(types) if t == SLACK]
    pv = [i for i, t in enumerate(types) if t == PV]
    pq = [i for i, t in enumerate(types) if t == PQ]
    pvpq = pv + pq
    gen_p = np.array([g.p for g in case.generators], dtype=float) if gen_p is None else np.asarray(gen_p, float)
    ep, eq = _extra_arrays(case, extra_load)
    p_sched, q_sched = _injections(case, gen_p, ep, eq)

    vm = np.ones(n)
    va = np.zeros(n)
    if start is not None:
        vm[pq] = start.vm[pq]
        va[pvpq] = start.va[pvpq]
    for i in slack + pv:
        vm[i] = case.buses[i].vm
    V = vm * np.exp(1j * va)

    def residual(V):
        dp, dq, _ = _mismatch(Y, V, p_sched, q_sched)
        return np.concatenate([dp[pvpq], dq[pq]])

    F = residual(V)
    err = float(np.max(np.abs(F))) if F.size else 0.0
    it = 0
    while err >= tol and it < max_iter:
        J = _jacobian(Y, V, pvpq, pq)
        dx = np.linalg.solve(J, -F)
        npvpq = len(pvpq)
        va[pvpq] += dx[:npvpq]
        vm[pq] += dx[npvpq:]
        V = vm * np.exp(1j * va)
        F = residual(V)
        err = float(np.max(np.abs(F))) if F.size else 0.0
        it += 1
        if not np.isfinite(err):
            break

    S = V * np.conj(Y @ V)
    load_p = np.array([b.p_load for b in case.buses]) + ep
    load_q = np.array([b.q_load for b in case.buses]) + eq
    # generator outputs: scheduled P except at the slack bus; Q is free at slack/PV buses
    out_p = gen_p.copy()
    out_q = np.array([g.q for g in case.generators], dtype=float)
    idx = case.bus_index()
    for i, b in enumerate(case.buses):
        gens = [gi for gi, g in enumerate(case.generators) if idx[g.bus] == i]
        if not gens:
            continue
        if b.type == SLACK:
            for gi in gens:
                out_p[gi] = (S.real[i] + load_p[i]) / len(gens)
        if b.type in (SLACK, PV):
            for gi in gens:
                out_q[gi] = (S.imag[i] + load_q[i]) / len(gens)
    # net injections sum to generation minus load, i.e. series and shunt losses
    losses = float(S.real.sum())
    return PowerFlowSolution(
        vm=np.abs(V),
        va=np.angle(V),
        gen_p=out_p,
        gen_q=out_q,
        converged=bool(err < tol),
        iterations=it,
        max_residual=err,
        losses=losses,
        bus_p=S.real,
        bus_q=S.imag,
    )


def _jacobian(Y, V, pvpq, pq):
    Ibus = Y @ V
    diagV = np.diag(V)
    diagI = np.diag(Ibus)
    diagVnorm = np.diag(V / np.abs(V))
    dS_dVa = 1j * diagV @ np.conj(diagI - Y @ diagV)
    dS_dVm = diagV @ np.conj(Y @ diagVnorm) + np.conj(diagI) @ diagVnorm
    J11 = dS_dVa.real[np.ix_(pvpq, pvpq)]
    J12 = dS_dVm.real[np.ix_(pvpq, pq)]
    J21 = dS_dVa.imag[np.ix_(pq, pvpq)]
    J22 = dS_dVm.imag[np.ix_(pq, pq)]
    return np.block([[J11, J12], [J21, J22]])


def node_power_residuals(case: GridCase, sol: PowerFlowSolution, extra_load=None):
    """Real/reactive node-balance residuals of a solution, recomputed from
    the G/B form of the power equations. Slack entries (and Q at PV buses)
    are zero by construction of the generator outputs."""
    Y = build_admittance(case)
    G, B = Y.real, Y.imag
    vm, va = sol.vm, sol.va
    n = len(case.buses)
    ep, eq = _extra_arrays(case, extra_load)
    idx = case.bus_index()
    p_inj = -np.array([b.p_load for b in case.buses]) - ep
    q_inj = -np.array([b.q_load for b in case.buses]) - eq
    for g, pg, qg in zip(case.generators, sol.gen_p, sol.gen_q):
        p_inj[idx[g.bus]] += pg
        q_inj[idx[g.bus]] += qg
    dP, dQ = np.empty(n), np.empty(n)
    for i in range(n):
        ang = va[i] - va
        dP[i] = -p_inj[i] + np.sum(vm[i] * vm * (G[i] * np.cos(ang) + B[i] * np.sin(ang)))
        dQ[i] = -q_inj[i] + np.sum(vm[i] * vm * (G[i] * np.sin(ang) - B[i] * np.cos(ang)))
    return dP, dQ


def ev_load_to_pu(case: GridCase, energy_kwh, horizon_h, power_factor=1.0):
    """Average per-unit (P, Q) for ``energy_kwh`` drawn evenly over ``horizon_h`` hours."""
    if horizon_h <= 0:
        raise ValidationError("horizon must be > 0")
    if energy_kwh < 0:
        raise ValidationError("EV load must be >= 0")
    p = energy_kwh / horizon_h / (case.base_mva * 1000.0)
    q = p * math.tan(math.acos(power_factor)) if power_factor < 1 else 0.0
    return p, q


@functools.lru_cache(maxsize=32)
def _base_solution(case: GridCase):
    return solve_power_flow(case)


def dispatch_with_ev(case: GridCase, ev_load, horizon_h=24.0, *, power_factor=1.0, max_rounds=30):
    """Generator (P, Q) outputs after superposing EV charging load.

    ``ev_load`` maps bus id to kWh over the horizon. The added load plus the
    incremental losses is spread over generators by participation factor;
    the slack closes whatever mismatch remains. Returns
    ``(gen_p, gen_q, solution)``.
    """
    base = _base_solution(case)
    extra = {}
    for bus, kwh in (ev_load or {}).items():
        p, q = ev_load_to_pu(case, kwh, horizon_h, power_factor)
        extra[bus] = (p, q)
    added = sum(p for p, _ in extra.values())
    part = np.array([g.participation for g in case.generators], dtype=float)
    base_p = np.array([g.p for g in case.generators], dtype=float)
    extra_losses = 0.0
    sol = None
    for _ in range(max_rounds):
        sol = solve_power_flow(case, extra, gen_p=base_p + part * (added + extra_losses), start=sol if sol and sol.converged else None)
        new_extra = sol.losses - base.losses
        if abs(new_extra - extra_losses) < 1e-12 or not sol.converged:
            extra_losses = new_extra
            break
        extra_losses = new_extra
    return sol.gen_p, sol.gen_q, sol


def disturbance(base, ev):
    """Squared 2-norm deviation of generator real and reactive power."""
    bp, bq = (np.asarray(x, dtype=float) for x in base)
    ep, eq = (np.asarray(x, dtype=float) for x in ev)
    if bp.shape != ep.shape or bq.shape != eq.shape or bp.shape != bq.shape:
        raise ValidationError("generator vectors must have equal length")
    return float(np.sum((bp - ep) ** 2) + np.sum((bq - eq) ** 2))


def lmp_at(case: GridCase, bus):
    for b in case.buses:
        if b.id == bus:
            return b.lmp
    raise KeyError(f"unknown bus {bus}")


# --- CSV tables -------------------------------------------------------------

BUS_COLUMNS = ["id", "type", "p_load", "q_load", "lmp", "vm", "gs", "bs"]
BRANCH_COLUMNS = ["from_bus", "to_bus", "r", "x", "b"]
GEN_COLUMNS = ["bus", "p", "q", "participation"]


def save_grid_csv(case: GridCase, directory):
    """Write ``bus.csv``, ``branch.csv``, ``gen.csv`` and ``meta.csv`` under ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    tables = [
        ("bus.csv", BUS_COLUMNS, case.buses),
        ("branch.csv", BRANCH_COLUMNS, case.branches),
        ("gen.csv", GEN_COLUMNS, case.generators),
    ]
    for name, cols, rows in tables:
        with open(d / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([_fmt(getattr(r, c)) for c in cols])
    with open(d / "meta.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["base_mva"])
        w.writerow([_fmt(case.base_mva)])


def load_grid_csv(directory) -> GridCase:
    d = Path(directory)

    def rows(name, cols, required):
        with open(d / name, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in required if c not in (reader.fieldnames or [])]
            if missing:
                raise ValidationError(f"{d / name}: missing columns {missing}")
            out = []
            for lineno, row in enumerate(reader, start=2):
                try:
                    out.append({c: row[c] for c in cols if c in row and row[c] != ""})
                except KeyError as exc:  # pragma: no cover
                    raise ValidationError(f"{d / name}:{lineno}: {exc}") from None
            return out

    def conv(rec, types, where):
        out = {}
        for k, v in rec.items():
            try:
                out[k] = types.get(k, float)(v)
            except ValueError:
                raise ValidationError(f"{where}: bad value {v!r} for {k}") from None
        return out

    buses = [Bus(**conv(r, {"id": int, "type": str}, f"{d}/bus.csv:{i + 2}")) for i, r in enumerate(rows("bus.csv", BUS_COLUMNS, ["id", "type"]))]
    branches = [
        Branch(**conv(r, {"from_bus": int, "to_bus": int}, f"{d}/branch.csv:{i + 2}"))
        for i, r in enumerate(rows("branch.csv", BRANCH_COLUMNS, ["from_bus", "to_bus", "r", "x"]))
    ]
    gens = [Generator(**conv(r, {"bus": int}, f"{d}/gen.csv:{i + 2}")) for i, r in enumerate(rows("gen.csv", GEN_COLUMNS, ["bus", "p"]))]
    base = 100.0
    if (d / "meta.csv").exists():
        with open(d / "meta.csv", newline="") as fh:
            base = float(next(csv.DictReader(fh))["base_mva"])
    return GridCase(buses, branches, gens, base)


def from_matpower(bus, gen, branch, base_mva=100.0, lmp=None):
    """Convert MATPOWER-style numeric tables (MW/MVAr units) to a GridCase.

    Only the columns this model uses are read: bus [id, type, Pd, Qd, Gs, Bs,
    .., Vm]; gen [bus, Pg, Qg, .., Vg, .., status]; branch [f, t, r, x, b, ..,
    status]. Participation factors are set proportional to generator
    capacity ``Pmax`` when available, otherwise equal.
    """
    bus = np.atleast_2d(np.asarray(bus, float))
    gen = np.atleast_2d(np.asarray(gen, float))
    branch = np.atleast_2d(np.asarray(branch, float))
    type_map = {1: PQ, 2: PV, 3: SLACK}
    vg = {int(g[0]): g[5] for g in gen if gen.shape[1] > 5}
    lmp = lmp or {}
    buses = []
    for row in bus:
        bid = int(row[0])
        t = type_map.get(int(row[1]), PQ)
        vm = vg.get(bid, row[7] if bus.shape[1] > 7 else 1.0) if t != PQ else 1.0
        buses.append(
            Bus(bid, t, *(float(v) / base_mva for v in row[2:4]), float(lmp.get(bid, 0.0)), float(vm), *(float(v) / base_mva for v in row[4:6]))
        )
    active = [g for g in gen if gen.shape[1] <= 7 or g[7] > 0]
    caps = np.array([g[8] if gen.shape[1] > 8 else 1.0 for g in active], float)
    if caps.sum() <= 0:
        caps = np.ones(len(active))
    gens = [Generator(int(g[0]), float(g[1]) / base_mva, float(g[2]) / base_mva, float(c / caps.sum())) for g, c in zip(active, caps)]
    branches = [Branch(int(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in branch if branch.shape[1] <= 10 or r[10] > 0]
    return GridCase(buses, branches, gens, float(base_mva))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
