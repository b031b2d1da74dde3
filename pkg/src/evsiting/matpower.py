"""Read MATPOWER ``.m`` case files and estimate bus prices offline.

Only plain numeric matrices (``mpc.bus = [ ... ];`` and friends) are
understood, which covers the standard case library.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ._validation import ValidationError
from .grid import from_matpower

_MATRIX = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\]\s*;", re.S)
_SCALAR = re.compile(r"mpc\.(\w+)\s*=\s*([-+0-9.eE]+)\s*;")


@dataclass
class MatpowerCase:
    base_mva: float
    bus: np.ndarray
    gen: np.ndarray
    branch: np.ndarray
    gencost: np.ndarray | None = None


def _rows(body):
    body = re.sub(r"%[^\n]*", "", body)
    rows = []
    for chunk in re.split(r"[;\n]", body):
        chunk = chunk.strip().strip(",")
        if chunk:
            rows.append([float(v) for v in chunk.replace(",", " ").split()])
    if len({len(r) for r in rows}) > 1:
        raise ValidationError("ragged matrix in case file")
    return np.array(rows, dtype=float)


def parse_case(text) -> MatpowerCase:
    """Parse the text of a MATPOWER case file."""
    text = re.sub(r"%[^\n]*", "", text)
    mats = {name: _rows(body) for name, body in _MATRIX.findall(text)}
    scalars = {name: float(v) for name, v in _SCALAR.findall(text)}
    missing = [m for m in ("bus", "gen", "branch") if m not in mats]
    if missing:
        raise ValidationError(f"case file lacks {', '.join('mpc.' + m for m in missing)}")
    return MatpowerCase(scalars.get("baseMVA", 100.0), mats["bus"], mats["gen"], mats["branch"], mats.get("gencost"))


def linear_costs(case: MatpowerCase):
    """Marginal cost ($/MWh) of each generator from a polynomial ``gencost``.

    The linear coefficient is used; quadratic terms are dropped because the
    dispatch below is a linear program.
    """
    if case.gencost is None:
        raise ValidationError("case file has no mpc.gencost table")
    out = []
    for row in case.gencost:
        if int(row[0]) != 2:
            raise ValidationError("only polynomial generator costs (model 2) are supported")
        n = int(row[3])
        coeffs = row[4 : 4 + n]
        out.append(coeffs[-2] if n >= 2 else 0.0)
    return np.array(out, dtype=float)


def dc_opf_lmp(case: MatpowerCase, costs=None):
    """Locational marginal prices ($/MWh) from a lossless DC optimal dispatch.

    Minimises linear generation cost subject to DC power balance, generator
    limits and branch ``rateA`` limits (0 means unlimited). Prices are the
    duals of the nodal balance constraints.
    """
    costs = linear_costs(case) if costs is None else np.asarray(costs, float)
    bus, gen, branch = case.bus, case.gen, case.branch
    base = case.base_mva
    ids = [int(b) for b in bus[:, 0]]
    idx = {b: i for i, b in enumerate(ids)}
    n = len(ids)
    on_gen = [g for g in range(len(gen)) if gen.shape[1] <= 7 or gen[g, 7] > 0]
    on_br = [r for r in branch if branch.shape[1] <= 10 or r[10] > 0]
    ng = len(on_gen)
    # variables: generator outputs (pu) then bus angles
    B = np.zeros((n, n))
    flows = []
    for r in on_br:
        f, t, x = idx[int(r[0])], idx[int(r[1])], r[3]
        if x == 0:
            raise ValidationError(f"branch ({int(r[0])}, {int(r[1])}) has zero reactance")
        B[f, f] += 1 / x
        B[t, t] += 1 / x
        B[f, t] -= 1 / x
        B[t, f] -= 1 / x
        flows.append((f, t, x, r[5] / base if r.shape[0] > 5 else 0.0))
    Cg = np.zeros((n, ng))
    for col, g in enumerate(on_gen):
        Cg[idx[int(gen[g, 0])], col] = 1.0
    A_eq = np.hstack([Cg, -B])
    b_eq = bus[:, 2] / base
    slack = [i for i in range(n) if int(bus[i, 1]) == 3]
    if len(slack) != 1:
        raise ValidationError("case needs exactly one reference bus")
    ref = np.zeros((1, ng + n))
    ref[0, ng + slack[0]] = 1.0
    A_ub, b_ub = [], []
    for f, t, x, limit in flows:
        if limit > 0:
            row = np.zeros(ng + n)
            row[ng + f], row[ng + t] = 1 / x, -1 / x
            A_ub += [row, -row]
            b_ub += [limit, limit]
    pmax = gen[on_gen, 8] / base if gen.shape[1] > 8 else np.full(ng, np.inf)
    pmin = gen[on_gen, 9] / base if gen.shape[1] > 9 else np.zeros(ng)
    bounds = [(lo, hi) for lo, hi in zip(pmin, pmax)] + [(None, None)] * n
    res = linprog(
        np.concatenate([costs[: len(on_gen)] * base, np.zeros(n)]),
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.vstack([A_eq, ref]),
        b_eq=np.concatenate([b_eq, [0.0]]),
        bounds=bounds,
        method="highs",
    )
    if res.status != 0:
        raise ValidationError(f"DC dispatch failed: {res.message}")
    # duals are per pu of injection; divide by base to express $/MWh
    lmp = res.eqlin.marginals[:n] / base
    return dict(zip(ids, lmp.tolist())), res.x[:ng] * base


def case_to_grid(case: MatpowerCase, lmp_per_kwh=None):
    """Convert a parsed case into the package's grid model."""
    return from_matpower(case.bus, case.gen, case.branch, case.base_mva, lmp_per_kwh)
