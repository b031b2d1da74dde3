"""Scenario model, validation and file formats.

A scenario is one JSON document. The grid may be embedded (``"grid": {...}``)
or point at a directory of CSV tables (``"grid": "path/to/dir"``, relative to
the scenario file). See README.md for the full schema.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ._validation import ValidationError, make_rng
from .choice import ChoiceCoefficients, EvAgent, ProviderConfig
from .grid import Branch, Bus, Generator, GridCase, load_grid_csv
from .results import QosEstimate, StageResult
from .road import RoadNetwork, Site

N_PROVIDERS = 3


class ScenarioParseError(ValueError):
    """Malformed scenario file; the message carries line or field context."""


@dataclass(frozen=True)
class PlannerConfig:
    """Planner knobs.

    w : weight of the grid-disturbance penalty
    delay_max : largest admissible average delay probability
    coverage_min : coverage threshold; compared with ``>=`` unless
        ``coverage_sense`` is ``"<="``
    d_th_km : "near" threshold for destination and coverage tests
    theta_lower, theta_upper : bounds of the uniform placement-cost draw
    horizon_h : hours over which station energy is averaged into grid load
    qos_draws : opponent placements used per candidate policy in the QoS filter
    """

    w: float = 0.0
    delay_max: float = 1.0
    coverage_min: float = 0.0
    d_th_km: float = 1.0
    outside_good: bool = True
    theta_lower: float = 0.0
    theta_upper: float = 0.0
    monte_carlo_runs: int = 1
    horizon_h: float = 24.0
    ev_power_factor: float = 1.0
    coverage_sense: str = ">="
    qos_filter: bool = True
    qos_draws: int = 16
    belief_p: float = 0.5
    belief_mc_draws: int = 1000
    price_span: float = 2.0

    def problems(self):
        out = []
        if not self.w >= 0:
            out.append("planner.w must be >= 0")
        if not 0 <= self.delay_max <= 1:
            out.append("planner.delay_max must lie in [0, 1]")
        if not self.coverage_min >= 0:
            out.append("planner.coverage_min must be >= 0")
        if not self.d_th_km >= 0:
            out.append("planner.d_th_km must be >= 0")
        if not self.theta_lower <= self.theta_upper:
            out.append("planner.theta_lower must not exceed theta_upper")
        if not self.monte_carlo_runs >= 1:
            out.append("planner.monte_carlo_runs must be >= 1")
        if not self.horizon_h > 0:
            out.append("planner.horizon_h must be > 0")
        if not 0 < self.ev_power_factor <= 1:
            out.append("planner.ev_power_factor must lie in (0, 1]")
        if self.coverage_sense not in (">=", "<="):
            out.append("planner.coverage_sense must be '>=' or '<='")
        if not self.qos_draws >= 1:
            out.append("planner.qos_draws must be >= 1")
        if not 0 <= self.belief_p <= 1:
            out.append("planner.belief_p must lie in [0, 1]")
        if not self.belief_mc_draws >= 1000:
            out.append("planner.belief_mc_draws must be >= 1000")
        if not self.price_span > 0:
            out.append("planner.price_span must be > 0")
        return out


@dataclass(frozen=True)
class StageConfig:
    ev_count: int
    label: str = ""


@dataclass(frozen=True)
class DestinationCategory:
    name: str
    nodes: tuple
    weight: float

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))


@dataclass(frozen=True)
class TravelPattern:
    """Synthetic stand-in for travel-survey statistics.

    ``departures`` is a histogram of ``(start_min, end_min, weight)`` bins.
    With no destination categories each EV drives to its own destination.
    """

    destinations: tuple = ()
    departures: tuple = ((420.0, 540.0, 1.0),)
    electric_range_km: float = 100.0
    speed_kmh: float = 40.0

    def __post_init__(self):
        object.__setattr__(self, "destinations", tuple(self.destinations))
        object.__setattr__(self, "departures", tuple(tuple(float(v) for v in b) for b in self.departures))

    def problems(self, net):
        out = []
        for c in self.destinations:
            if c.weight < 0:
                out.append(f"destination category {c.name!r} has negative weight")
            if not c.nodes:
                out.append(f"destination category {c.name!r} has no nodes")
            for n in c.nodes:
                if not net.has_node(n):
                    out.append(f"destination category {c.name!r} references unknown node {n}")
        if self.destinations and not sum(c.weight for c in self.destinations) > 0:
            out.append("destination weights must not all be zero")
        if not self.departures:
            out.append("travel.departures must not be empty")
        for lo, hi, wt in self.departures:
            if not (0 <= lo <= hi and wt >= 0):
                out.append(f"bad departure bin ({lo}, {hi}, {wt})")
        if self.departures and not sum(b[2] for b in self.departures) > 0:
            out.append("departure weights must not all be zero")
        if not self.electric_range_km > 0:
            out.append("travel.electric_range_km must be > 0")
        if not self.speed_kmh > 0:
            out.append("travel.speed_kmh must be > 0")
        return out


@dataclass(frozen=True)
class Scenario:
    network: RoadNetwork
    agents: tuple
    sites: tuple
    providers: tuple
    coefficients: ChoiceCoefficients
    grid: GridCase
    planner: PlannerConfig
    stages: tuple
    seed: int = 0
    demand_range: tuple = (0.0, math.inf)
    travel: TravelPattern = field(default_factory=TravelPattern)

    def __post_init__(self):
        for name in ("agents", "sites", "providers", "stages"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "demand_range", tuple(float(v) for v in self.demand_range))

    @property
    def n_sites(self):
        return len(self.sites)

    @property
    def n_providers(self):
        return len(self.providers)

    def problems(self):
        out = []
        if len(self.providers) != N_PROVIDERS:
            out.append(f"scenario must define exactly {N_PROVIDERS} providers, found {len(self.providers)}")
        for p in self.providers:
            out += p.problems()
        out += self.coefficients.problems()
        if self.coefficients.n_nests != len(self.providers):
            out.append("coefficients must have one nest per provider")
        out += self.grid.problems()
        out += self.planner.problems()
        out += self.travel.problems(self.network)
        buses = {b.id for b in self.grid.buses}
        ids = [s.id for s in self.sites]
        if len(set(ids)) != len(ids):
            out.append("site ids are not unique")
        for s in self.sites:
            if not self.network.has_node(s.road_node):
                out.append(f"site {s.id} references unknown road node {s.road_node}")
            if s.bus not in buses:
                out.append(f"site {s.id} references unknown bus {s.bus}")
            if len(s.amenities) != 3 or any(a not in (0, 1) for a in s.amenities):
                out.append(f"site {s.id} amenities must be three 0/1 flags")
            if s.owner is not None and not 0 <= s.owner < len(self.providers):
                out.append(f"site {s.id} owner {s.owner} is not a provider index")
        qa, qb = self.demand_range
        if not qa <= qb:
            out.append("demand_range lower bound exceeds upper bound")
        for a in self.agents:
            for node in (a.home, a.destination):
                if not self.network.has_node(node):
                    out.append(f"agent {a.id} references unknown road node {node}")
            if not a.income > 0:
                out.append(f"agent {a.id} income must be > 0")
            if not qa <= a.demand_kwh <= qb:
                out.append(f"agent {a.id} demand {a.demand_kwh} outside [{qa}, {qb}]")
        if not self.agents:
            out.append("scenario needs at least one agent")
        counts = [s.ev_count for s in self.stages]
        if not counts:
            out.append("scenario needs at least one stage")
        for i, c in enumerate(counts):
            if not c > 0:
                out.append(f"stage {i} ev_count must be > 0")
        if any(b <= a for a, b in zip(counts, counts[1:])):
            out.append("stage ev_counts must be strictly increasing")
        if not 0 <= int(self.seed) < 2**64:
            out.append("seed must be an unsigned 64-bit integer")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ValidationError(problems)
        return self

    def stage_population(self, ev_count, stage_label=""):
        """The EV owners present at a stage.

        The first ``ev_count`` agents are used; when there are fewer agents
        than EVs the list is cycled, each copy's income jittered by a factor
        in [0.9, 1.1].
        """
        n = len(self.agents)
        if ev_count <= n:
            return list(self.agents[:ev_count])
        rng = make_rng(self.seed, "population", ev_count)
        jitter = rng.uniform(0.9, 1.1, size=ev_count - n)
        out = list(self.agents)
        next_id = max(a.id for a in self.agents) + 1
        for i in range(ev_count - n):
            src = self.agents[i % n]
            out.append(EvAgent(next_id + i, src.home, src.destination, src.income * float(jitter[i]), src.demand_kwh))
        return out

    def lmp_matrix(self):
        """(providers, sites) wholesale price at each candidate's bus."""
        lmp = {b.id: b.lmp for b in self.grid.buses}
        row = np.array([lmp[s.bus] for s in self.sites], dtype=float)
        return np.tile(row, (len(self.providers), 1))

    def allowed_mask(self):
        """(providers, sites) mask of sites each provider may build on."""
        mask = np.ones((len(self.providers), len(self.sites)), dtype=bool)
        for j, s in enumerate(self.sites):
            if s.owner is not None:
                mask[:, j] = False
                mask[s.owner, j] = True
        return mask

    def replace(self, **changes):
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return Scenario(**data)


# --- JSON ---------------------------------------------------------------------


def _json_num(v):
    return "inf" if isinstance(v, float) and math.isinf(v) and v > 0 else v


def scenario_to_dict(sc: Scenario) -> dict:
    c = sc.coefficients
    return {
        "seed": int(sc.seed),
        "network": {
            "nodes": [list(n) for n in sc.network.nodes],
            "edges": [list(e) for e in sc.network.edges],
        },
        "sites": [
            {"id": s.id, "node": s.road_node, "bus": s.bus, "amenities": list(s.amenities), "owner": s.owner}
            for s in sc.sites
        ],
        "providers": [
            {"level": p.level, "charge_time_h": p.charge_time_h, "plugs_per_station": _json_num(p.plugs_per_station), "power_kw": p.power_kw}
            for p in sc.providers
        ],
        "coefficients": {
            "alpha": c.alpha,
            "beta": c.beta,
            "mu": list(c.mu),
            "eta": list(c.eta),
            "gamma": list(c.gamma),
            "lambda": list(c.lam),
            "delta": list(c.delta),
            "sigma": list(c.sigma),
        },
        "demand_range_kwh": [_json_num(v) for v in sc.demand_range],
        "agents": [
            {"id": a.id, "home": a.home, "destination": a.destination, "income": a.income, "demand_kwh": a.demand_kwh}
            for a in sc.agents
        ],
        "travel": {
            "destinations": [{"name": d.name, "nodes": list(d.nodes), "weight": d.weight} for d in sc.travel.destinations],
            "departures": [list(b) for b in sc.travel.departures],
            "electric_range_km": sc.travel.electric_range_km,
            "speed_kmh": sc.travel.speed_kmh,
        },
        "grid": {
            "base_mva": sc.grid.base_mva,
            "buses": [asdict(b) for b in sc.grid.buses],
            "branches": [asdict(b) for b in sc.grid.branches],
            "generators": [asdict(g) for g in sc.grid.generators],
        },
        "planner": asdict(sc.planner),
        "stages": [{"ev_count": s.ev_count, "label": s.label} for s in sc.stages],
    }


class _Reader:
    """Field access with path context for error messages."""

    def __init__(self, data, path="$"):
        self.data = data
        self.path = path

    def get(self, key, default=...):
        if not isinstance(self.data, dict):
            raise ScenarioParseError(f"{self.path}: expected an object")
        if key not in self.data:
            if default is ...:
                raise ScenarioParseError(f"{self.path}: missing field {key!r}")
            return default
        return self.data[key]

    def sub(self, key, default=...):
        return _Reader(self.get(key, default), f"{self.path}.{key}")

    def items(self, key, default=...):
        value = self.get(key, default)
        if not isinstance(value, list):
            raise ScenarioParseError(f"{self.path}.{key}: expected a list")
        return [_Reader(v, f"{self.path}.{key}[{i}]") for i, v in enumerate(value)]

    def num(self, key, default=..., kind=float):
        value = self.get(key, default)
        try:
            if kind is int:
                if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                    raise TypeError
                return int(value)
            return float(value)
        except (TypeError, ValueError):
            raise ScenarioParseError(f"{self.path}.{key}: expected a number, got {value!r}") from None


def _plugs(value, where):
    if value is None or value == "inf":
        return math.inf
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ScenarioParseError(f"{where}: plugs_per_station must be a number or 'inf'") from None
    return v if math.isinf(v) else int(v)


def _planner_value(name, value):
    kind = type(getattr(PlannerConfig, name))
    where = f"$.planner.{name}"
    if kind is bool:
        if not isinstance(value, bool):
            raise ScenarioParseError(f"{where}: expected true or false, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ScenarioParseError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioParseError(f"{where}: expected a number, got {value!r}")
    if kind is int:
        if not float(value).is_integer():
            raise ScenarioParseError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def scenario_from_dict(data: dict, base_dir=None) -> Scenario:
    r = _Reader(data)
    try:
        net_r = r.sub("network")
        net = RoadNetwork(tuple(tuple(n) for n in net_r.get("nodes")), tuple(tuple(e) for e in net_r.get("edges")))
        sites = [
            Site(
                s.num("id", kind=int),
                s.num("node", kind=int),
                s.num("bus", kind=int),
                tuple(int(v) for v in s.get("amenities", [0, 0, 0])),
                None if s.get("owner", None) is None else s.num("owner", kind=int),
            )
            for s in r.items("sites")
        ]
        providers = [
            ProviderConfig(
                p.num("level", kind=int),
                p.num("charge_time_h"),
                _plugs(p.get("plugs_per_station", 1), p.path),
                None if p.get("power_kw", None) is None else p.num("power_kw"),
            )
            for p in r.items("providers")
        ]
        c = r.sub("coefficients")
        coeffs = ChoiceCoefficients(
            c.num("alpha"),
            c.num("beta"),
            tuple(c.get("mu")),
            tuple(c.get("eta")),
            tuple(c.get("gamma")),
            tuple(c.get("lambda")),
            tuple(c.get("delta")),
            tuple(c.get("sigma")),
        )
        agents = [
            EvAgent(
                a.num("id", kind=int),
                a.num("home", kind=int),
                a.num("destination", kind=int),
                a.num("income"),
                a.num("demand_kwh"),
            )
            for a in r.items("agents")
        ]
        t = r.sub("travel", {})
        travel_kw = {}
        if "destinations" in t.data:
            travel_kw["destinations"] = tuple(
                DestinationCategory(d.get("name", f"category{i}"), tuple(d.get("nodes")), d.num("weight"))
                for i, d in enumerate(t.items("destinations"))
            )
        if "departures" in t.data:
            travel_kw["departures"] = tuple(tuple(b) for b in t.get("departures"))
        for key in ("electric_range_km", "speed_kmh"):
            if key in t.data:
                travel_kw[key] = t.num(key)
        travel = TravelPattern(**travel_kw)
        grid_raw = r.get("grid")
        if isinstance(grid_raw, str):
            grid_dir = Path(base_dir or ".") / grid_raw
            grid = load_grid_csv(grid_dir)
        else:
            g = r.sub("grid")
            grid = GridCase(
                [Bus(**b.data) for b in g.items("buses")],
                [Branch(**b.data) for b in g.items("branches")],
                [Generator(**x.data) for x in g.items("generators")],
                g.num("base_mva", 100.0),
            )
        planner_raw = r.get("planner", {})
        known = {f.name for f in fields(PlannerConfig)}
        unknown = set(planner_raw) - known
        if unknown:
            raise ScenarioParseError(f"$.planner: unknown fields {sorted(unknown)}")
        planner = PlannerConfig(**{k: _planner_value(k, v) for k, v in planner_raw.items()})
        stages = [StageConfig(s.num("ev_count", kind=int), str(s.get("label", f"stage {i + 1}"))) for i, s in enumerate(r.items("stages"))]
        qa, qb = r.get("demand_range_kwh", [0.0, math.inf])
    except ValidationError as exc:
        raise ValidationError(exc.problems) from None
    except TypeError as exc:
        raise ScenarioParseError(f"malformed record: {exc}") from None
    return Scenario(
        network=net,
        agents=agents,
        sites=sites,
        providers=providers,
        coefficients=coeffs,
        grid=grid,
        planner=planner,
        stages=stages,
        seed=r.num("seed", 0, kind=int),
        demand_range=(qa, qb),
        travel=travel,
    )


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioParseError(f"{path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return scenario_from_dict(data, base_dir=path.parent).validate()


def save_scenario(sc: Scenario, path):
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2, allow_nan=False) + "\n")


# --- StageResult CSV ------------------------------------------------------------

STAGE_COLUMNS = [
    "stage",
    "level",
    "delay_prob",
    "coverage",
    "newly_built_stations",
    "total_stations",
    "price",
    "expected_utility",
    "delay_se",
    "coverage_se",
    "runs",
    "placement",
    "site_ids",
    "converged",
]


def save_stage_result(result: StageResult, path, levels=None):
    """Write one row per provider, mirroring the per-level placement table."""
    levels = levels or list(range(1, len(result.policies) + 1))
    ids = " ".join(str(s) for s in result.site_ids)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STAGE_COLUMNS)
        q = result.qos
        for k, policy in enumerate(result.policies):
            w.writerow(
                [
                    result.label,
                    levels[k],
                    repr(q.delay[k]),
                    repr(q.coverage[k]),
                    " ".join(str(s) for s in result.new_sites[k]),
                    sum(policy),
                    repr(result.prices[k]),
                    repr(result.expected_utilities[k]),
                    repr(q.delay_se[k]),
                    repr(q.coverage_se[k]),
                    q.runs,
                    "".join(str(b) for b in policy),
                    ids,
                    int(result.converged),
                ]
            )


def load_stage_result(path) -> StageResult:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != STAGE_COLUMNS:
            raise ScenarioParseError(f"{path}: unexpected header {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        return StageResult("", (), (), (), QosEstimate((), (), 0), ())
    try:
        qos = QosEstimate(
            tuple(float(r["delay_prob"]) for r in rows),
            tuple(float(r["coverage"]) for r in rows),
            int(rows[0]["runs"]),
            tuple(float(r["delay_se"]) for r in rows),
            tuple(float(r["coverage_se"]) for r in rows),
        )
        return StageResult(
            label=rows[0]["stage"],
            policies=tuple(tuple(int(c) for c in r["placement"]) for r in rows),
            prices=tuple(float(r["price"]) for r in rows),
            expected_utilities=tuple(float(r["expected_utility"]) for r in rows),
            qos=qos,
            new_sites=tuple(tuple(int(s) for s in r["newly_built_stations"].split()) for r in rows),
            site_ids=tuple(int(s) for s in rows[0]["site_ids"].split()),
            converged=bool(int(rows[0]["converged"])),
        )
    except (KeyError, ValueError) as exc:
        raise ScenarioParseError(f"{path}: {exc}") from None


def stage_result_to_dict(result: StageResult) -> dict:
    d = asdict(result)
    d["station_counts"] = list(result.station_counts)
    return d
