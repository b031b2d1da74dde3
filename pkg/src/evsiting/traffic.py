"""Monte-Carlo trip simulation, station queueing and QoS estimation."""

from __future__ import annotations

import heapq
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import derive_seed
from .choice import ChoiceFeatures, choice_probabilities
from .results import QosEstimate
from .road import Route, shortest_path


@dataclass(frozen=True)
class TripSample:
    agent_id: int
    departure_min: float
    origin: int
    destination: int
    route: Route
    needs_charge: bool
    income: float
    demand_kwh: float


@dataclass(frozen=True)
class ServiceOutcome:
    agent_id: int
    provider: int
    site: int  # index into scenario.sites
    arrival_min: float
    delayed: bool


def sample_trips(scenario, ev_count, rng, population=None):
    """One trip per EV for a simulated day."""
    if ev_count == 0:
        return []
    agents = population if population is not None else scenario.stage_population(ev_count)
    agents = agents[:ev_count]
    travel = scenario.travel
    net = scenario.network
    cats = travel.destinations
    cat_w = np.array([c.weight for c in cats], float)
    bins = np.array(travel.departures, float)
    bin_w = bins[:, 2] / bins[:, 2].sum()
    n = len(agents)
    # draw every random number up front so the stream does not depend on routing
    cat_idx = rng.choice(len(cats), size=n, p=cat_w / cat_w.sum()) if cats else np.zeros(n, int)
    node_u = rng.random(n)
    bin_idx = rng.choice(len(bins), size=n, p=bin_w)
    time_u = rng.random(n)
    charge_u = rng.random(n)
    trips = []
    for i, a in enumerate(agents):
        if cats:
            nodes = cats[cat_idx[i]].nodes
            dest = nodes[min(int(node_u[i] * len(nodes)), len(nodes) - 1)]
        else:
            dest = a.destination
        lo, hi, _ = bins[bin_idx[i]]
        depart = lo + (hi - lo) * time_u[i]
        route = shortest_path(net, a.home, dest)
        p_charge = min(1.0, route.length / travel.electric_range_km)
        trips.append(TripSample(a.id, float(depart), a.home, dest, route, bool(charge_u[i] < p_charge), a.income, a.demand_kwh))
    return trips


def _queue_delays(arrivals, servers):
    """FIFO multi-server queue. ``arrivals`` is a list of
    ``(time, agent_id, service_min)``; returns the delayed flag for each in
    processing order (time, then agent id)."""
    order = sorted(range(len(arrivals)), key=lambda i: (arrivals[i][0], arrivals[i][1]))
    delayed = [False] * len(arrivals)
    if math.isinf(servers):
        return delayed
    free_at = [-math.inf] * int(servers)
    heapq.heapify(free_at)
    for i in order:
        t, _, dur = arrivals[i]
        earliest = heapq.heappop(free_at)
        if earliest > t:
            delayed[i] = True
        heapq.heappush(free_at, max(t, earliest) + dur)
    return delayed


def _charging_features(scenario, trips):
    charging = [i for i, t in enumerate(trips) if t.needs_charge]
    sub = [trips[i] for i in charging]
    feats = ChoiceFeatures.build(
        scenario.coefficients,
        scenario.sites,
        [t.origin for t in sub],
        [t.destination for t in sub],
        [t.income for t in sub],
        [t.demand_kwh for t in sub],
        scenario.network,
        scenario.planner.d_th_km,
    )
    return charging, feats


def simulate_service(trips, placement, prices, scenario, rng, outside_good=None, *, _uniforms=None, _features=None):
    """Route charging EVs to stations by sampling the choice model, then queue them.

    An attempt is delayed when every plug at the chosen station is busy at
    the arrival instant; delayed EVs wait their turn (no reneging).
    """
    placement = np.asarray(placement, dtype=bool)
    uniforms = rng.random(len(trips)) if _uniforms is None else _uniforms
    charging, feats = _charging_features(scenario, trips) if _features is None else _features
    if not charging or not placement.any():
        return []
    og = scenario.planner.outside_good if outside_good is None else outside_good
    table, alts = feats.table(scenario.coefficients, scenario.providers, placement, prices, og)
    probs, _ = choice_probabilities(table)
    cum = np.cumsum(probs, axis=1)
    speed = scenario.travel.speed_kmh
    net = scenario.network
    by_station = {}
    for row, i in enumerate(charging):
        t = trips[i]
        a = int(np.searchsorted(cum[row], uniforms[i], side="right"))
        if a >= len(alts):
            continue  # charges at home
        k, j = alts[a]
        site = scenario.sites[j]
        arrival = t.departure_min + net.distance(t.origin, site.road_node) / speed * 60.0
        service = t.demand_kwh / scenario.providers[k].power_kw * 60.0
        by_station.setdefault((k, j), []).append((arrival, t.agent_id, service))
    outcomes = []
    for (k, j), arrivals in sorted(by_station.items()):
        flags = _queue_delays(arrivals, scenario.providers[k].plugs_per_station)
        for (arr, aid, _), flag in zip(arrivals, flags):
            outcomes.append(ServiceOutcome(aid, k, j, arr, flag))
    return outcomes


def route_near_sites(scenario, trips):
    """(n_trips, L) flags: candidate site within the distance threshold of the route."""
    net = scenario.network
    d_th = scenario.planner.d_th_km
    near = np.zeros((len(trips), len(scenario.sites)), dtype=bool)
    for j, site in enumerate(scenario.sites):
        dist = net.distances_from(site.road_node)
        for i, t in enumerate(trips):
            near[i, j] = min(dist[n] for n in t.route.node_sequence) <= d_th
    return near


def coverage_counts(scenario, trips, placement, near=None):
    """(n_trips, K) number of each provider's built stations near each route."""
    placement = np.asarray(placement, dtype=bool)
    near = route_near_sites(scenario, trips) if near is None else near
    return near.astype(int) @ placement.T.astype(int)


@dataclass
class _RunDraw:
    """Placement-independent part of one Monte-Carlo run."""

    trips: list
    uniforms: np.ndarray
    features: tuple
    near: np.ndarray


def _draw_run(scenario, ev_count, population, seed):
    rng = np.random.default_rng(seed)
    trips = sample_trips(scenario, ev_count, rng, population)
    uniforms = rng.random(len(trips))
    return _RunDraw(trips, uniforms, _charging_features(scenario, trips), route_near_sites(scenario, trips))


def _evaluate_run(scenario, draw, placement, prices, outside_good):
    K = placement.shape[0]
    outcomes = simulate_service(
        draw.trips, placement, prices, scenario, None, outside_good, _uniforms=draw.uniforms, _features=draw.features
    )
    attempts = {}
    for o in outcomes:
        n, d = attempts.get((o.agent_id, o.provider), (0, 0))
        attempts[(o.agent_id, o.provider)] = (n + 1, d + int(o.delayed))
    delay = np.zeros(K)
    for k in range(K):
        ratios = [d / n for (_, kk), (n, d) in attempts.items() if kk == k]
        delay[k] = float(np.mean(ratios)) if ratios else 0.0
    cov = coverage_counts(scenario, draw.trips, placement, draw.near)
    coverage = cov.mean(axis=0) if len(draw.trips) else np.zeros(K)
    return delay, coverage


def estimate_qos(
    scenario, placement, prices, runs, seed, *, ev_count=None, population=None, threads=1, outside_good=None, cache=None
):
    """Average delay probability and route coverage per provider.

    Run ``r`` draws its trips from a sub-seed of ``(seed, r)`` only, so every
    placement sees the same trips (common random numbers). Runs are reduced
    in index order; ``threads`` never changes the result. ``cache`` may be a
    dict reused across calls with the same seed and population.
    """
    placement = np.asarray(placement, dtype=bool)
    if population is None:
        ev_count = scenario.stages[0].ev_count if ev_count is None else ev_count
        population = scenario.stage_population(ev_count)
    ev_count = len(population) if ev_count is None else ev_count
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2**63))
    cache = {} if cache is None else cache
    prices = np.asarray(prices, dtype=float)

    def run(r):
        ck = (seed, ev_count, r)
        draw = cache.get(ck)
        if draw is None:
            draw = cache.setdefault(ck, _draw_run(scenario, ev_count, population, derive_seed(seed, "qos-run", r)))
        return _evaluate_run(scenario, draw, placement, prices, outside_good)

    if threads > 1 and runs > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(runs)))
    else:
        results = [run(r) for r in range(runs)]
    delays = np.array([r[0] for r in results])
    covs = np.array([r[1] for r in results])

    def se(x):
        return x.std(axis=0, ddof=1) / math.sqrt(runs) if runs > 1 else np.zeros(x.shape[1])

    return QosEstimate(tuple(delays.mean(axis=0)), tuple(covs.mean(axis=0)), runs, tuple(se(delays)), tuple(se(covs)))


def traffic_heatmap(trips, network, bbox=None, resolution=20):
    """Count route-node visits per grid cell.

    ``bbox`` is ``(xmin, ymin, xmax, ymax)`` in km (defaults to the network
    extent); ``resolution`` is cells per side or an ``(nx, ny)`` pair.
    Returns an ``(ny, nx)`` integer matrix, row 0 at ``ymin``.
    """
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    if nx < 1 or ny < 1:
        raise ValueError("resolution must be >= 1")
    if bbox is None:
        xs = [n[1] for n in network.nodes]
        ys = [n[2] for n in network.nodes]
        bbox = (min(xs), min(ys), max(xs), max(ys))
    xmin, ymin, xmax, ymax = bbox
    width = (xmax - xmin) or 1.0
    height = (ymax - ymin) or 1.0
    coords = {n[0]: (n[1], n[2]) for n in network.nodes}
    grid = np.zeros((ny, nx), dtype=np.int64)
    for t in trips:
        for node in t.route.node_sequence:
            x, y = coords[node]
            if not (xmin <= x <= xmax and ymin <= y <= ymax):
                continue
            cx = min(int((x - xmin) / width * nx), nx - 1)
            cy = min(int((y - ymin) / height * ny), ny - 1)
            grid[cy, cx] += 1
    return grid


def write_heatmap_csv(grid, path):
    np.savetxt(path, np.asarray(grid), fmt="%d", delimiter=",")


def write_heatmap_pgm(grid, path):
    """8-bit binary PGM, brightest cell = highest count, north up."""
    g = np.asarray(grid, dtype=float)[::-1]
    peak = g.max() if g.size else 0.0
    img = np.zeros_like(g, dtype=np.uint8) if peak <= 0 else np.round(g / peak * 255).astype(np.uint8)
    h, w = img.shape
    with open(Path(path), "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(img.tobytes())
