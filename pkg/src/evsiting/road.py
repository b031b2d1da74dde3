"""Road graph, Dijkstra routing and route-derived quantities."""

from __future__ import annotations

import heapq
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError

# relative slack when testing whether an edge lies on a shortest path
_PATH_RTOL = 1e-12


class NoPathError(ValueError):
    """Raised when the destination cannot be reached from the origin."""


@dataclass(frozen=True)
class Route:
    node_sequence: tuple
    length: float

    def __len__(self):
        return len(self.node_sequence)


@dataclass(frozen=True)
class Site:
    """A candidate charging location.

    ``amenities`` is the (restaurant, shopping centre, supermarket) indicator
    triple. ``owner`` restricts the site to one provider when set; ``None``
    means every provider may build there.
    """

    id: int
    road_node: int
    bus: int
    amenities: tuple = (0, 0, 0)
    owner: int | None = None


@dataclass(frozen=True)
class RoadNetwork:
    """Undirected weighted road graph.

    ``nodes`` holds ``(id, x_km, y_km)`` triples, ``edges`` holds
    ``(u, v, length_km)`` triples. Single-source distance tables are cached
    on first use; the cache is not part of equality.
    """

    nodes: tuple
    edges: tuple
    _adj: dict = field(default=None, init=False, repr=False, compare=False)
    _dist_cache: dict = field(default=None, init=False, repr=False, compare=False)
    _lock: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple((int(i), float(x), float(y)) for i, x, y in self.nodes))
        object.__setattr__(self, "edges", tuple((int(u), int(v), float(w)) for u, v, w in self.edges))
        problems = self.problems()
        if problems:
            raise ValidationError(problems)
        adj = {n[0]: [] for n in self.nodes}
        for u, v, w in self.edges:
            adj[u].append((v, w))
            adj[v].append((u, w))
        for nbrs in adj.values():
            nbrs.sort()
        object.__setattr__(self, "_adj", adj)
        object.__setattr__(self, "_dist_cache", {})
        object.__setattr__(self, "_lock", threading.Lock())

    def problems(self):
        out = []
        ids = [n[0] for n in self.nodes]
        if len(set(ids)) != len(ids):
            out.append("road node ids are not unique")
        known = set(ids)
        for u, v, w in self.edges:
            if u not in known or v not in known:
                out.append(f"edge ({u}, {v}) references an unknown node")
            if not w > 0:
                out.append(f"edge ({u}, {v}) has non-positive length {w}")
        return out

    @property
    def node_ids(self):
        return [n[0] for n in self.nodes]

    def has_node(self, node):
        return node in self._adj

    def coords(self, node):
        for i, x, y in self.nodes:
            if i == node:
                return x, y
        raise KeyError(node)

    def neighbors(self, node):
        return self._adj[node]

    def edge_length(self, u, v):
        best = math.inf
        for w_node, w in self._adj[u]:
            if w_node == v:
                best = min(best, w)
        return best

    def distances_from(self, source):
        """Shortest-path distance from ``source`` to every node (inf if unreachable)."""
        if source not in self._adj:
            raise KeyError(f"unknown road node {source}")
        cached = self._dist_cache.get(source)
        if cached is not None:
            return cached
        dist = {n: math.inf for n in self._adj}
        dist[source] = 0.0
        heap = [(0.0, source)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for v, w in self._adj[u]:
                nd = d + w
                if nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        with self._lock:
            self._dist_cache.setdefault(source, dist)
        return dist

    def distance(self, a, b):
        return self.distances_from(a)[b]

    def distance_matrix(self, sources, targets):
        """Array ``D[i, j]`` of distances from ``sources[i]`` to ``targets[j]``."""
        return np.array([[self.distances_from(s)[t] for t in targets] for s in sources], dtype=float)


def shortest_path(net: RoadNetwork, origin, dest) -> Route:
    """Minimum-length route; among equal-length routes the lexicographically
    smallest node sequence wins."""
    for n in (origin, dest):
        if not net.has_node(n):
            raise KeyError(f"unknown road node {n}")
    from_origin = net.distances_from(origin)
    total = from_origin[dest]
    if math.isinf(total):
        raise NoPathError(f"no path from {origin} to {dest}")
    to_dest = net.distances_from(dest)
    tol = _PATH_RTOL * max(1.0, total)
    seq = [origin]
    u = origin
    while u != dest:
        # neighbours are sorted by id, so the first on-path one is the smallest
        for v, w in net.neighbors(u):
            if v in seq:
                continue
            if abs(from_origin[u] + w + to_dest[v] - total) <= tol and to_dest[v] < to_dest[u]:
                seq.append(v)
                u = v
                break
        else:  # pragma: no cover - unreachable on a consistent distance table
            raise NoPathError(f"route reconstruction failed between {origin} and {dest}")
    length = sum(net.edge_length(a, b) for a, b in zip(seq, seq[1:]))
    return Route(tuple(seq), float(length))


def deviating_distance(net: RoadNetwork, origin, dest, site: Site) -> float:
    """Extra km driven when detouring through ``site`` on the way from
    ``origin`` to ``dest``."""
    via = net.distance(origin, site.road_node) + net.distance(site.road_node, dest)
    direct = net.distance(origin, dest)
    if math.isinf(via) or math.isinf(direct):
        raise NoPathError(f"site {site.id} is not reachable on the trip {origin}->{dest}")
    return max(0.0, via - direct)


def destination_indicator(net: RoadNetwork, dest, site: Site, d_th: float) -> int:
    return int(net.distance(site.road_node, dest) <= d_th)


def route_coverage_count(net: RoadNetwork, route: Route, sites, d_th: float) -> int:
    """Number of ``sites`` within ``d_th`` km (network distance) of some route node."""
    count = 0
    for site in sites:
        dist = net.distances_from(site.road_node)
        if min(dist[n] for n in route.node_sequence) <= d_th:
            count += 1
    return count
