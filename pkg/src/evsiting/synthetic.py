"""Synthetic desk-scale scenarios (a grid-street town on a small feeder)."""

from __future__ import annotations

import numpy as np

from ._validation import make_rng
from .cases import feeder5
from .choice import ChoiceCoefficients, EvAgent, ProviderConfig
from .road import RoadNetwork, Site
from .scenario import DestinationCategory, PlannerConfig, Scenario, StageConfig, TravelPattern


def grid_network(nx=5, ny=5, spacing_km=1.0):
    """Manhattan street grid; node ``r * nx + c`` sits at ``(c, r) * spacing``."""
    nodes = [(r * nx + c, c * spacing_km, r * spacing_km) for r in range(ny) for c in range(nx)]
    edges = []
    for r in range(ny):
        for c in range(nx):
            i = r * nx + c
            if c + 1 < nx:
                edges.append((i, i + 1, spacing_km))
            if r + 1 < ny:
                edges.append((i, i + nx, spacing_km))
    return RoadNetwork(tuple(nodes), tuple(edges))


def default_providers():
    # mean charging times follow the full-charge ranges of the three levels
    return (
        ProviderConfig(1, 17.0, 2),
        ProviderConfig(2, 5.5, 2),
        ProviderConfig(3, 0.5, 1),
    )


def default_coefficients():
    return ChoiceCoefficients(
        alpha=0.5,
        beta=-100.0,
        mu=(-0.3, -0.3, -0.3),
        eta=(0.6, 0.5, 0.3),
        gamma=(0.3, 0.2, 0.1),
        lam=(0.2, 0.3, 0.1),
        delta=(0.2, 0.1, 0.2),
        sigma=(0.7, 0.8, 0.9),
    )


def toy_scenario(
    seed=7,
    n_agents=60,
    site_nodes=(6, 12, 18),
    stage_counts=(50, 100, 150, 200),
    planner=None,
    demand_range=(5.0, 30.0),
):
    """Three candidate sites on a 5x5 km street grid, fed from a five-bus feeder.

    Incomes are in thousands of dollars per year, prices in $/kWh.
    """
    net = grid_network()
    rng = make_rng(seed, "toy-scenario")
    n_nodes = len(net.nodes)
    homes = rng.integers(0, n_nodes, size=n_agents)
    dests = rng.integers(0, n_nodes, size=n_agents)
    incomes = rng.uniform(40.0, 120.0, size=n_agents)
    demand = rng.uniform(*demand_range, size=n_agents)
    agents = tuple(
        EvAgent(i, int(h), int(d), round(float(inc), 3), round(float(q), 3))
        for i, (h, d, inc, q) in enumerate(zip(homes, dests, incomes, demand))
    )
    buses = (3, 4, 5, 3, 4, 5)
    amenity_cycle = ((1, 0, 0), (0, 1, 1), (1, 1, 0), (0, 0, 1), (1, 0, 1), (0, 1, 0))
    sites = tuple(
        Site(j + 1, int(node), buses[j % len(buses)], amenity_cycle[j % len(amenity_cycle)]) for j, node in enumerate(site_nodes)
    )
    planner = planner or PlannerConfig(
        w=100.0,
        delay_max=0.6,
        coverage_min=0.2,
        d_th_km=1.0,
        outside_good=True,
        theta_lower=5.0,
        theta_upper=60.0,
        monte_carlo_runs=2,
        horizon_h=24.0,
    )
    travel = TravelPattern(
        destinations=(
            DestinationCategory("work", (11, 12, 13, 17), 0.5),
            DestinationCategory("shopping", (6, 8, 16, 18), 0.3),
            DestinationCategory("other", tuple(range(n_nodes)), 0.2),
        ),
        departures=((420.0, 540.0, 0.5), (720.0, 840.0, 0.2), (1020.0, 1140.0, 0.3)),
        electric_range_km=8.0,
        speed_kmh=30.0,
    )
    return Scenario(
        network=net,
        agents=agents,
        sites=sites,
        providers=default_providers(),
        coefficients=default_coefficients(),
        grid=feeder5(),
        planner=planner,
        stages=tuple(StageConfig(c, f"stage {i + 1}") for i, c in enumerate(stage_counts)),
        seed=seed,
        demand_range=demand_range,
        travel=travel,
    )


def random_utility_table(rng, max_nests=3, max_sites=5, outside_good=False, scale=1.5):
    """Random single-agent nested-logit table for property tests."""
    from .choice import UtilityTable

    n_nests = int(rng.integers(1, max_nests + 1))
    sizes = rng.integers(1, max_sites + 1, size=n_nests)
    nest = np.repeat(np.arange(n_nests), sizes)
    U = rng.normal(0.0, scale, size=(1, nest.size))
    sigma = rng.uniform(0.2, 1.0, size=n_nests)
    slope = -rng.uniform(0.5, 2.0, size=1)
    return UtilityTable(U, nest, sigma, slope, outside_good)
