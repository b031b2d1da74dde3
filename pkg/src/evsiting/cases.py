"""Bundled grid cases used by the toy scenario and the test-suite."""

from __future__ import annotations

import numpy as np

from .grid import PQ, SLACK, Branch, Bus, Generator, GridCase, from_matpower


def two_bus_case(p_load=0.5, q_load=0.2, r=0.01, x=0.1, lmp=(0.08, 0.10)):
    """Slack at 1.0 pu feeding one PQ load through a single line."""
    return GridCase(
        buses=[Bus(1, SLACK, lmp=lmp[0], vm=1.0), Bus(2, PQ, p_load, q_load, lmp=lmp[1])],
        branches=[Branch(1, 2, r, x)],
        generators=[Generator(1, 0.0, 0.0, 1.0)],
        base_mva=100.0,
    )


# WSCC 9-bus, 3-machine system in MATPOWER column layout
_CASE9_BUS = np.array(
    [
        [1, 3, 0, 0, 0, 0, 1, 1, 0, 16.5, 1, 1.1, 0.9],
        [2, 2, 0, 0, 0, 0, 1, 1, 0, 18, 1, 1.1, 0.9],
        [3, 2, 0, 0, 0, 0, 1, 1, 0, 13.8, 1, 1.1, 0.9],
        [4, 1, 0, 0, 0, 0, 1, 1, 0, 230, 1, 1.1, 0.9],
        [5, 1, 125, 50, 0, 0, 1, 1, 0, 230, 1, 1.1, 0.9],
        [6, 1, 90, 30, 0, 0, 1, 1, 0, 230, 1, 1.1, 0.9],
        [7, 1, 0, 0, 0, 0, 1, 1, 0, 230, 1, 1.1, 0.9],
        [8, 1, 100, 35, 0, 0, 1, 1, 0, 230, 1, 1.1, 0.9],
        [9, 1, 0, 0, 0, 0, 1, 1, 0, 230, 1, 1.1, 0.9],
    ],
    dtype=float,
)
_CASE9_GEN = np.array(
    [
        [1, 0, 0, 300, -300, 1.04, 100, 1, 250, 10],
        [2, 163, 0, 300, -300, 1.025, 100, 1, 300, 10],
        [3, 85, 0, 300, -300, 1.025, 100, 1, 270, 10],
    ],
    dtype=float,
)
_CASE9_BRANCH = np.array(
    [
        [1, 4, 0, 0.0576, 0, 250, 250, 250, 0, 0, 1],
        [4, 6, 0.017, 0.092, 0.158, 250, 250, 250, 0, 0, 1],
        [6, 9, 0.039, 0.17, 0.358, 150, 150, 150, 0, 0, 1],
        [3, 9, 0, 0.0586, 0, 300, 300, 300, 0, 0, 1],
        [8, 9, 0.0119, 0.1008, 0.209, 150, 150, 150, 0, 0, 1],
        [7, 8, 0.0085, 0.072, 0.149, 250, 250, 250, 0, 0, 1],
        [7, 2, 0, 0.0625, 0, 250, 250, 250, 0, 0, 1],
        [5, 7, 0.032, 0.161, 0.306, 250, 250, 250, 0, 0, 1],
        [4, 5, 0.01, 0.085, 0.176, 250, 250, 250, 0, 0, 1],
    ],
    dtype=float,
)
# illustrative wholesale prices, $/kWh
CASE9_LMP = {1: 0.080, 2: 0.082, 3: 0.081, 4: 0.085, 5: 0.095, 6: 0.090, 7: 0.088, 8: 0.093, 9: 0.087}


def case9():
    return from_matpower(_CASE9_BUS, _CASE9_GEN, _CASE9_BRANCH, 100.0, CASE9_LMP)


def feeder5(base_mva=0.1):
    """Five-bus radial/meshed distribution feeder for the toy scenario.

    Bus 1 is the substation (slack); a small generator at bus 2 holds its
    voltage; buses 3-5 host household load and the candidate stations.
    """
    from .grid import PV

    return GridCase(
        buses=[
            Bus(1, SLACK, 0.0, 0.0, 0.10, 1.02),
            Bus(2, PV, 0.2, 0.05, 0.11, 1.01),
            Bus(3, PQ, 0.5, 0.15, 0.12),
            Bus(4, PQ, 0.4, 0.12, 0.13),
            Bus(5, PQ, 0.6, 0.2, 0.14),
        ],
        branches=[
            Branch(1, 2, 0.01, 0.05, 0.0),
            Branch(1, 3, 0.02, 0.08, 0.0),
            Branch(2, 4, 0.02, 0.07, 0.0),
            Branch(3, 4, 0.03, 0.09, 0.0),
            Branch(4, 5, 0.02, 0.06, 0.0),
        ],
        generators=[Generator(1, 0.0, 0.0, 0.6), Generator(2, 0.5, 0.0, 0.4)],
        base_mva=base_mva,
    )
