"""Built-in desk-scale network and scenario (4x4 grid, two fog regions).

Row 1 is a three-lane arterial in both directions; every other street is a
slow single-lane local road. RVs travel the length of the arterial, which
background traffic also loads, so purely count-based routing tends to push
them onto the emptier but slower side streets.
"""

from __future__ import annotations

from .network import Road, RoadNetwork, build_fog_partition, generate_grid
from .simulator import BV, RV, InflowSpec, Scenario

ROWS = COLS = 4
ROAD_LENGTH = 300.0
ARTERIAL_ROW = 1
LOCAL = {"lane_count": 1, "speed_limit": 6.0}
ARTERIAL = {"lane_count": 3, "speed_limit": 25.0}

# (entry road, destination) pairs
RV_ODS = [("J1_0>J1_1", "J1_3"), ("J1_3>J1_2", "J1_0")]
BV_ODS = [
    ("J1_0>J1_1", "J1_3"),
    ("J1_3>J1_2", "J1_0"),
    ("J0_0>J0_1", "J3_3"),
    ("J3_0>J3_1", "J0_3"),
]


def _junction_row(j):
    return int(j[1:].split("_")[0])


def desk_network():
    """Bidirectional 4x4 grid with one east-west arterial.

    Region 0 holds every road leaving a junction in rows 0-1, region 1 the rest.
    """
    base = generate_grid(ROWS, COLS, ROAD_LENGTH, 1, LOCAL["speed_limit"], bidirectional=True)
    roads = []
    for r in base.roads.values():
        row_a, row_b = _junction_row(r.from_junction), _junction_row(r.to_junction)
        kind = ARTERIAL if row_a == row_b == ARTERIAL_ROW else LOCAL
        roads.append(Road(r.id, r.from_junction, r.to_junction, ROAD_LENGTH, **kind))
    network = RoadNetwork(base.junctions, roads)
    assignment = {r.id: 0 if _junction_row(r.from_junction) <= 1 else 1
                  for r in network.roads.values()}
    return network, build_fog_partition(network, assignment)


def desk_scenario(total_vehicles=100, rerouting_ratio=0.5, spawn_seconds=300.0, seed=0,
                  max_control_steps=10, ticks_per_control_step=60):
    """Inflows sized so each class's quota is expected within ``spawn_seconds``.

    ``rerouting_ratio`` is the RV share of ``total_vehicles``.
    """
    if not 0.0 < rerouting_ratio <= 1.0:
        raise ValueError("rerouting_ratio must be in (0, 1]")
    n_rv = round(total_vehicles * rerouting_ratio)
    n_bv = total_vehicles - n_rv
    inflows = []
    for ods, n, cls in ((RV_ODS, n_rv, RV), (BV_ODS, n_bv, BV)):
        shares = [n // len(ods) + (1 if k < n % len(ods) else 0) for k in range(len(ods))]
        for (entry, dest), quota in zip(ods, shares):
            if quota == 0:
                continue
            rate = quota * 3600.0 / spawn_seconds
            inflows.append(InflowSpec(entry, cls, rate, dest, quota))
    return Scenario(inflows=inflows, max_control_steps=max_control_steps,
                    ticks_per_control_step=ticks_per_control_step, seed=seed)
