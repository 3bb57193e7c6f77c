"""Fog-region node features and the shared speed-based reward."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import FogPartition, RoadNetwork
from .simulator import RV, SimState

PENALTY_THRESHOLD = 5.0  # m/s
DEFAULT_REWARD_WEIGHTS = {"base": 10.0, "bonus": 50.0, "penalty": 50.0}


def node_features(state: SimState, partition: FogPartition, network: RoadNetwork | None = None,
                  tau=100.0) -> np.ndarray:
    """N x 2 matrix of (mean vehicle speed, congestion level) per fog region.

    Regions without vehicles report the mean speed limit of their roads.
    """
    if not tau > 0:
        raise ValueError("tau must be > 0")
    network = state.network if network is None else network
    n = partition.n_regions
    regions = partition.region_array(network)
    idx = network.road_index

    speed_sum = np.zeros(n)
    count = np.zeros(n)
    for v in state.vehicles.values():
        i = regions[idx[v.current_road]]
        speed_sum[i] += v.speed
        count[i] += 1

    limit_mean = np.bincount(regions, weights=network.speed_limits, minlength=n) / np.bincount(
        regions, minlength=n
    )
    mean_speed = np.where(count > 0, speed_sum / np.maximum(count, 1), limit_mean)

    per_road = state.occupancy * tau / (network.lanes * network.lengths)
    congestion = np.bincount(regions, weights=per_road, minlength=n) / np.bincount(
        regions, minlength=n
    )
    return np.column_stack([mean_speed, congestion]).astype(float)


@dataclass(frozen=True)
class RewardRecord:
    r_t: float
    mean_rv_speed: float
    delta_speed: float


def reward_from_speeds(mean_speed, delta, weights=None) -> float:
    w = DEFAULT_REWARD_WEIGHTS if weights is None else {**DEFAULT_REWARD_WEIGHTS, **weights}
    r = w["base"] * mean_speed
    if delta > 0:
        r += w["bonus"]
    if delta <= -PENALTY_THRESHOLD:
        r -= w["penalty"]
    return float(r)


def mean_rv_speed(state: SimState) -> float:
    speeds = [v.speed for v in state.vehicles.values() if v.vclass == RV]
    return float(np.mean(speeds)) if speeds else 0.0


def reward(prev_mean_rv_speed: float, state: SimState, weights=None) -> RewardRecord:
    if prev_mean_rv_speed < 0:
        raise ValueError("previous mean speed must be >= 0")
    v = mean_rv_speed(state)
    delta = v - prev_mean_rv_speed
    return RewardRecord(reward_from_speeds(v, delta, weights), v, delta)
