import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogroute.network import Road, RoadNetwork, build_fog_partition, generate_grid
from fogroute.simulator import BV, RV, SimParams, SimState, Vehicle
from fogroute.state import node_features, reward, reward_from_speeds


def _state_with(net, placements):
    state = SimState(net, SimParams())
    for k, (road, speed, vclass) in enumerate(placements):
        v = Vehicle(f"v{k}", vclass, (road,), net.roads[road].to_junction, speed=speed)
        state.vehicles[v.id] = v
        state.occupancy[net.road_index[road]] += 1
    return state


def test_empty_region_uses_mean_limit():
    net = RoadNetwork(["a", "b", "c"], [Road("x", "a", "b", 100.0, 1, 10.0),
                                        Road("y", "b", "c", 100.0, 1, 20.0)])
    part = build_fog_partition(net, {"x": 0, "y": 0})
    X = node_features(SimState(net, SimParams()), part, net, tau=100.0)
    assert X.tolist() == [[15.0, 0.0]]


def test_hand_computed_features():
    net = RoadNetwork(["a", "b"], [Road("x", "a", "b", 100.0, 1, 15.0)])
    part = build_fog_partition(net, {"x": 0})
    state = _state_with(net, [("x", 5.0, RV), ("x", 15.0, BV)])
    X = node_features(state, part, net, tau=100.0)
    assert X.tolist() == [[10.0, 2.0]]


def test_tau_must_be_positive(two_region_line):
    net, part = two_region_line
    with pytest.raises(ValueError):
        node_features(SimState(net, SimParams()), part, net, tau=0.0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
@settings(max_examples=200, deadline=None)
def test_features_finite_and_shaped(seed, n_regions):
    rng = np.random.default_rng(seed)
    net = generate_grid(3, 3)
    labels = np.concatenate([np.arange(n_regions), rng.integers(0, n_regions, len(net) - n_regions)])
    part = build_fog_partition(net, dict(zip(net.road_ids, labels.tolist())))
    n_veh = int(rng.integers(0, 30))
    roads = rng.choice(net.road_ids, size=n_veh)
    state = _state_with(net, [(r, float(rng.uniform(0, 15)), RV) for r in roads])
    X = node_features(state, part, net)
    assert X.shape == (n_regions, 2)
    assert np.all(np.isfinite(X)) and np.all(X >= 0)
    # every vehicle is counted in exactly one region
    regions = part.region_array(net)
    per_region = np.bincount(regions[[net.road_index[r] for r in roads]], minlength=n_regions)
    assert per_region.sum() == len(state.vehicles)


@pytest.mark.parametrize("v, delta, expected", [
    (10.0, 1.0, 150.0),
    (10.0, -5.0, 50.0),
    (0.0, 0.0, 0.0),
    (10.0, -4.999999, 100.0),
])
def test_reward_cases(v, delta, expected):
    assert reward_from_speeds(v, delta) == expected


def test_reward_over_state():
    net = RoadNetwork(["a", "b"], [Road("x", "a", "b", 100.0)])
    state = _state_with(net, [("x", 8.0, RV), ("x", 12.0, RV), ("x", 1.0, BV)])
    rec = reward(4.0, state)
    assert rec.mean_rv_speed == 10.0 and rec.delta_speed == 6.0
    assert rec.r_t == 150.0
    empty = reward(0.0, SimState(net, SimParams()))
    assert (empty.r_t, empty.mean_rv_speed) == (0.0, 0.0)


def test_reward_weights_override():
    assert reward_from_speeds(2.0, 1.0, {"base": 1.0, "bonus": 3.0}) == 5.0


@given(st.floats(0, 40), st.floats(0, 40), st.floats(-20, 20).filter(lambda d: d != 0))
def test_reward_monotone_in_speed(v1, v2, delta):
    lo, hi = sorted((v1, v2))
    assert reward_from_speeds(lo, delta) <= reward_from_speeds(hi, delta)
    if hi - lo > 1e-9:
        assert reward_from_speeds(lo, delta) < reward_from_speeds(hi, delta)


def test_reward_rejects_negative_previous(two_region_line):
    net, _ = two_region_line
    with pytest.raises(ValueError):
        reward(-1.0, SimState(net, SimParams()))
