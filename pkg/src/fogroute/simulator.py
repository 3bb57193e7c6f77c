"""Mesoscopic link-speed traffic simulator with inflows, spillback and arrivals."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .network import FogPartition, RoadNetwork
from .routing import junction_distances_to, shortest_route

RV = "RV"
BV = "BV"
VEHICLE_CLASSES = (RV, BV)


class SimulationError(RuntimeError):
    pass


class ScenarioError(ValueError):
    pass


@dataclass(slots=True)
class Vehicle:
    id: str
    vclass: str
    route: tuple
    destination: str
    spawn_step: int = 0
    spawn_time: float = 0.0
    route_position: int = 0
    offset: float = 0.0
    speed: float = 0.0

    @property
    def current_road(self) -> str:
        return self.route[self.route_position]

    def reroute(self, roads):
        """Replace the remaining route; ``roads[0]`` must be the current road."""
        if roads[0] != self.current_road:
            raise SimulationError(
                f"vehicle {self.id}: new route starts at {roads[0]!r}, not {self.current_road!r}"
            )
        self.route = tuple(roads)
        self.route_position = 0


@dataclass(frozen=True)
class InflowSpec:
    entry_road: str
    vehicle_class: str
    rate: float  # veh/hr
    destination: str
    max_vehicles: int | None = None

    def __post_init__(self):
        if self.vehicle_class not in VEHICLE_CLASSES:
            raise ScenarioError(f"unknown vehicle class {self.vehicle_class!r}")
        if not self.rate >= 0:
            raise ScenarioError(f"inflow rate must be >= 0, got {self.rate}")
        if self.max_vehicles is not None and self.max_vehicles < 0:
            raise ScenarioError("max_vehicles must be >= 0")


@dataclass
class SimParams:
    tick_seconds: float = 1.0
    ticks_per_control_step: int = 60
    jam_density_per_lane: float = 0.15  # veh/m/lane
    speed_floor: float = 0.05  # fraction of the speed limit


@dataclass
class SimState:
    network: RoadNetwork
    params: SimParams
    clock: float = 0.0
    control_step: int = 0
    vehicles: dict = field(default_factory=dict)
    arrived: list = field(default_factory=list)  # (vehicle id, class, travel time)
    occupancy: np.ndarray = None
    spawned: Counter = field(default_factory=Counter)  # per vehicle class
    inflow_counts: list = field(default_factory=list)
    serial: int = 0

    def __post_init__(self):
        if self.occupancy is None:
            self.occupancy = np.zeros(len(self.network), dtype=int)
        net = self.network
        self.capacity = self.params.jam_density_per_lane * net.lanes * net.lengths

    @property
    def total_spawned(self) -> int:
        return sum(self.spawned.values())

    def is_jammed(self, road_index: int) -> bool:
        return self.occupancy[road_index] >= self.capacity[road_index]

    def recount_occupancy(self) -> np.ndarray:
        occ = np.zeros(len(self.network), dtype=int)
        idx = self.network.road_index
        for v in self.vehicles.values():
            occ[idx[v.current_road]] += 1
        return occ

    def vehicles_of_class(self, vclass):
        return [v for v in self.vehicles.values() if v.vclass == vclass]

    def snapshot(self):
        """Hashable summary of the full state, for determinism checks."""
        return (
            self.clock,
            self.control_step,
            tuple((v.id, v.route, v.route_position, v.offset, v.speed)
                  for v in self.vehicles.values()),
            tuple(self.arrived),
            tuple(self.occupancy.tolist()),
        )


def link_speeds(state: SimState) -> np.ndarray:
    """Greenshields link speed felt by a vehicle on each road.

    The density is that of the other vehicles on the road, so a lone vehicle
    drives at the speed limit.
    """
    net = state.network
    others = np.maximum(state.occupancy - 1, 0)
    ratio = others / state.capacity
    return net.speed_limits * np.maximum(state.params.speed_floor, 1.0 - ratio)


def step_tick(state: SimState, dt: float | None = None) -> SimState:
    dt = state.params.tick_seconds if dt is None else dt
    if not dt > 0:
        raise ValueError("tick length must be positive")
    net = state.network
    idx = net.road_index
    lengths = net.lengths.tolist()
    limits = net.speed_limits.tolist()
    speeds = link_speeds(state).tolist()
    occ = state.occupancy
    cap = state.capacity

    order = sorted(state.vehicles.values(), key=lambda v: (v.current_road, -v.offset))
    end_clock = state.clock + dt
    for v in order:
        r = idx[v.current_road]
        sp = speeds[r]
        new_offset = v.offset + sp * dt
        if new_offset < lengths[r]:
            v.offset = new_offset
            v.speed = sp
            continue
        if v.route_position == len(v.route) - 1:
            if net.roads[v.current_road].to_junction != v.destination:
                raise SimulationError(f"vehicle {v.id}: route exhausted before destination")
            occ[r] -= 1
            del state.vehicles[v.id]
            state.arrived.append((v.id, v.vclass, end_clock - v.spawn_time))
            continue
        nxt = idx[v.route[v.route_position + 1]]
        if occ[nxt] >= cap[nxt]:
            v.offset = lengths[r]
            v.speed = 0.0
            continue
        occ[r] -= 1
        occ[nxt] += 1
        v.route_position += 1
        v.offset = min(new_offset - lengths[r], lengths[nxt])
        v.speed = min(sp, limits[nxt])
    state.clock = end_clock
    return state


RouteFn = Callable[[SimState, "InflowSpec"], tuple]


def spawn(state: SimState, inflows, rng, route_fn: RouteFn | None = None,
          dt: float | None = None) -> SimState:
    """One Bernoulli spawn draw per inflow.

    Exactly one uniform is drawn per inflow per call regardless of caps or
    jams, so random streams stay aligned across policies.
    """
    dt = state.params.tick_seconds if dt is None else dt
    if len(state.inflow_counts) != len(inflows):
        state.inflow_counts = [0] * len(inflows)
    net = state.network
    route_fn = route_fn or distance_route
    for k, spec in enumerate(inflows):
        u = rng.random()
        p = min(1.0, spec.rate * dt / 3600.0)
        if u >= p:
            continue
        if spec.max_vehicles is not None and state.inflow_counts[k] >= spec.max_vehicles:
            continue
        entry = net.road_index[spec.entry_road]
        if state.is_jammed(entry):
            continue
        route = route_fn(state, spec)
        vid = f"{spec.vehicle_class}{state.serial:06d}"
        state.serial += 1
        state.vehicles[vid] = Vehicle(
            id=vid, vclass=spec.vehicle_class, route=tuple(route), destination=spec.destination,
            spawn_step=state.control_step, spawn_time=state.clock,
            speed=float(net.speed_limits[entry]),
        )
        state.occupancy[entry] += 1
        state.spawned[spec.vehicle_class] += 1
        state.inflow_counts[k] += 1
    return state


def distance_route(state: SimState, spec: InflowSpec) -> tuple:
    """Free-flow shortest-distance route (cached per network)."""
    net = state.network
    entry_road, destination = spec.entry_road, spec.destination
    cache = net.__dict__.setdefault("_distance_routes", {})
    key = (entry_road, destination)
    if key not in cache:
        found = shortest_route(net, net.lengths, entry_road, destination)
        if found is None:
            raise ScenarioError(f"destination {destination!r} unreachable from {entry_road!r}")
        cache[key] = found.roads
    return cache[key]


def run_control_step(state: SimState, inflows, rng, route_fn: RouteFn | None = None,
                     ticks: int | None = None) -> SimState:
    ticks = state.params.ticks_per_control_step if ticks is None else ticks
    if ticks < 1:
        raise ValueError("ticks_per_step must be >= 1")
    for _ in range(ticks):
        spawn(state, inflows, rng, route_fn)
        step_tick(state)
    state.control_step += 1
    return state


class VehicleView(NamedTuple):
    id: str
    vclass: str
    road: str
    offset: float
    speed: float


class RegionObservation(NamedTuple):
    vehicles: list
    occupancy: dict


def observe_region(state: SimState, partition: FogPartition, region: int) -> RegionObservation:
    if not 0 <= region < partition.n_regions:
        raise IndexError(f"region {region} out of range")
    vehicles = [
        VehicleView(v.id, v.vclass, v.current_road, v.offset, v.speed)
        for v in state.vehicles.values()
        if partition.region_of[v.current_road] == region
    ]
    idx = state.network.road_index
    occupancy = {r: int(state.occupancy[idx[r]]) for r in partition.region_roads[region]}
    return RegionObservation(vehicles, occupancy)


# -- scenario files ---------------------------------------------------------

_SCENARIO_KEYS = {
    "inflows", "tick_seconds", "ticks_per_control_step", "max_control_steps",
    "jam_density_per_lane", "seed", "tau", "reward_weights", "speed_floor",
}
_INFLOW_KEYS = {"entry_road", "class", "rate_vph", "destination", "max_vehicles"}
_REWARD_KEYS = {"base", "bonus", "penalty"}


@dataclass
class Scenario:
    inflows: list
    tick_seconds: float = 1.0
    ticks_per_control_step: int = 60
    max_control_steps: int = 10
    jam_density_per_lane: float = 0.15
    speed_floor: float = 0.05
    seed: int = 0
    tau: float = 100.0
    reward_weights: dict = field(
        default_factory=lambda: {"base": 10.0, "bonus": 50.0, "penalty": 50.0}
    )

    @property
    def sim_params(self) -> SimParams:
        return SimParams(self.tick_seconds, self.ticks_per_control_step,
                         self.jam_density_per_lane, self.speed_floor)

    def to_dict(self) -> dict:
        return {
            "inflows": [
                {"entry_road": f.entry_road, "class": f.vehicle_class, "rate_vph": f.rate,
                 "destination": f.destination,
                 **({"max_vehicles": f.max_vehicles} if f.max_vehicles is not None else {})}
                for f in self.inflows
            ],
            "tick_seconds": self.tick_seconds,
            "ticks_per_control_step": self.ticks_per_control_step,
            "max_control_steps": self.max_control_steps,
            "jam_density_per_lane": self.jam_density_per_lane,
            "speed_floor": self.speed_floor,
            "seed": self.seed,
            "tau": self.tau,
            "reward_weights": dict(self.reward_weights),
        }

    def validate(self, network: RoadNetwork):
        if not self.tick_seconds > 0:
            raise ScenarioError("tick_seconds must be > 0")
        if self.ticks_per_control_step < 1 or self.max_control_steps < 1:
            raise ScenarioError("ticks_per_control_step and max_control_steps must be >= 1")
        if not self.jam_density_per_lane > 0:
            raise ScenarioError("jam_density_per_lane must be > 0")
        if not self.tau > 0:
            raise ScenarioError("tau must be > 0")
        for spec in self.inflows:
            if spec.entry_road not in network.roads:
                raise ScenarioError(f"inflow entry road {spec.entry_road!r} does not exist")
            if spec.destination not in network.junctions:
                raise ScenarioError(f"inflow destination {spec.destination!r} does not exist")
            head = network.roads[spec.entry_road].to_junction
            if head not in junction_distances_to(network, spec.destination):
                raise ScenarioError(
                    f"destination {spec.destination!r} unreachable from {spec.entry_road!r}"
                )
        return self


def parse_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    extra = set(doc) - _SCENARIO_KEYS
    if extra:
        raise ScenarioError(f"unknown scenario key(s) {sorted(extra)}")
    inflows = []
    for i, item in enumerate(doc.get("inflows", [])):
        extra = set(item) - _INFLOW_KEYS
        missing = (_INFLOW_KEYS - {"max_vehicles"}) - set(item)
        if extra or missing:
            raise ScenarioError(f"inflows[{i}]: unknown {sorted(extra)} / missing {sorted(missing)}")
        inflows.append(InflowSpec(item["entry_road"], item["class"], float(item["rate_vph"]),
                                  item["destination"], item.get("max_vehicles")))
    kwargs = {k: doc[k] for k in _SCENARIO_KEYS - {"inflows", "reward_weights"} if k in doc}
    sc = Scenario(inflows=inflows, **kwargs)
    if "reward_weights" in doc:
        rw = doc["reward_weights"]
        if not isinstance(rw, dict) or set(rw) - _REWARD_KEYS:
            raise ScenarioError(f"reward_weights accepts keys {sorted(_REWARD_KEYS)}")
        sc.reward_weights.update({k: float(v) for k, v in rw.items()})
    return sc


def read_scenario_file(path) -> Scenario:
    with open(path) as fh:
        return parse_scenario(fh.read())
