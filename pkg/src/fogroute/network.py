"""Road graph, fog-region partition and network file I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


class NetworkError(ValueError):
    """Raised when a network file or partition violates an invariant."""


@dataclass(frozen=True)
class Road:
    id: str
    from_junction: str
    to_junction: str
    length: float
    lane_count: int = 1
    speed_limit: float = 15.0

    def __post_init__(self):
        if not self.length > 0:
            raise NetworkError(f"road {self.id!r}: nonpositive length {self.length}")
        if int(self.lane_count) != self.lane_count or self.lane_count < 1:
            raise NetworkError(f"road {self.id!r}: lane_count must be an integer >= 1")
        if not self.speed_limit > 0:
            raise NetworkError(f"road {self.id!r}: nonpositive speed_limit {self.speed_limit}")


class RoadNetwork:
    """Directed road graph. Roads are edges between junctions.

    Immutable after construction. Road order follows insertion order and is
    used as the canonical road index (``road_index``) by array-based code.
    """

    def __init__(self, junctions, roads):
        self.junctions = tuple(junctions)
        if len(set(self.junctions)) != len(self.junctions):
            raise NetworkError("duplicate junction id")
        junction_set = set(self.junctions)
        self.roads: dict[str, Road] = {}
        for road in roads:
            if road.id in self.roads:
                raise NetworkError(f"duplicate road id {road.id!r}")
            for end in (road.from_junction, road.to_junction):
                if end not in junction_set:
                    raise NetworkError(f"road {road.id!r}: dangling junction {end!r}")
            self.roads[road.id] = road

        self.road_ids = tuple(self.roads)
        self.road_index = {rid: i for i, rid in enumerate(self.road_ids)}
        outs: dict[str, list[str]] = {j: [] for j in self.junctions}
        for road in self.roads.values():
            outs[road.from_junction].append(road.id)
        self.out_roads = {j: tuple(sorted(r)) for j, r in outs.items()}
        self.successors: dict[str, tuple[str, ...]] = {
            rid: self.out_roads[road.to_junction] for rid, road in self.roads.items()
        }
        # (road id, road index, head junction) per tail junction, for search loops
        self.out_edges = {
            j: tuple((r, self.road_index[r], self.roads[r].to_junction) for r in rs)
            for j, rs in self.out_roads.items()
        }

        self.lengths = np.array([r.length for r in self.roads.values()], dtype=float)
        self.lanes = np.array([r.lane_count for r in self.roads.values()], dtype=float)
        self.speed_limits = np.array([r.speed_limit for r in self.roads.values()], dtype=float)

    def __len__(self):
        return len(self.roads)

    def __eq__(self, other):
        if not isinstance(other, RoadNetwork):
            return NotImplemented
        return self.junctions == other.junctions and self.roads == other.roads

    def __repr__(self):
        return f"RoadNetwork({len(self.junctions)} junctions, {len(self.roads)} roads)"

    def road(self, road_id: str) -> Road:
        return self.roads[road_id]

    def is_connected_route(self, route) -> bool:
        return all(b in self.successors[a] for a, b in zip(route, route[1:]))


@dataclass
class FogPartition:
    region_of: dict[str, int]
    n_regions: int
    region_roads: list[tuple[str, ...]] = field(default_factory=list)

    @property
    def sizes(self) -> list[int]:
        return [len(r) for r in self.region_roads]

    def region_array(self, network: RoadNetwork) -> np.ndarray:
        """Region index per road, aligned with ``network.road_ids``."""
        return np.array([self.region_of[r] for r in network.road_ids], dtype=int)


def build_fog_partition(network: RoadNetwork, assignment: Mapping[str, int]) -> FogPartition:
    missing = [r for r in network.road_ids if r not in assignment]
    if missing:
        raise NetworkError(f"missing road in fog assignment: {missing[0]!r}")
    unknown = [r for r in assignment if r not in network.roads]
    if unknown:
        raise NetworkError(f"unknown road in fog assignment: {unknown[0]!r}")
    indexes = sorted({int(v) for v in assignment.values()})
    if not indexes:
        raise NetworkError("empty region: no regions defined")
    if indexes != list(range(len(indexes))):
        raise NetworkError(f"non-contiguous region indexes {indexes}")
    n = len(indexes)
    buckets: list[list[str]] = [[] for _ in range(n)]
    for rid in network.road_ids:
        buckets[int(assignment[rid])].append(rid)
    return FogPartition(
        region_of={r: int(assignment[r]) for r in network.road_ids},
        n_regions=n,
        region_roads=[tuple(b) for b in buckets],
    )


def fog_adjacency(network: RoadNetwork, partition: FogPartition) -> np.ndarray:
    """Symmetric 0/1 fog-region adjacency with unit diagonal.

    Regions i and j are adjacent when a road of one feeds directly into a
    road of the other.
    """
    n = partition.n_regions
    A = np.eye(n, dtype=float)
    for rid, succs in network.successors.items():
        i = partition.region_of[rid]
        for s in succs:
            j = partition.region_of[s]
            if i != j:
                A[i, j] = A[j, i] = 1.0
    return A


def generate_grid(rows, cols, road_length=100.0, lanes=1, speed_limit=15.0, bidirectional=True):
    """Rectangular lattice of junctions ``J{r}_{c}`` joined by straight roads.

    One-way grids orient horizontal roads eastward and vertical roads
    southward.
    """
    if rows < 2 or cols < 2:
        raise ValueError("rows and cols must both be >= 2")
    junctions = [f"J{r}_{c}" for r in range(rows) for c in range(cols)]
    roads = []

    def add(a, b):
        roads.append(Road(f"{a}>{b}", a, b, float(road_length), int(lanes), float(speed_limit)))

    for r in range(rows):
        for c in range(cols):
            here = f"J{r}_{c}"
            if c + 1 < cols:
                east = f"J{r}_{c + 1}"
                add(here, east)
                if bidirectional:
                    add(east, here)
            if r + 1 < rows:
                south = f"J{r + 1}_{c}"
                add(here, south)
                if bidirectional:
                    add(south, here)
    return RoadNetwork(junctions, roads)


_TOP_KEYS = {"junctions", "roads", "fog_regions"}
_ROAD_KEYS = {"id", "from", "to", "length_m", "lanes", "speed_limit_mps"}
_REGION_KEYS = {"index", "roads"}


def _parse_error(msg):
    return NetworkError(f"parse error: {msg}")


def parse_network(text: str) -> tuple[RoadNetwork, FogPartition | None]:
    """Parse a network file into the road graph and its fog partition (if any)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise _parse_error(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise _parse_error("top level must be an object")
    extra = set(doc) - _TOP_KEYS
    if extra:
        raise _parse_error(f"unknown key(s) {sorted(extra)}")
    for key in ("junctions", "roads"):
        if key not in doc:
            raise _parse_error(f"missing key {key!r}")
    junctions = doc["junctions"]
    if not isinstance(junctions, list) or not all(isinstance(j, str) for j in junctions):
        raise _parse_error("'junctions' must be an array of strings")

    roads = []
    for i, item in enumerate(doc["roads"]):
        where = f"roads[{i}]"
        if not isinstance(item, dict):
            raise _parse_error(f"{where} must be an object")
        extra = set(item) - _ROAD_KEYS
        if extra:
            raise _parse_error(f"{where}: unknown key(s) {sorted(extra)}")
        missing = _ROAD_KEYS - set(item)
        if missing:
            raise _parse_error(f"{where}: missing field(s) {sorted(missing)}")
        for fld in ("length_m", "lanes", "speed_limit_mps"):
            v = item[fld]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise _parse_error(f"{where}.{fld}: expected a number, got {v!r}")
        for fld in ("id", "from", "to"):
            if not isinstance(item[fld], str):
                raise _parse_error(f"{where}.{fld}: expected a string")
        roads.append(
            Road(item["id"], item["from"], item["to"], float(item["length_m"]),
                 item["lanes"], float(item["speed_limit_mps"]))
        )
    network = RoadNetwork(junctions, roads)

    partition = None
    if "fog_regions" in doc:
        assignment = {}
        for i, region in enumerate(doc["fog_regions"]):
            where = f"fog_regions[{i}]"
            if not isinstance(region, dict) or set(region) != _REGION_KEYS:
                raise _parse_error(f"{where}: expected exactly keys {sorted(_REGION_KEYS)}")
            idx = region["index"]
            if isinstance(idx, bool) or not isinstance(idx, int):
                raise _parse_error(f"{where}.index: expected an integer")
            for rid in region["roads"]:
                if rid in assignment:
                    raise NetworkError(f"road {rid!r} assigned to more than one fog region")
                assignment[rid] = idx
        partition = build_fog_partition(network, assignment)
    return network, partition


def load_network(text: str) -> RoadNetwork:
    return parse_network(text)[0]


def dump_network(network: RoadNetwork, partition: FogPartition | None = None) -> str:
    doc = {
        "junctions": list(network.junctions),
        "roads": [
            {
                "id": r.id,
                "from": r.from_junction,
                "to": r.to_junction,
                "length_m": r.length,
                "lanes": r.lane_count,
                "speed_limit_mps": r.speed_limit,
            }
            for r in network.roads.values()
        ],
    }
    if partition is not None:
        doc["fog_regions"] = [
            {"index": i, "roads": list(roads)} for i, roads in enumerate(partition.region_roads)
        ]
    return json.dumps(doc, indent=1)


def read_network_file(path) -> tuple[RoadNetwork, FogPartition | None]:
    with open(path) as fh:
        return parse_network(fh.read())
