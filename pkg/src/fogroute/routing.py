"""Road weights, k loopless shortest paths and entropy-balanced route assignment."""

from __future__ import annotations

import heapq
import logging
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .network import FogPartition, RoadNetwork

logger = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-6


@dataclass(frozen=True)
class RouteCandidate:
    roads: tuple[str, ...]
    total_weight: float

    def __len__(self):
        return len(self.roads)


def road_weights(indexes, occupancy, partition: FogPartition, network: RoadNetwork,
                 t1=1.0, t2=1.0) -> np.ndarray:
    """Per-road weight ``index[region] * t1 + t2 * occupancy + floor``.

    Returned array is aligned with ``network.road_ids``.
    """
    indexes = np.asarray(indexes, dtype=float)
    if indexes.shape != (partition.n_regions,):
        raise ValueError(f"expected {partition.n_regions} road indexes, got shape {indexes.shape}")
    occupancy = np.asarray(occupancy, dtype=float)
    regions = partition.region_array(network)
    return indexes[regions] * t1 + t2 * occupancy + WEIGHT_FLOOR


def baseline_weights(occupancy) -> np.ndarray:
    """Density-only weights used when no agent sets road indexes."""
    return np.asarray(occupancy, dtype=float) + WEIGHT_FLOOR


def path_weight(network: RoadNetwork, weights, roads) -> float:
    idx = network.road_index
    return math.fsum(float(weights[idx[r]]) for r in roads)


def _shortest(out_edges, w, source, target, banned_junctions=(), banned_roads=()):
    """Min (cost, road-id sequence) path from ``source`` to ``target``.

    ``w`` is a plain list of road weights. Returns the road tuple or None.
    Ties in cost resolve to the lexicographically smallest road sequence.
    """
    if source == target:
        return ()
    settled = set(banned_junctions)
    heap = [(0.0, (), source)]
    while heap:
        cost, path, node = heapq.heappop(heap)
        if node in settled:
            continue
        if node == target:
            return path
        settled.add(node)
        for rid, i, nxt in out_edges[node]:
            if nxt in settled or rid in banned_roads:
                continue
            heapq.heappush(heap, (cost + w[i], path + (rid,), nxt))
    return None


def k_shortest_paths(network: RoadNetwork, weights, from_road: str, to_junction: str, K: int):
    """Yen's algorithm over the road graph, starting at the head of ``from_road``.

    Every candidate is prefixed with ``from_road``. Looplessness is enforced
    on the junctions still to be visited (from the head of ``from_road``
    onward). Candidates come back ascending by (total weight, road ids).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    w = np.asarray(weights, dtype=float).tolist()
    roads = network.roads
    out_edges = network.out_edges
    source = roads[from_road].to_junction

    first = _shortest(out_edges, w, source, to_junction)
    if first is None:
        return []
    accepted = [first]
    seen = {first}
    pool: list[tuple[float, tuple[str, ...]]] = []

    while len(accepted) < K:
        prev = accepted[-1]
        nodes = [source] + [roads[r].to_junction for r in prev]
        for i in range(len(prev)):
            root = prev[:i]
            banned_roads = {p[i] for p in accepted if len(p) > i and p[:i] == root}
            spur = _shortest(out_edges, w, nodes[i], to_junction,
                             banned_junctions=nodes[:i], banned_roads=banned_roads)
            if spur is None:
                continue
            cand = root + spur
            if cand not in seen:
                seen.add(cand)
                heapq.heappush(pool, (path_weight(network, w, cand), cand))
        if not pool:
            break
        accepted.append(heapq.heappop(pool)[1])

    out = [
        RouteCandidate((from_road,) + p, path_weight(network, w, (from_road,) + p))
        for p in accepted
    ]
    out.sort(key=lambda c: (c.total_weight, c.roads))
    return out


def shortest_route(network, weights, from_road, to_junction):
    found = k_shortest_paths(network, weights, from_road, to_junction, 1)
    return found[0] if found else None


def junction_distances_to(network: RoadNetwork, target: str) -> dict[str, float]:
    """Static length distance from every junction that can reach ``target``."""
    incoming: dict[str, list] = {j: [] for j in network.junctions}
    for road in network.roads.values():
        incoming[road.to_junction].append(road)
    dist = {target: 0.0}
    heap = [(0.0, target)]
    done = set()
    while heap:
        d, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        for road in incoming[node]:
            nd = d + road.length
            if nd < dist.get(road.from_junction, math.inf):
                dist[road.from_junction] = nd
                heapq.heappush(heap, (nd, road.from_junction))
    return dist


def static_road_weights(network: RoadNetwork) -> np.ndarray:
    """omega_i = (mean length / length_i) * lanes_i * (mean limit / limit_i)."""
    return (network.lengths.mean() / network.lengths) * network.lanes * (
        network.speed_limits.mean() / network.speed_limits
    )


class FootprintTable:
    """Assigned-vehicle counts per road and the weighted footprints derived from them."""

    def __init__(self, network: RoadNetwork, omega=None):
        self.network = network
        self.omega = static_road_weights(network) if omega is None else np.asarray(omega, float)
        self.counts = np.zeros(len(network), dtype=int)

    @property
    def footprints(self) -> np.ndarray:
        return self.counts * self.omega

    def add_route(self, roads):
        idx = self.network.road_index
        for r in set(roads):
            self.counts[idx[r]] += 1

    def route_footprints(self, roads) -> np.ndarray:
        idx = self.network.road_index
        return np.array([self.counts[idx[r]] * self.omega[idx[r]] for r in roads], dtype=float)


def entropy_of_footprints(fc, normalizer="footprint") -> float:
    """Footprint entropy of one route.

    ``normalizer="footprint"`` divides each footprint by the route's total
    footprint, so the result is a Shannon entropy in ``[0, ln len(fc)]``.
    ``normalizer="roads"`` divides by the number of roads instead.
    """
    fc = np.asarray(fc, dtype=float)
    if fc.size == 0:
        raise ValueError("route must contain at least one road")
    if normalizer == "footprint":
        total = fc.sum()
        if total <= 0:
            return 0.0
        p = fc / total
    elif normalizer == "roads":
        p = fc / fc.size
    else:
        raise ValueError(f"unknown normalizer {normalizer!r}")
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def route_entropy(route, footprints: FootprintTable, normalizer="footprint"):
    """Return ``(E, Pop)`` for a route, with ``Pop = exp(E)``."""
    roads = route.roads if isinstance(route, RouteCandidate) else tuple(route)
    e = entropy_of_footprints(footprints.route_footprints(roads), normalizer)
    return e, math.exp(e)


@dataclass
class PriorityOrder:
    order: list  # (distance, vehicle id) ascending in priority rank
    mode: str
    high: list
    low: list
    excluded: list


def compute_priority(distances: dict, mode="near", x=10) -> PriorityOrder:
    """Split vehicles into high/low priority from their distance to destination.

    ``distances`` maps vehicle id to remaining distance; ``inf`` marks an
    unreachable destination and excludes the vehicle.
    """
    if mode not in ("near", "far"):
        raise ValueError(f"priority mode must be 'near' or 'far', got {mode!r}")
    if x < 0:
        raise ValueError("x must be >= 0")
    excluded = sorted(v for v, d in distances.items() if not math.isfinite(d))
    items = [(d, v) for v, d in distances.items() if math.isfinite(d)]
    if mode == "near":
        items.sort(key=lambda t: (t[0], t[1]))
    else:
        items.sort(key=lambda t: (-t[0], t[1]))
    ids = [v for _, v in items]
    return PriorityOrder(order=items, mode=mode, high=ids[:x], low=ids[x:], excluded=excluded)


class EBkSPRouter(BaseEstimator):
    """Entropy-balanced k-shortest-path route assignment.

    ``fit`` takes the road network and precomputes the static road weights
    and distance tables; ``predict`` assigns one route per rerouting vehicle
    given the current road weights.

    Parameters
    ----------
    K : int
        Number of loopless candidate routes per vehicle.
    priority : {"near", "far"}
        Whether vehicles nearer to or further from their destination come first.
    high_priority : int
        Size of the high-priority set, which simply takes its shortest candidate.
    popularity_objective : {"min", "max"}
        Low-priority vehicles take the candidate with min (default) or max popularity.
    entropy_normalizer : {"footprint", "roads"}
        Denominator inside the route entropy, see :func:`entropy_of_footprints`.
    """

    def __init__(self, K=3, priority="near", high_priority=10, popularity_objective="min",
                 entropy_normalizer="footprint"):
        self.K = K
        self.priority = priority
        self.high_priority = high_priority
        self.popularity_objective = popularity_objective
        self.entropy_normalizer = entropy_normalizer

    def fit(self, network: RoadNetwork, y=None):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.popularity_objective not in ("min", "max"):
            raise ValueError("popularity_objective must be 'min' or 'max'")
        self.network_ = network
        self.omega_ = static_road_weights(network)
        self._dist_cache = {}
        return self

    def distance_to_destination(self, road_id, offset, destination) -> float:
        check_is_fitted(self, "network_")
        if destination not in self._dist_cache:
            self._dist_cache[destination] = junction_distances_to(self.network_, destination)
        road = self.network_.roads[road_id]
        d = self._dist_cache[destination].get(road.to_junction, math.inf)
        return road.length - offset + d

    def predict(self, vehicles, weights):
        """Assign routes to ``vehicles`` (objects with id, current_road, offset, destination).

        Returns ``{vehicle id: RouteCandidate}``; vehicles without any
        candidate are left out. Per-vehicle diagnostics are kept in
        ``last_diagnostics_``.
        """
        check_is_fitted(self, "network_")
        network = self.network_
        candidates = {}
        distances = {}
        for v in vehicles:
            cands = k_shortest_paths(network, weights, v.current_road, v.destination, self.K)
            if not cands:
                logger.debug("vehicle %s has no route candidates; keeping current route", v.id)
                continue
            candidates[v.id] = cands
            distances[v.id] = self.distance_to_destination(v.current_road, v.offset, v.destination)

        prio = compute_priority(distances, self.priority, self.high_priority)
        table = FootprintTable(network, self.omega_)
        assigned = {}
        diagnostics = []
        rank = 0
        for vid in prio.high:
            route = candidates[vid][0]
            assigned[vid] = route
            table.add_route(route.roads)
            diagnostics.append((vid, rank, len(candidates[vid]), route.total_weight, None))
            rank += 1
        sign = 1.0 if self.popularity_objective == "min" else -1.0
        for vid in prio.low:
            scored = []
            for c in candidates[vid]:
                _, pop = route_entropy(c, table, self.entropy_normalizer)
                scored.append((sign * pop, c.total_weight, c.roads, pop, c))
            best = min(scored, key=lambda s: s[:3])
            assigned[vid] = best[4]
            table.add_route(best[4].roads)
            diagnostics.append((vid, rank, len(candidates[vid]), best[4].total_weight, best[3]))
            rank += 1
        self.last_footprints_ = table
        self.last_diagnostics_ = diagnostics
        return assigned


def assign_routes(vehicles, network, weights, mode="near", x=10, K=3, **kwargs):
    """Functional form of :class:`EBkSPRouter`."""
    router = EBkSPRouter(K=K, priority=mode, high_priority=x, **kwargs).fit(network)
    return router.predict(vehicles, weights)


def footprint_counts(assignment: dict, network: RoadNetwork) -> Counter:
    counts = Counter()
    for route in assignment.values():
        counts.update(set(route.roads))
    return counts
