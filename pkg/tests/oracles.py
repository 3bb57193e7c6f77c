"""Independent reference implementations used by the tests."""

import itertools
import math

import numpy as np

from fogroute.network import Road, RoadNetwork
from fogroute.nn import QModel, model_backward, model_forward


def diamond_network(w_top=(1.0, 2.0), w_bottom=(2.0, 3.0)):
    """S -> {A | B} -> T plus an entry road into S; returns network and a weight vector."""
    roads = [
        Road("in", "O", "S", 100.0),
        Road("sa", "S", "A", 100.0),
        Road("at", "A", "T", 100.0),
        Road("sb", "S", "B", 100.0),
        Road("bt", "B", "T", 100.0),
    ]
    net = RoadNetwork(["O", "S", "A", "B", "T"], roads)
    w = np.zeros(len(net))
    for rid, val in zip(["in", "sa", "at", "sb", "bt"], [1.0, *w_top, *w_bottom]):
        w[net.road_index[rid]] = val
    return net, w


def random_network(rng, max_junctions=8, p_edge=0.35):
    """Random directed multigraph-free network on <= max_junctions junctions."""
    n = int(rng.integers(3, max_junctions + 1))
    junctions = [f"j{i}" for i in range(n)]
    roads = []
    for a, b in itertools.permutations(range(n), 2):
        if rng.random() < p_edge:
            roads.append(Road(f"r{a}_{b}", junctions[a], junctions[b], float(rng.integers(50, 500))))
    if not roads:
        roads.append(Road("r0_1", "j0", "j1", 100.0))
    return RoadNetwork(junctions, roads)


def brute_force_paths(net, weights, from_road, to_junction, K):
    """Every loopless path by DFS, sorted by (weight, road ids), first K."""
    start = net.roads[from_road]
    found = []

    def dfs(junction, visited, roads, cost):
        if junction == to_junction:
            found.append((cost, tuple(roads)))
            return
        for rid in net.out_roads.get(junction, ()):
            nxt = net.roads[rid].to_junction
            if nxt in visited:
                continue
            dfs(nxt, visited | {nxt}, roads + [rid], cost + [weights[net.road_index[rid]]])

    dfs(start.to_junction, {start.to_junction}, [from_road],
        [weights[net.road_index[from_road]]])
    scored = sorted((math.fsum(c), r) for c, r in found)
    return scored[:K]



def random_small_model(seed, n_nodes=3):
    """QModel with random weights and biases plus a random graph and features.

    Redrawn until every ReLU / LeakyReLU input is at least 1e-3 from zero,
    so central differences never straddle a kink.
    """
    rng = np.random.default_rng(seed)
    while True:
        m = QModel(rng=rng)
        for k, v in m.params.items():
            if k.endswith(".b"):
                v[...] = rng.normal(0, 0.1, v.shape)
        X = rng.normal(0, 1, (n_nodes, 2))
        A = np.eye(n_nodes)
        for i, j in itertools.combinations(range(n_nodes), 2):
            if rng.random() < 0.6:
                A[i, j] = A[j, i] = 1
        if min_kink_distance(m, X, A) > 1e-3:
            return m, X, A, rng.normal(0, 1, (n_nodes, m.arch.n_actions))


def min_kink_distance(m, X, A):
    from fogroute.nn import _forward
    _, acts, (h_in, alpha, (Z, raw, mask)) = _forward(m, X, A)
    dists = [np.abs(z).min() for _, _, z, act in acts if act == "relu"]
    dists.append(np.abs(raw[mask]).min())
    return min(dists)


def finite_difference_grads(m, X, A, upstream, h=1e-5):
    """Central differences of sum(upstream * Q) for every parameter entry."""
    grads = {}
    for name, p in m.params.items():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            up = float(np.sum(upstream * model_forward(m, X, A)))
            flat[k] = old - h
            down = float(np.sum(upstream * model_forward(m, X, A)))
            flat[k] = old
            gflat[k] = (up - down) / (2 * h)
        grads[name] = g
    return grads


def max_relative_error(analytic, numeric, floor=1e-7):
    worst = 0.0
    for k in analytic:
        a, n = analytic[k], numeric[k]
        rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(rel.max()))
    return worst


def fd_check(seed, n_nodes=3, h=1e-5):
    m, X, A, up = random_small_model(seed, n_nodes)
    return max_relative_error(model_backward(m, X, A, up), finite_difference_grads(m, X, A, up, h))
