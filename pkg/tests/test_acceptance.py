"""Acceptance criteria, one test each; every test prints a ``criterion N: PASS|FAIL`` line.

Run directly with ``python3 tests/test_acceptance.py`` or as part of ``pytest``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from fogroute.cli import main as cli_main
from fogroute.desk import desk_network, desk_scenario
from fogroute.env import ReroutingEnv
from fogroute.experiment import (evaluate_policy, load_config, make_env, read_summary,
                                 rolling_cap_probability, run_training)
from fogroute.network import generate_grid
from fogroute.nn import Adam, gat_forward
from fogroute.routing import (EBkSPRouter, FootprintTable, RouteCandidate, entropy_of_footprints,
                              k_shortest_paths, route_entropy)
from fogroute.simulator import RV, Vehicle
from oracles import brute_force_paths, diamond_network, fd_check, random_network

DESK_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "desk.json"
DESK_SEEDS = range(5)


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_ksp_matches_enumeration():
    rng = np.random.default_rng(20240501)
    start = time.perf_counter()
    mismatches = 0
    nonempty = 0
    for _ in range(500):
        net = random_network(rng, max_junctions=8)
        w = rng.uniform(0.1, 10.0, len(net))
        if rng.random() < 0.3:
            w = np.round(w)  # integer weights exercise the tie-break
            w[w == 0] = 1.0
        K = int(rng.integers(1, 5))
        from_road = net.road_ids[int(rng.integers(len(net)))]
        target = net.junctions[int(rng.integers(len(net.junctions)))]
        got = [(c.total_weight, c.roads) for c in k_shortest_paths(net, w, from_road, target, K)]
        want = brute_force_paths(net, w, from_road, target, K)
        mismatches += got != want
        nonempty += bool(want)
    elapsed = time.perf_counter() - start
    report(1, mismatches == 0 and elapsed < 30.0,
           f"{500 - mismatches}/500 exact matches ({nonempty} reachable), {elapsed:.2f} s (< 30 s)")


def test_criterion_2_gradients():
    errors = [fd_check(seed) for seed in range(20)]
    worst = max(errors)
    report(2, worst < 1e-4, f"max relative error {worst:.2e} over 20 seeds (< 1e-4)")


def test_criterion_3_attention_normalisation():
    rng = np.random.default_rng(7)
    worst_sum = 0.0
    leaks = 0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        d_in, d_out = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        H = rng.normal(0, float(rng.choice([0.1, 1.0, 30.0])), (n, d_in))
        A = (rng.random((n, n)) < rng.random()).astype(float)
        np.fill_diagonal(A, 1.0)
        _, alpha = gat_forward(rng.normal(size=(d_in, d_out)), rng.normal(size=2 * d_out),
                               rng.normal(size=d_out), H, A)
        worst_sum = max(worst_sum, float(np.abs(alpha.sum(axis=1) - 1.0).max()))
        leaks += int(np.count_nonzero(alpha[A == 0]))
    report(3, worst_sum <= 1e-9 and leaks == 0,
           f"max |row sum - 1| = {worst_sum:.1e} (<= 1e-9), {leaks} nonzero off-neighbourhood entries")


def test_criterion_4_entropy():
    hand = (entropy_of_footprints([1.0, 1.0]) == math.log(2)
            and entropy_of_footprints([2.0, 0.0]) == 0.0
            and entropy_of_footprints([0.0, 0.0]) == 0.0)
    net = generate_grid(4, 4)
    rng = np.random.default_rng(11)
    violations = 0
    for _ in range(10_000):
        table = FootprintTable(net, omega=rng.uniform(0.01, 10.0, len(net)))
        table.counts[:] = rng.integers(0, 6, len(net)) * (rng.random(len(net)) < 0.7)
        length = int(rng.integers(1, 12))
        roads = tuple(rng.choice(net.road_ids, size=length, replace=False))
        e, pop = route_entropy(RouteCandidate(roads, 0.0), table)
        if not (0.0 <= e <= math.log(length) + 1e-12) or pop != math.exp(e):
            violations += 1
    report(4, hand and violations == 0,
           f"hand cases {'exact' if hand else 'WRONG'}, {violations}/10000 bound violations "
           "(0 <= E <= ln len, 1e-12 rounding allowance)")


def test_criterion_5_two_vehicle_trace():
    net, w = diamond_network((1.0, 1.0), (1.0, 1.0))
    rvs = [Vehicle("r1", RV, ("in",), "T"), Vehicle("r2", RV, ("in",), "T")]
    router = EBkSPRouter(K=2, high_priority=0).fit(net)
    got = router.predict(rvs, w)
    ok = (got["r1"].roads == ("in", "sa", "at") and got["r2"].roads == ("in", "sb", "bt")
          and [d[4] for d in router.last_diagnostics_] == [1.0, 1.0])
    report(5, ok, f"r1 -> {'/'.join(got['r1'].roads)}, r2 -> {'/'.join(got['r2'].roads)}")


def _desk_trace(seed, episode):
    net, part = desk_network()
    env = ReroutingEnv(net, part, desk_scenario(seed=seed))
    rng = np.random.default_rng([seed, episode, 2])
    env.reset(episode)
    snaps = []
    bad = 0
    for _ in range(env.scenario.max_control_steps):
        _, _, done = env.step(rng.integers(0, 5, env.n_regions))
        sim = env.sim
        bad += sim.total_spawned != len(sim.vehicles) + len(sim.arrived)
        snaps.append(sim.snapshot())
        if done:
            break
    return snaps, bad


def test_criterion_6_conservation_and_determinism():
    violations = 0
    steps = 0
    for episode in range(100):
        snaps, bad = _desk_trace(episode % 10, episode)
        violations += bad
        steps += len(snaps)
    reruns_equal = all(_desk_trace(s, s)[0] == _desk_trace(s, s)[0] for s in range(3))
    report(6, violations == 0 and reruns_equal,
           f"{violations} conservation violations over {steps} control steps in 100 episodes, "
           f"reruns {'bit-identical' if reruns_equal else 'DIFFER'}")


def test_criterion_7_adam():
    table = [(0.1, 0.001, 0.90000000099999999),
             (-0.11, 0.004999, 0.93661035347207508821),
             (-0.049, 0.005244001, 0.95027941967382172559)]
    opt = Adam(0.1)
    p = {"w": np.array([1.0])}
    worst = 0.0
    for g, (m, v, theta) in zip([1.0, -2.0, 0.5], table):
        opt.step(p, {"w": np.array([g])})
        worst = max(worst, abs(opt.m["w"][0] - m), abs(opt.v["w"][0] - v), abs(p["w"][0] - theta))
    report(7, worst <= 1e-12, f"max deviation {worst:.1e} from the reference table (<= 1e-12)")


@pytest.fixture(scope="module")
def desk_runs():
    """Five seeded training runs plus random and density-only episodes on the same demand."""
    start = time.perf_counter()
    runs = []
    for seed in DESK_SEEDS:
        config = load_config(DESK_CONFIG)
        config.seed = seed
        summary, agent = run_training(config, write=False)
        env = make_env(config)
        cut = config.episodes // 2
        n = config.episodes - cut
        runs.append({
            "config": config,
            "hit_cap": [r.hit_cap for r in agent.history_],
            "trained": summary.mean_reward,
            "random": np.mean([r.reward for r in evaluate_policy(env, "random", n, first_episode=cut)]),
            "baseline": np.mean([r.reward for r in evaluate_policy(env, "baseline", n,
                                                                   first_episode=cut)]),
        })
    return runs, time.perf_counter() - start


def test_criterion_8_learning_smoke(desk_runs):
    runs, elapsed = desk_runs
    trained = float(np.mean([r["trained"] for r in runs]))
    rand = float(np.mean([r["random"] for r in runs]))
    base = float(np.mean([r["baseline"] for r in runs]))
    per_seed = ", ".join(f"{r['trained'] / r['random']:.3f}" for r in runs)
    ok = trained >= 1.05 * rand and trained >= base and elapsed <= 3600
    report(8, ok,
           f"trained {trained:.1f} vs random {rand:.1f} (x{trained / rand:.3f}, need >= 1.05) "
           f"and baseline {base:.1f}; per-seed ratio [{per_seed}]; {elapsed:.0f} s (<= 3600 s)")


def test_criterion_9_cap_trend(desk_runs):
    runs, _ = desk_runs
    warm = runs[0]["config"].warmup_episodes
    window = 50
    series = np.mean([rolling_cap_probability(r["hit_cap"], window) for r in runs], axis=0)
    early = float(series[warm + window - 1])
    late = float(series[-1])
    report(9, late <= early,
           f"seed-averaged rolling cap probability {early:.3f} (episodes {warm}-{warm + window - 1}) "
           f"-> {late:.3f} (final {window})")


def test_criterion_10_priority_harness(tmp_path, capsys):
    codes = []
    for mode in ("near", "far"):
        codes.append(cli_main(["train", "--config", str(DESK_CONFIG), "--priority", mode,
                               "--out", str(tmp_path / mode), "--quiet"]))
    codes.append(cli_main(["compare", str(tmp_path / "near"), str(tmp_path / "far"),
                           "--out", str(tmp_path / "compare.csv")]))
    table = capsys.readouterr().out
    rows = [read_summary(tmp_path / m)[0] for m in ("near", "far")]
    gap = rows[0]["mean_reward"] - rows[1]["mean_reward"]
    ok = codes == [0, 0, 0] and (tmp_path / "compare.csv").exists() and "far-near:mean_reward" in table
    with capsys.disabled():
        print("\n" + table)
    report(10, ok, f"near-far comparison table emitted; near - far reward gap {gap:+.1f} "
                   "(reported only)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s", *sys.argv[1:]]))
