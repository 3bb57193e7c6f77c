"""Episode machinery: simulator + state/reward + router, driven by an agent or a fixed policy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agent import Transition
from .network import FogPartition, RoadNetwork, fog_adjacency
from .routing import EBkSPRouter, baseline_weights, road_weights, shortest_route
from .simulator import RV, BV, Scenario, SimState, distance_route, run_control_step
from .state import node_features, reward

MODES = ("warmup", "train", "eval", "random", "baseline")


@dataclass
class EpisodeRecord:
    episode: int
    mode: str
    reward: float
    steps: int
    hit_cap: bool
    mean_rv_speed: float
    mean_loss: float
    epsilon: float
    transitions: int = 0
    rewards: list = field(default_factory=list)
    actions: list = field(default_factory=list)


class ReroutingEnv:
    """One scenario on one network, reset per episode with a derived seed.

    Episode ``e`` always replays the same spawn draws for a given ``seed``,
    so different policies face identical demand.
    """

    def __init__(self, network: RoadNetwork, partition: FogPartition, scenario: Scenario,
                 router: EBkSPRouter | None = None, t1=1.0, t2=1.0, seed=None,
                 record_diagnostics=False):
        scenario.validate(network)
        self.network = network
        self.partition = partition
        self.scenario = scenario
        self.router = (router or EBkSPRouter()).fit(network)
        self.t1 = t1
        self.t2 = t2
        self.seed = scenario.seed if seed is None else seed
        self.adjacency = fog_adjacency(network, partition)
        self.record_diagnostics = record_diagnostics
        self.diagnostics = []
        self._rv_inflows = [k for k, f in enumerate(scenario.inflows) if f.vehicle_class == RV]

    @property
    def n_regions(self):
        return self.partition.n_regions

    def reset(self, episode=0):
        self.episode = episode
        self.rng = np.random.default_rng([self.seed, episode])
        self.sim = SimState(self.network, self.scenario.sim_params)
        self.prev_speed = 0.0
        return self.observe()

    def observe(self):
        X = node_features(self.sim, self.partition, self.network, self.scenario.tau)
        return X, self.adjacency

    def _route_at_spawn(self, state: SimState, spec):
        if spec.vehicle_class == BV:
            found = shortest_route(self.network, baseline_weights(state.occupancy),
                                   spec.entry_road, spec.destination)
            return found.roads
        return distance_route(state, spec)

    def weights_for(self, actions):
        if actions is None:
            return baseline_weights(self.sim.occupancy)
        return road_weights(actions, self.sim.occupancy, self.partition, self.network,
                            self.t1, self.t2)

    def reroute(self, actions):
        """Reassign every active RV given per-region road indexes (None: density only)."""
        weights = self.weights_for(actions)
        rvs = [v for v in self.sim.vehicles.values() if v.vclass == RV]
        if not rvs:
            return {}
        assigned = self.router.predict(rvs, weights)
        vehicles = self.sim.vehicles
        for vid, route in assigned.items():
            vehicles[vid].reroute(route.roads)
        if self.record_diagnostics:
            step = self.sim.control_step
            for vid, rank, n_cand, w, pop in self.router.last_diagnostics_:
                self.diagnostics.append((self.episode, step, vid, rank, n_cand, w, pop))
        return assigned

    def rv_done(self) -> bool:
        """All RVs have arrived and no more will spawn."""
        sim = self.sim
        if sim.spawned[RV] == 0 or any(v.vclass == RV for v in sim.vehicles.values()):
            return False
        counts = sim.inflow_counts or [0] * len(self.scenario.inflows)
        for k in self._rv_inflows:
            cap = self.scenario.inflows[k].max_vehicles
            if cap is None or counts[k] < cap:
                return False
        return True

    def step(self, actions):
        """Reroute, advance one control step, and return ``(next_state, record, done)``."""
        self.reroute(actions)
        run_control_step(self.sim, self.scenario.inflows, self.rng, self._route_at_spawn)
        rec = reward(self.prev_speed, self.sim, self.scenario.reward_weights)
        self.prev_speed = rec.mean_rv_speed
        return self.observe(), rec, self.rv_done()


def run_episode(env: ReroutingEnv, agent=None, mode="eval", epsilon=0.0, episode=0,
                max_steps=None, rng=None):
    """Play one episode and return its :class:`EpisodeRecord`.

    ``warmup`` takes random actions and stores transitions; ``train`` is
    epsilon-greedy, stores transitions and takes a gradient step per control
    step once the buffer holds a batch; ``eval`` is greedy with no side
    effects on the buffer; ``random`` and ``baseline`` need no agent.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode in ("warmup", "train", "eval") and agent is None:
        raise ValueError(f"mode {mode!r} needs an agent")
    max_steps = env.scenario.max_control_steps if max_steps is None else max_steps
    if mode == "random" and rng is None:
        rng = np.random.default_rng([env.seed, episode, 1])

    state = env.reset(episode)
    total = 0.0
    losses = []
    speeds = []
    rewards = []
    actions_log = []
    stored = 0
    done = False
    steps = 0
    while steps < max_steps and not done:
        X, A = state
        if mode == "baseline":
            actions = None
        elif mode == "random":
            actions = rng.integers(0, 5, size=env.n_regions)
        elif mode == "warmup":
            actions = agent.random_actions(env.n_regions)
        elif mode == "train":
            actions = agent.act(X, A, epsilon)
        else:
            actions = agent.predict(X, A)
        next_state, rec, done = env.step(actions)
        steps += 1
        total += rec.r_t
        rewards.append(rec.r_t)
        actions_log.append(None if actions is None else tuple(int(a) for a in actions))
        if any(v.vclass == RV for v in env.sim.vehicles.values()):
            speeds.append(rec.mean_rv_speed)
        if mode in ("warmup", "train"):
            agent.remember(Transition((X, A), np.asarray(actions, dtype=int), rec.r_t,
                                      next_state, bool(done)))
            stored += 1
            if mode == "train" and len(agent.buffer_) >= agent.batch_size \
                    and steps % agent.train_every == 0:
                losses.append(agent.learn())
        state = next_state

    return EpisodeRecord(
        episode=episode, mode=mode, reward=total, steps=steps, hit_cap=not done,
        mean_rv_speed=float(np.mean(speeds)) if speeds else 0.0,
        mean_loss=float(np.mean(losses)) if losses else float("nan"),
        epsilon=float(epsilon if mode == "train" else (1.0 if mode in ("warmup", "random") else 0.0)),
        transitions=stored, rewards=rewards, actions=actions_log,
    )
