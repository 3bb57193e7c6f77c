"""Fog-region dynamic vehicle rerouting: graph-attention Q-learning picks per-region
road indexes, and an entropy-balanced k-shortest-path assigner routes vehicles
over a built-in mesoscopic traffic simulator."""

from .agent import GAQAgent, ReplayBuffer, Transition, select_actions, td_targets, train_step
from .desk import desk_network, desk_scenario
from .env import EpisodeRecord, ReroutingEnv, run_episode
from .experiment import (ExperimentConfig, MetricsSummary, compare, run_baseline, run_test,
                         run_training)
from .network import (FogPartition, NetworkError, Road, RoadNetwork, build_fog_partition,
                      fog_adjacency, generate_grid, parse_network)
from .nn import (Adam, Architecture, QModel, load_checkpoint, model_backward, model_forward,
                 save_checkpoint)
from .routing import (EBkSPRouter, RouteCandidate, assign_routes, baseline_weights,
                      k_shortest_paths, road_weights, route_entropy)
from .simulator import InflowSpec, Scenario, SimState, parse_scenario, run_control_step
from .state import node_features, reward

__version__ = "0.1.0"

__all__ = [
    "GAQAgent", "ReplayBuffer", "Transition", "select_actions", "td_targets", "train_step",
    "desk_network", "desk_scenario", "EpisodeRecord", "ReroutingEnv", "run_episode",
    "ExperimentConfig", "MetricsSummary", "compare", "run_baseline", "run_test", "run_training",
    "FogPartition", "NetworkError", "Road", "RoadNetwork", "build_fog_partition", "fog_adjacency",
    "generate_grid", "parse_network", "Adam", "Architecture", "QModel", "load_checkpoint",
    "model_backward", "model_forward", "save_checkpoint", "EBkSPRouter", "RouteCandidate",
    "assign_routes", "baseline_weights", "k_shortest_paths", "road_weights", "route_entropy",
    "InflowSpec", "Scenario", "SimState", "parse_scenario", "run_control_step", "node_features",
    "reward",
]
