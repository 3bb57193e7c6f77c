"""Training, testing and baseline runs, with CSV outputs and run comparison."""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import GAQAgent
from .desk import desk_network, desk_scenario
from .env import ReroutingEnv, run_episode
from .network import read_network_file
from .nn import load_checkpoint, save_checkpoint
from .routing import EBkSPRouter
from .simulator import BV, RV, InflowSpec, Scenario, read_scenario_file


class ConfigError(ValueError):
    pass


EPISODE_COLUMNS = ["episode", "mode", "reward", "steps", "hit_cap", "mean_rv_speed",
                   "mean_loss", "epsilon"]
SUMMARY_COLUMNS = ["label", "ratio", "total", "episodes", "mean_reward", "mean_rv_speed",
                   "cap_probability"]
DIAGNOSTIC_COLUMNS = ["episode", "step", "rv_id", "priority_rank", "candidate_count",
                      "route_weight", "route_pop"]
CAP_WINDOW = 50

_AGENT_KEYS = set(GAQAgent().get_params()) - {"random_state", "warmup_episodes"}


@dataclass
class ExperimentConfig:
    """Everything a run needs. ``network``/``scenario`` of ``None`` select the desk setup."""

    network: str | None = None
    scenario: str | None = None
    episodes: int = 800
    warmup_episodes: int = 200
    agent: dict = field(default_factory=dict)
    priority: str = "near"
    high_priority: int = 10
    K: int = 3
    t1: float = 1.0
    t2: float = 1.0
    popularity_objective: str = "min"
    entropy_normalizer: str = "footprint"
    rerouting_ratio: float | None = None
    total_vehicles: int | None = None
    ratios: list = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    totals: list = field(default_factory=lambda: [100])
    test_episodes: int = 20
    seed: int = 0
    out: str = "runs/default"
    router_diagnostics: bool = False

    def validate(self):
        if self.episodes < 0 or self.warmup_episodes < 0:
            raise ConfigError("episodes and warmup_episodes must be >= 0")
        if self.warmup_episodes > self.episodes:
            raise ConfigError("warmup_episodes must not exceed episodes")
        if self.priority not in ("near", "far"):
            raise ConfigError("priority must be 'near' or 'far'")
        if self.high_priority < 0 or self.K < 1:
            raise ConfigError("high_priority must be >= 0 and K >= 1")
        for r in ([self.rerouting_ratio] if self.rerouting_ratio is not None else []) + list(self.ratios):
            if not 0.0 < r < 1.0:
                raise ConfigError(f"rerouting ratio {r} must be in (0, 1)")
        for n in ([self.total_vehicles] if self.total_vehicles is not None else []) + list(self.totals):
            if int(n) != n or n < 1:
                raise ConfigError(f"total vehicle count {n} must be a positive integer")
        unknown = set(self.agent) - _AGENT_KEYS
        if unknown:
            raise ConfigError(f"unknown agent settings: {sorted(unknown)}")
        if self.test_episodes < 1:
            raise ConfigError("test_episodes must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d, base_dir=None):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("network", "scenario"):
            if d.get(key) and base_dir is not None and not Path(d[key]).is_absolute():
                d[key] = str(Path(base_dir) / d[key])
        return cls(**d).validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return ExperimentConfig.from_dict(data, base_dir=path.parent)


def _class_counts(scenario: Scenario):
    """Nominal per-class vehicle counts: quotas when every inflow has one, else rates."""
    if all(f.max_vehicles is not None for f in scenario.inflows):
        key = lambda f: f.max_vehicles  # noqa: E731
    else:
        key = lambda f: f.rate  # noqa: E731
    return {c: sum(key(f) for f in scenario.inflows if f.vehicle_class == c) for c in (RV, BV)}


def rescale_scenario(scenario: Scenario, total, ratio) -> Scenario:
    """Scale each class's inflows so RVs are ``ratio`` of ``total`` vehicles.

    Quotas (when present) and rates are scaled by the same per-class factor.
    """
    counts = _class_counts(scenario)
    quota_based = all(f.max_vehicles is not None for f in scenario.inflows)
    want = {RV: round(total * ratio), BV: total - round(total * ratio)}
    if not quota_based:
        scale_total = sum(counts.values())
        want = {c: want[c] / total * scale_total for c in want}
    inflows = []
    for c in (RV, BV):
        specs = [f for f in scenario.inflows if f.vehicle_class == c]
        if want[c] > 0 and counts[c] == 0:
            raise ConfigError(f"scenario has no {c} inflow to scale")
        factor = want[c] / counts[c] if counts[c] else 0.0
        if quota_based:
            quotas = _split(want[c], [f.max_vehicles for f in specs])
            inflows += [InflowSpec(f.entry_road, c, f.rate * factor, f.destination, q)
                        for f, q in zip(specs, quotas) if q > 0]
        else:
            inflows += [InflowSpec(f.entry_road, c, f.rate * factor, f.destination)
                        for f in specs]
    return dataclasses.replace(scenario, inflows=inflows)


def _split(n, weights):
    """Integer split of ``n`` proportional to ``weights`` (largest remainder)."""
    w = np.asarray(weights, dtype=float)
    if n == 0 or w.sum() == 0:
        return [0] * len(w)
    raw = n * w / w.sum()
    out = np.floor(raw).astype(int)
    for k in np.argsort(-(raw - out), kind="stable")[: n - out.sum()]:
        out[k] += 1
    return out.tolist()


def build_setup(config: ExperimentConfig, total=None, ratio=None):
    """``(network, partition, scenario)`` for one scenario cell."""
    total = config.total_vehicles if total is None else total
    ratio = config.rerouting_ratio if ratio is None else ratio
    if config.network is None:
        network, partition = desk_network()
    else:
        network, partition = read_network_file(config.network)
        if partition is None:
            raise ConfigError(f"{config.network}: network file has no fog_regions")
    if config.scenario is None:
        kwargs = {}
        if total is not None:
            kwargs["total_vehicles"] = total
        if ratio is not None:
            kwargs["rerouting_ratio"] = ratio
        scenario = desk_scenario(**kwargs)
    else:
        scenario = read_scenario_file(config.scenario)
        if total is not None or ratio is not None:
            counts = _class_counts(scenario)
            n = sum(counts.values()) if total is None else total
            r = counts[RV] / max(sum(counts.values()), 1) if ratio is None else ratio
            scenario = rescale_scenario(scenario, n, r)
    scenario = dataclasses.replace(scenario, seed=config.seed)
    scenario.validate(network)
    return network, partition, scenario


def make_env(config: ExperimentConfig, total=None, ratio=None, priority=None):
    network, partition, scenario = build_setup(config, total, ratio)
    router = EBkSPRouter(K=config.K, priority=priority or config.priority,
                         high_priority=config.high_priority,
                         popularity_objective=config.popularity_objective,
                         entropy_normalizer=config.entropy_normalizer)
    return ReroutingEnv(network, partition, scenario, router, config.t1, config.t2,
                        seed=config.seed, record_diagnostics=config.router_diagnostics)


def make_agent(config: ExperimentConfig) -> GAQAgent:
    return GAQAgent(**config.agent, warmup_episodes=config.warmup_episodes,
                    random_state=config.seed)


def rolling_cap_probability(hit_cap, window=CAP_WINDOW):
    """Fraction of cap-hitting episodes in the trailing ``window`` episodes, per episode."""
    h = np.asarray(hit_cap, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(h)])
    idx = np.arange(1, len(h) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


@dataclass
class MetricsSummary:
    """Per-episode series plus post-convergence means for one run or scenario cell."""

    rewards: list
    hit_cap: list
    mean_rv_speed: list
    label: str = ""
    ratio: float | None = None
    total: int | None = None
    cutoff: int = 0
    window: int = CAP_WINDOW

    @classmethod
    def from_records(cls, records, cutoff=0, **kw):
        return cls([r.reward for r in records], [bool(r.hit_cap) for r in records],
                   [r.mean_rv_speed for r in records], cutoff=cutoff, **kw)

    @property
    def n_episodes(self):
        return len(self.rewards)

    @property
    def cap_probability_series(self):
        return rolling_cap_probability(self.hit_cap, self.window)

    def _tail(self, series):
        tail = np.asarray(series, dtype=float)[self.cutoff:]
        return float(tail.mean()) if tail.size else float("nan")

    @property
    def mean_reward(self):
        return self._tail(self.rewards)

    @property
    def mean_speed(self):
        return self._tail(self.mean_rv_speed)

    @property
    def cap_probability(self):
        return self._tail(self.hit_cap)

    def row(self):
        return {"label": self.label, "ratio": self.ratio, "total": self.total,
                "episodes": self.n_episodes, "mean_reward": self.mean_reward,
                "mean_rv_speed": self.mean_speed, "cap_probability": self.cap_probability}


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)


def episode_rows(records):
    return [{"episode": r.episode, "mode": r.mode, "reward": r.reward, "steps": r.steps,
             "hit_cap": int(r.hit_cap), "mean_rv_speed": r.mean_rv_speed,
             "mean_loss": r.mean_loss, "epsilon": r.epsilon} for r in records]


def _cell_ratio_total(env: ReroutingEnv):
    counts = _class_counts(env.scenario)
    n = sum(counts.values())
    return (counts[RV] / n if n else 0.0), n


def _prepare_out(config: ExperimentConfig, kind):
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps({"command": kind, **config.to_dict()}, indent=2, sort_keys=True) + "\n")
    return out


def _write_diagnostics(out, name, env):
    if env.record_diagnostics:
        _write_csv(out / name, DIAGNOSTIC_COLUMNS,
                   [dict(zip(DIAGNOSTIC_COLUMNS, d)) for d in env.diagnostics])


def run_training(config: ExperimentConfig, write=True, callback=None):
    """Warm-up then training on one scenario cell.

    Returns ``(summary, agent)``; with ``write`` the run directory receives
    the config echo, ``episodes.csv``, ``summary.csv`` and ``checkpoint.npz``.
    """
    config.validate()
    env = make_env(config)
    agent = make_agent(config)
    agent.fit(env, n_episodes=config.episodes, callback=callback)
    ratio, total = _cell_ratio_total(env)
    summary = MetricsSummary.from_records(agent.history_, cutoff=config.episodes // 2,
                                          label=f"train-{config.priority}",
                                          ratio=ratio, total=total)
    if write:
        out = _prepare_out(config, "train")
        _write_csv(out / "episodes.csv", EPISODE_COLUMNS, episode_rows(agent.history_))
        _write_csv(out / "summary.csv", SUMMARY_COLUMNS, [summary.row()])
        save_checkpoint(out / "checkpoint.npz", agent.model_, agent.optimizer_,
                        meta={"config": config.to_dict(), "episodes": config.episodes})
        _write_diagnostics(out, "router_diagnostics.csv", env)
    return summary, agent


def evaluate_policy(env: ReroutingEnv, mode, n_episodes, agent=None, first_episode=0):
    """Run ``n_episodes`` of ``eval``, ``baseline`` or ``random`` episodes."""
    return [run_episode(env, agent, mode=mode, episode=first_episode + e)
            for e in range(n_episodes)]


def _grid(config: ExperimentConfig):
    ratios = [config.rerouting_ratio] if config.rerouting_ratio is not None else config.ratios
    totals = [config.total_vehicles] if config.total_vehicles is not None else config.totals
    return list(itertools.product(ratios, totals))


def _run_grid(config: ExperimentConfig, mode, agent=None, write=True):
    config.validate()
    summaries = []
    out = _prepare_out(config, mode if mode != "eval" else "test") if write else None
    for ratio, total in _grid(config):
        env = make_env(config, total=total, ratio=ratio)
        records = evaluate_policy(env, mode, config.test_episodes, agent)
        s = MetricsSummary.from_records(records, label=mode, ratio=ratio, total=total)
        summaries.append(s)
        if write:
            stem = f"r{ratio:g}_n{total:g}"
            _write_csv(out / f"episodes_{stem}.csv", EPISODE_COLUMNS, episode_rows(records))
            _write_diagnostics(out, f"router_diagnostics_{stem}.csv", env)
    if write:
        _write_csv(out / "summary.csv", SUMMARY_COLUMNS, [s.row() for s in summaries])
    return summaries


def run_test(config: ExperimentConfig, checkpoint, write=True):
    """Greedy evaluation of a saved model over the ratio x total grid, one row per cell."""
    model, _, _ = load_checkpoint(checkpoint)
    agent = make_agent(config).set_model(model)
    return _run_grid(config, "eval", agent, write)


def run_baseline(config: ExperimentConfig, write=True):
    """Density-only routing over the ratio x total grid; no agent, no training."""
    return _run_grid(config, "baseline", None, write)


def read_summary(path):
    """Load a ``summary.csv`` (or a run directory holding one) as a list of row dicts."""
    path = Path(path)
    if path.is_dir():
        path = path / "summary.csv"
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("ratio", "mean_reward", "mean_rv_speed", "cap_probability"):
            r[k] = float(r[k])
        r["total"] = int(float(r["total"]))
        r["episodes"] = int(r["episodes"])
    return rows


def compare(reports, labels=None):
    """Side-by-side metrics per scenario cell plus every pairwise delta.

    ``reports`` is a list of row lists (as from :func:`read_summary` or
    ``[s.row() for s in summaries]``); all must cover the same cells.
    """
    if len(reports) < 2:
        raise ValueError("compare needs at least two reports")
    labels = list(labels) if labels is not None else [f"run{i}" for i in range(len(reports))]
    if len(labels) != len(reports):
        raise ValueError("one label per report")
    keyed = []
    for rows in reports:
        cells = {(round(float(r["ratio"]), 9), int(r["total"])): r for r in rows}
        keyed.append(cells)
    cells = list(keyed[0])
    for k in keyed[1:]:
        if set(k) != set(cells):
            raise ValueError("reports cover different scenario grids")
    metrics = ("mean_reward", "mean_rv_speed", "cap_probability")
    table = []
    for cell in cells:
        row = {"ratio": cell[0], "total": cell[1]}
        for lab, k in zip(labels, keyed):
            for m in metrics:
                row[f"{lab}:{m}"] = float(k[cell][m])
        for (i, a), (j, b) in itertools.combinations(enumerate(labels), 2):
            for m in metrics:
                row[f"{b}-{a}:{m}"] = float(keyed[j][cell][m]) - float(keyed[i][cell][m])
        table.append(row)
    return table


def write_comparison(path, table):
    _write_csv(path, list(table[0]), table)


def format_table(table):
    """Plain-text rendering of a comparison table."""
    cols = list(table[0])
    cells = [[f"{r[c]:.4g}" if isinstance(r[c], float) else str(r[c]) for c in cols] for r in table]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)
