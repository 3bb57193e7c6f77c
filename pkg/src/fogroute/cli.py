"""Command-line entry point: ``fogroute train|test|baseline|compare``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiment import (ConfigError, ExperimentConfig, compare, format_table, load_config,
                         read_summary, run_baseline, run_test, run_training, write_comparison)
from .network import NetworkError
from .simulator import ScenarioError

log = logging.getLogger("fogroute")


def _common(p):
    p.add_argument("--config", help="experiment config JSON (default: built-in desk setup)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--priority", choices=["near", "far"], help="RV priority mode")
    p.add_argument("--ratio", type=float, help="rerouting ratio (RV share of all vehicles)")
    p.add_argument("--total", type=int, help="total vehicle count")
    p.add_argument("--episodes", type=int, help="override the episode count")
    p.add_argument("--quiet", action="store_true", help="only print the final summary")


def build_parser():
    parser = argparse.ArgumentParser(prog="fogroute", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("train", help="warm up, train, write log + checkpoint"))
    p = sub.add_parser("test", help="greedy evaluation of a checkpoint over the scenario grid")
    _common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint .npz from a training run")
    _common(sub.add_parser("baseline", help="density-only routing over the scenario grid"))
    p = sub.add_parser("compare", help="tabulate two or more run summaries")
    p.add_argument("runs", nargs="+", help="run directories or summary.csv files")
    p.add_argument("--labels", nargs="+", help="one label per run (default: directory names)")
    p.add_argument("--out", help="write the table to this CSV file")
    return parser


def config_from_args(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out = args.out
    if args.priority is not None:
        config.priority = args.priority
    if args.ratio is not None:
        config.rerouting_ratio = args.ratio
    if args.total is not None:
        config.total_vehicles = args.total
    if args.episodes is not None:
        config.episodes = args.episodes
        config.warmup_episodes = min(config.warmup_episodes, args.episodes)
    return config.validate()


def _print_rows(rows):
    for r in rows:
        print(f"{r['label']:>12}  ratio={r['ratio']:.2f}  total={r['total']}  "
              f"episodes={r['episodes']}  reward={r['mean_reward']:.2f}  "
              f"rv_speed={r['mean_rv_speed']:.3f}  cap_prob={r['cap_probability']:.3f}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(message)s")
    try:
        if args.command == "compare":
            labels = args.labels or [Path(r).resolve().name if Path(r).is_dir()
                                     else Path(r).resolve().parent.name for r in args.runs]
            table = compare([read_summary(r) for r in args.runs], labels)
            print(format_table(table))
            if args.out:
                write_comparison(args.out, table)
            return 0
        config = config_from_args(args)
        if args.command == "train":
            def progress(rec):
                if rec.episode % 10 == 0 or rec.episode == config.episodes - 1:
                    log.info("episode %d %s reward=%.1f steps=%d cap=%d eps=%.3f", rec.episode,
                             rec.mode, rec.reward, rec.steps, rec.hit_cap, rec.epsilon)
            summary, _ = run_training(config, callback=progress)
            _print_rows([summary.row()])
        elif args.command == "test":
            _print_rows([s.row() for s in run_test(config, args.checkpoint)])
        else:
            _print_rows([s.row() for s in run_baseline(config)])
        print(f"outputs written to {config.out}")
        return 0
    except (ConfigError, NetworkError, ScenarioError, ValueError, OSError) as exc:
        print(f"fogroute: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
