"""Command-line entry point: train / eval / ablate / stats / plot.

Experiment orchestration lives here: per-seed training loops with metrics
and checkpoints, cross-seed aggregation, the preconfigured ablation
grids, the graph-size calculator, and chart emission. Seeds run
sequentially inside one invocation; each owns a private environment and
RNG streams, so runs are reproducible bit-for-bit.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import os
import sys
import time

import numpy as np

from .checkpoint import load_trainer, save_trainer
from .config import (
    ConfigError,
    TrainConfig,
    config_to_string,
    help_config,
    load_config,
    make_env,
    resolve_graph_params,
)
from .envs import write_episode_trace
from .learner import Trainer
from .metrics import MetricsRow, MetricsWriter, read_metrics, write_aggregate
from .tgraph import GraphParams, episode_graph_stats

log = logging.getLogger("tiger")


def _setup_logging() -> None:
    level = os.environ.get("TIGER_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(message)s")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def run_seed(cfg: TrainConfig, seed: int, out_dir: str,
             resume_path: str | None = None) -> str:
    """Train one seed to cfg.total_steps; returns the metrics file path.

    Evaluation rows are emitted when the env-step counter crosses
    multiples of the eval interval (plus one row at step 0 for fresh
    runs). A checkpoint is written at the end, and every
    io.checkpoint_interval env steps when that is nonzero, so an
    interrupted run resumes into the identical continuation.
    """
    os.makedirs(out_dir, exist_ok=True)
    metrics_path = os.path.join(out_dir, f"metrics_seed{seed}.csv")
    ckpt_path = os.path.join(out_dir, f"ckpt_seed{seed}.bin")

    if resume_path is not None:
        trainer = load_trainer(resume_path)
        if trainer.seed != seed:
            raise ConfigError(
                f"checkpoint {resume_path} holds seed {trainer.seed}, expected {seed}")
        # everything but the step target must match the original run exactly
        total_steps = cfg.total_steps
        cfg = trainer.cfg
        cfg.total_steps = total_steps
        writer = MetricsWriter(metrics_path, append=True)
    else:
        trainer = Trainer(cfg, seed)
        writer = MetricsWriter(metrics_path, append=False)

    interval = cfg.eval_interval
    next_eval_at = (trainer.env_steps // interval + 1) * interval
    next_ckpt_at = None
    if cfg.checkpoint_interval > 0:
        next_ckpt_at = (trainer.env_steps // cfg.checkpoint_interval + 1) \
            * cfg.checkpoint_interval
    start = time.perf_counter()
    loss_sum = float(trainer.driver_state.get("loss_sum", 0.0))
    loss_n = int(trainer.driver_state.get("loss_n", 0))

    def save(path: str) -> None:
        save_trainer(path, trainer,
                     driver_state={"loss_sum": loss_sum, "loss_n": loss_n})

    def emit_row() -> None:
        nonlocal loss_sum, loss_n
        mean, std, _ = trainer.evaluate(cfg.eval_episodes)
        row = MetricsRow(
            env_steps=trainer.env_steps,
            train_loss=loss_sum / loss_n if loss_n else float("nan"),
            eval_metric=mean,
            eval_std=std,
            epsilon=trainer.schedule.value(trainer.env_steps),
            wall_seconds=time.perf_counter() - start,
            seed=seed,
        )
        writer.write(row)
        log.info("seed %d  steps %d  eval %.4f (%.4f)  eps %.3f",
                 seed, row.env_steps, mean, std, row.epsilon)
        loss_sum, loss_n = 0.0, 0

    try:
        if trainer.env_steps == 0:
            emit_row()
        while trainer.env_steps < cfg.total_steps:
            ep = trainer.collect_episode()
            trainer.buffer.add(ep)
            for _ in range(cfg.updates_per_episode):
                loss = trainer.train_step()
                if loss is None:
                    break
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"seed {seed}: non-finite loss at step {trainer.env_steps}")
                loss_sum += loss
                loss_n += 1
            if trainer.env_steps >= next_eval_at:
                emit_row()
                next_eval_at = (trainer.env_steps // interval + 1) * interval
            if next_ckpt_at is not None and trainer.env_steps >= next_ckpt_at:
                save(ckpt_path)
                next_ckpt_at = (trainer.env_steps // cfg.checkpoint_interval + 1) \
                    * cfg.checkpoint_interval
        save(ckpt_path)
    finally:
        writer.close()
    return metrics_path


def run_train(cfg: TrainConfig, resume_path: str | None = None) -> int:
    out_dir = cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.ini"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(config_to_string(cfg))
    if resume_path is not None and len(cfg.seeds) != 1:
        raise ConfigError("--resume requires exactly one seed")
    metric_files = []
    for seed in cfg.seeds:
        metric_files.append(run_seed(cfg, seed, out_dir, resume_path))
    per_seed = [read_metrics(p) for p in metric_files]
    write_aggregate(os.path.join(out_dir, "aggregate.csv"), per_seed)
    log.info("wrote %d per-seed metrics files and aggregate.csv to %s",
             len(metric_files), out_dir)
    return 0


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------

_STUDY_GRIDS = {
    "1": {"k_stat_nbr": ["0.1", "0.5", "0.9"]},
    "2": {"k_past_self": ["0", "1", "log-rule"]},
    "3": {"k_past_nbr": ["0", "1", "2"]},
    "4": {
        "k_stat_nbr": ["0.1", "0.5", "0.9"],
        "k_past_self": ["0", "1", "log-rule"],
        "k_past_nbr": ["0", "1", "2"],
    },
}

_GRID_KEYS = ("k_stat_nbr", "k_past_self", "k_past_nbr")


def parse_grid(spec: str) -> dict[str, list[str]]:
    """Parse 'k_stat_nbr=0.1,0.5;k_past_nbr=0,1' into an ordered grid."""
    grid: dict[str, list[str]] = {}
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"grid entry {part!r} is not name=v1,v2,...")
        name, vals = part.split("=", 1)
        name = name.strip()
        if name not in _GRID_KEYS:
            raise ConfigError(f"unknown grid parameter {name!r}; "
                              f"expected one of {_GRID_KEYS}")
        values = [v.strip() for v in vals.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"grid parameter {name!r} has no values")
        grid[name] = values
    if not grid:
        raise ConfigError("empty ablation grid")
    return grid


def _apply_cell(cfg: TrainConfig, cell: dict[str, str]) -> TrainConfig:
    import copy

    out = copy.deepcopy(cfg)
    if "k_stat_nbr" in cell:
        out.k_stat_nbr = float(cell["k_stat_nbr"])
    if "k_past_self" in cell:
        out.k_past_self = cell["k_past_self"]
    if "k_past_nbr" in cell:
        out.k_past_nbr = int(cell["k_past_nbr"])
    return out


def run_ablate(cfg: TrainConfig, grid: dict[str, list[str]]) -> int:
    """Cartesian sweep over graph parameters; one train run per cell.

    Emits a summary table of the final aggregate metric as "mean (std)"
    per cell (std across seeds), plus summary.csv in the output dir.
    """
    base_out = cfg.out_dir
    os.makedirs(base_out, exist_ok=True)
    names = list(grid)
    results = []
    for combo in itertools.product(*(grid[n] for n in names)):
        cell = dict(zip(names, combo))
        cell_cfg = _apply_cell(cfg, cell)
        tag = "_".join(f"{n}-{v}" for n, v in cell.items())
        cell_cfg.out_dir = os.path.join(base_out, tag)
        log.info("ablation cell %s", tag)
        run_train(cell_cfg)
        per_seed = [read_metrics(os.path.join(cell_cfg.out_dir,
                                              f"metrics_seed{s}.csv"))
                    for s in cell_cfg.seeds]
        finals = np.array([rows[-1].eval_metric for rows in per_seed])
        results.append((cell, float(finals.mean()), float(finals.std())))

    lines = ["ablation summary (final metric, std across seeds):"]
    for cell, mean, std in results:
        desc = " ".join(f"{n}={v}" for n, v in cell.items())
        lines.append(f"  {desc}: {mean:.4f} ({std:.4f})")
    print("\n".join(lines))
    with open(os.path.join(base_out, "summary.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(",".join(names) + ",mean,std\n")
        for cell, mean, std in results:
            fh.write(",".join(cell[n] for n in names) + f",{mean!r},{std!r}\n")
    return 0


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def format_stats(n_agents: int, horizon: int, params: GraphParams) -> str:
    s = episode_graph_stats(n_agents, horizon, params)
    return "\n".join([
        f"temporal graph stats (N={n_agents}, T={horizon}, "
        f"k_stat_nbr={params.k_stat_nbr}, k_past_self={params.k_past_self}, "
        f"k_past_nbr={params.k_past_nbr})",
        f"  nodes: {s.nodes}",
        f"  static edges per step (full graph): {s.static_edges_per_step_full}",
        f"  static edges per episode (full graph): {s.static_edges_episode_full}",
        f"  self-history edges per episode (unbounded): "
        f"{s.self_history_total_unbounded}",
        f"  neighbor-history edges per episode (unbounded): "
        f"{s.nbr_history_total_unbounded}",
        f"  static edges per step (kept): {s.static_edges_per_step_kept}",
        f"  static edges per episode (kept): {s.static_edges_episode_kept}",
        f"  self-history edges per episode (bounded): "
        f"{s.self_history_total_bounded}",
        f"  neighbor-history edges per episode (bounded): "
        f"{s.nbr_history_total_bounded}",
        f"  per-agent neighborhood size (pooled reading): "
        f"{s.eq5_neighborhood_size}",
        f"  log-rule self-history depth: {s.log_rule_depth}",
    ])


def run_stats(n_agents: int, horizon: int, params: GraphParams) -> int:
    print(format_stats(n_agents, horizon, params))
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def run_eval(ckpt: str, episodes: int, trace_path: str | None) -> int:
    trainer = load_trainer(ckpt)
    mean, std, values = trainer.evaluate(episodes)
    metric = "win_rate" if trainer.cfg.env_name == "gather" else "return"
    print(f"eval over {episodes} episodes: {metric} mean={mean!r} std={std!r}")
    if trace_path:
        env = make_env(trainer.cfg)
        ss = np.random.SeedSequence([trainer.seed, 0x7ACE])
        erng, arng = [np.random.default_rng(s) for s in ss.spawn(2)]
        for _ in range(episodes):
            ep = trainer.play_episode(env, erng, arng, epsilon=0.0)
            records = [
                {"t": t, "actions": ep.actions[t].tolist(),
                 "reward": float(ep.rewards[t]),
                 "terminated": bool(ep.terminated[t])}
                for t in range(ep.length)
            ]
            write_episode_trace(trace_path, records)
        print(f"wrote episode traces to {trace_path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _load_cfg(args) -> TrainConfig:
    cfg = load_config(args.config) if args.config else TrainConfig()
    if getattr(args, "seed", None):
        cfg.seeds = [int(s) for s in args.seed.split(",")]
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "steps", None):
        cfg.total_steps = args.steps
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="configuration file path")
    p.add_argument("--seed", help="comma-separated seed list override")
    p.add_argument("--out", help="output directory override")
    p.add_argument("--steps", type=int, help="total env steps override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiger",
        description="temporal-graph multi-agent Q-learning experiments")
    parser.add_argument("--help-config", action="store_true",
                        help="print the full configuration key reference and exit")
    sub = parser.add_subparsers(dest="command")

    p_train = sub.add_parser("train", help="run training for each configured seed")
    _add_common(p_train)
    p_train.add_argument("--resume", help="checkpoint to continue from")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint greedily")
    p_eval.add_argument("--ckpt", required=True, help="checkpoint file")
    p_eval.add_argument("--episodes", type=int, default=32)
    p_eval.add_argument("--trace", help="write episode traces to this JSONL file")

    p_abl = sub.add_parser("ablate", help="sweep graph parameters over a grid")
    _add_common(p_abl)
    p_abl.add_argument("--study", choices=sorted(_STUDY_GRIDS),
                       help="preconfigured grid (1: static fraction, "
                            "2: self depth, 3: neighbor depth, 4: full product)")
    p_abl.add_argument("--grid", help="custom grid, e.g. 'k_stat_nbr=0.1,0.5'")

    p_stats = sub.add_parser("stats", help="print temporal graph size accounting")
    p_stats.add_argument("--agents", type=int, required=True)
    p_stats.add_argument("--horizon", type=int, required=True)
    p_stats.add_argument("--k-stat-nbr", type=float, default=0.5)
    p_stats.add_argument("--k-past-self", default="1")
    p_stats.add_argument("--k-past-nbr", type=int, default=1)

    p_plot = sub.add_parser("plot", help="render learning curves with std bands")
    p_plot.add_argument("inputs", nargs="+", help="aggregate.csv files to plot")
    p_plot.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.help_config:
        print(help_config())
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        if args.command == "train":
            return run_train(_load_cfg(args), resume_path=args.resume)
        if args.command == "eval":
            return run_eval(args.ckpt, args.episodes, args.trace)
        if args.command == "ablate":
            cfg = _load_cfg(args)
            if args.study:
                grid = _STUDY_GRIDS[args.study]
            elif args.grid:
                grid = parse_grid(args.grid)
            else:
                raise ConfigError("ablate needs --study or --grid")
            return run_ablate(cfg, grid)
        if args.command == "stats":
            if args.k_past_self == "log-rule":
                from .tgraph import log_self_history_rule

                k_self = log_self_history_rule(args.agents, args.horizon)
            else:
                k_self = int(args.k_past_self)
            params = GraphParams(k_stat_nbr=args.k_stat_nbr, k_past_self=k_self,
                                 k_past_nbr=args.k_past_nbr)
            return run_stats(args.agents, args.horizon, params)
        if args.command == "plot":
            chart, data = plot_cmd(args.inputs, args.out)
            print(f"wrote {chart} and {data}")
            return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


def plot_cmd(inputs: list[str], out: str) -> tuple[str, str]:
    from .plotting import plot_runs

    return plot_runs(inputs, out)


if __name__ == "__main__":
    sys.exit(main())
