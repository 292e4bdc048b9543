"""Run configuration: schema, INI-style parsing, validation, serialization.

A config file has up to six sections (env, algo, graph, train, eval, io)
of key = value lines. Every key has a typed default; an empty file is the
full default configuration. Unknown sections or keys are rejected, as are
out-of-range values, each with the offending key and file named. The
special value ``log-rule`` for graph.k_past_self resolves to
ceil(ln(N * horizon)) for the configured environment's controlled agents.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields
from typing import Any, Callable

from .envs import GatherConfig, GatherEnv, TagConfig, TagEnv
from .tgraph import GraphParams, log_self_history_rule


class ConfigError(ValueError):
    """Invalid, unknown, or out-of-range configuration input."""


@dataclass
class TrainConfig:
    # [env]
    env_name: str = "gather"
    n_agents: int = 0          # 0 = environment default (gather 5, tag 10)
    horizon: int = 0           # 0 = environment default (gather 8, tag 100)
    n_goals: int = 3
    n_informed: int = 0        # 0 = max(1, round(0.4 * N))
    n_adversaries: int = 3
    n_obstacles: int = 2
    arena_half_width: float = 1.0
    pursuer_speed: float = 0.05
    adversary_speed: float = 0.065
    collision_radius: float = 0.1
    obstacle_radius: float = 0.2
    # [algo]
    algo_name: str = "tiger-mix"
    gru_hidden: int = 64
    mixing_embed: int = 32
    hypernet_hidden: int = 64
    time_dim: int = 16
    attn_dim: int = 32
    embed_dim: int = 32
    fusion_hidden: int = 64
    scorer_proj_dim: int = 32
    # [graph]
    k_stat_nbr: float = 0.5
    k_past_self: str = "1"     # nonnegative integer or "log-rule"
    k_past_nbr: int = 1
    # [train]
    total_steps: int = 50_000
    updates_per_episode: int = 1
    lr: float = 5e-4
    gamma: float = 0.99
    td_lambda: float = 0.8
    buffer_episodes: int = 5000
    batch_episodes: int = 32
    target_sync_interval: int = 200
    grad_clip_norm: float = 10.0
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_steps: int = 200_000
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    # [eval]
    eval_interval: int = 10_000
    eval_episodes: int = 32
    # [io]
    out_dir: str = "runs/latest"
    checkpoint_interval: int = 0   # env steps between checkpoints; 0 = final only


def _positive(x) -> bool:
    return x > 0


def _nonnegative(x) -> bool:
    return x >= 0


def _fraction(x) -> bool:
    return 0.0 <= x <= 1.0


def _unit_open(x) -> bool:
    return 0.0 <= x < 1.0


def _k_past_self_ok(s: str) -> bool:
    if s == "log-rule":
        return True
    try:
        return int(s) >= 0
    except ValueError:
        return False


def _parse_seeds(s: str) -> list[int]:
    return [int(tok) for tok in s.replace(" ", "").split(",") if tok]


@dataclass
class _Key:
    attr: str
    typ: Callable[[str], Any]
    check: Callable[[Any], bool] | None
    help: str


_SCHEMA: dict[str, dict[str, _Key]] = {
    "env": {
        "name": _Key("env_name", str, lambda s: s in ("gather", "tag"),
                     "benchmark: gather | tag"),
        "n_agents": _Key("n_agents", int, _nonnegative,
                         "controlled agents; 0 = env default (5 / 10)"),
        "horizon": _Key("horizon", int, _nonnegative,
                        "episode cap; 0 = env default (8 / 100)"),
        "n_goals": _Key("n_goals", int, lambda x: x >= 2, "gather: goal count"),
        "n_informed": _Key("n_informed", int, _nonnegative,
                           "gather: agents shown the optimal goal; 0 = 40% rule"),
        "n_adversaries": _Key("n_adversaries", int, _positive, "tag: evader count"),
        "n_obstacles": _Key("n_obstacles", int, _nonnegative, "tag: obstacle count"),
        "arena_half_width": _Key("arena_half_width", float, _positive,
                                 "tag: arena half-width"),
        "pursuer_speed": _Key("pursuer_speed", float, _positive,
                              "tag: pursuer step length"),
        "adversary_speed": _Key("adversary_speed", float, _positive,
                                "tag: evader step length (> pursuer_speed)"),
        "collision_radius": _Key("collision_radius", float, _positive,
                                 "tag: capture distance"),
        "obstacle_radius": _Key("obstacle_radius", float, _positive,
                                "tag: obstacle radius"),
    },
    "algo": {
        "name": _Key("algo_name", str, lambda s: s in ("vdn", "qmix", "tiger-mix"),
                     "learner: vdn | qmix | tiger-mix"),
        "gru_hidden": _Key("gru_hidden", int, _positive, "GRU hidden units per layer"),
        "mixing_embed": _Key("mixing_embed", int, _positive, "mixer layer width"),
        "hypernet_hidden": _Key("hypernet_hidden", int, _positive,
                                "hypernetwork hidden width"),
        "time_dim": _Key("time_dim", int, _positive, "time-code dimension"),
        "attn_dim": _Key("attn_dim", int, _positive, "temporal attention latent dim"),
        "embed_dim": _Key("embed_dim", int, _positive, "temporal embedding dim"),
        "fusion_hidden": _Key("fusion_hidden", int, _positive,
                              "encoder fusion hidden width"),
        "scorer_proj_dim": _Key("scorer_proj_dim", int, _positive,
                                "edge-scorer projection dim"),
    },
    "graph": {
        "k_stat_nbr": _Key("k_stat_nbr", float, _fraction,
                           "fraction of static edges kept, in [0, 1]"),
        "k_past_self": _Key("k_past_self", str, _k_past_self_ok,
                            "self-history depth: integer >= 0 or log-rule"),
        "k_past_nbr": _Key("k_past_nbr", int, _nonnegative,
                           "neighbor-history depth"),
    },
    "train": {
        "total_steps": _Key("total_steps", int, _positive, "environment steps to train"),
        "updates_per_episode": _Key("updates_per_episode", int, _positive,
                                    "learner updates per collected episode"),
        "lr": _Key("lr", float, _positive, "Adam learning rate"),
        "gamma": _Key("gamma", float, _unit_open, "discount factor in [0, 1)"),
        "td_lambda": _Key("td_lambda", float, _fraction, "TD(lambda) mixing weight"),
        "buffer_episodes": _Key("buffer_episodes", int, _positive,
                                "replay capacity in episodes"),
        "batch_episodes": _Key("batch_episodes", int, _positive,
                               "episodes sampled per update"),
        "target_sync_interval": _Key("target_sync_interval", int, _positive,
                                     "learner steps between target syncs"),
        "grad_clip_norm": _Key("grad_clip_norm", float, _positive,
                               "global gradient norm cap"),
        "eps_start": _Key("eps_start", float, _fraction, "initial exploration rate"),
        "eps_end": _Key("eps_end", float, _fraction, "final exploration rate"),
        "eps_anneal_steps": _Key("eps_anneal_steps", int, _positive,
                                 "env steps of linear annealing"),
        "seeds": _Key("seeds", _parse_seeds, lambda xs: len(xs) > 0,
                      "comma-separated trial seeds"),
    },
    "eval": {
        "interval": _Key("eval_interval", int, _positive,
                         "env steps between evaluations"),
        "episodes": _Key("eval_episodes", int, _positive,
                         "greedy episodes per evaluation"),
    },
    "io": {
        "out_dir": _Key("out_dir", str, None, "output directory"),
        "checkpoint_interval": _Key("checkpoint_interval", int, _nonnegative,
                                    "env steps between checkpoints; 0 = final only"),
    },
}

_ATTR_TO_SECTION_KEY = {
    spec.attr: (section, key)
    for section, keys in _SCHEMA.items()
    for key, spec in keys.items()
}


def parse_config_text(text: str, where: str = "<string>") -> TrainConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=where)
    except configparser.Error as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    cfg = TrainConfig()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{where}: unknown section [{section}]")
        for key, raw in parser.items(section):
            spec = _SCHEMA[section].get(key)
            if spec is None:
                raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
            try:
                value = spec.typ(raw)
            except ValueError as exc:
                raise ConfigError(
                    f"{where}: [{section}] {key} = {raw!r}: {exc}"
                ) from exc
            if spec.check is not None and not spec.check(value):
                raise ConfigError(
                    f"{where}: [{section}] {key} = {raw!r} is out of range "
                    f"({spec.help})"
                )
            setattr(cfg, spec.attr, value)
    _cross_validate(cfg, where)
    return cfg


def _cross_validate(cfg: TrainConfig, where: str) -> None:
    if cfg.env_name == "tag" and cfg.adversary_speed <= cfg.pursuer_speed:
        raise ConfigError(
            f"{where}: [env] adversary_speed must exceed pursuer_speed"
        )
    if cfg.eps_end > cfg.eps_start:
        raise ConfigError(f"{where}: [train] eps_end must not exceed eps_start")


def load_config(path) -> TrainConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, where=str(path))


def config_to_string(cfg: TrainConfig) -> str:
    parser = configparser.ConfigParser()
    for section, keys in _SCHEMA.items():
        parser[section] = {}
        for key, spec in keys.items():
            value = getattr(cfg, spec.attr)
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            parser[section][key] = str(value)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def save_config(cfg: TrainConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(config_to_string(cfg))


def help_config() -> str:
    lines = ["Configuration keys (INI sections; every key optional):", ""]
    defaults = TrainConfig()
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, spec in keys.items():
            value = getattr(defaults, spec.attr)
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            lines.append(f"  {key:<22} default={value!s:<14} {spec.help}")
        lines.append("")
    return "\n".join(lines)


def config_equal(a: TrainConfig, b: TrainConfig) -> bool:
    return all(getattr(a, f.name) == getattr(b, f.name) for f in fields(a))


# ---------------------------------------------------------------------------
# resolution into runtime objects
# ---------------------------------------------------------------------------

def make_env(cfg: TrainConfig):
    if cfg.env_name == "gather":
        return GatherEnv(GatherConfig(
            n_agents=cfg.n_agents or 5,
            horizon=cfg.horizon or 8,
            n_goals=cfg.n_goals,
            n_informed=cfg.n_informed,
        ))
    if cfg.env_name == "tag":
        return TagEnv(TagConfig(
            n_pursuers=cfg.n_agents or 10,
            n_adversaries=cfg.n_adversaries,
            horizon=cfg.horizon or 100,
            n_obstacles=cfg.n_obstacles,
            arena_half_width=cfg.arena_half_width,
            pursuer_speed=cfg.pursuer_speed,
            adversary_speed=cfg.adversary_speed,
            collision_radius=cfg.collision_radius,
            obstacle_radius=cfg.obstacle_radius,
        ))
    raise ConfigError(f"unknown environment {cfg.env_name!r}")


def resolve_graph_params(cfg: TrainConfig, n_agents: int, horizon: int) -> GraphParams:
    """Turn config graph keys into concrete depths for one environment.

    The log-rule depth is computed from the controlled-agent count.
    """
    if cfg.k_past_self == "log-rule":
        k_self = log_self_history_rule(n_agents, horizon)
    else:
        k_self = int(cfg.k_past_self)
    return GraphParams(k_stat_nbr=cfg.k_stat_nbr, k_past_self=k_self,
                       k_past_nbr=cfg.k_past_nbr)
