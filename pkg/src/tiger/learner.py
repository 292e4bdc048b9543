"""Training engine: episode collection, replay, TD(lambda) targets,
double-network updates with periodic target sync, and evaluation.

The learner unrolls whole episodes time-major. During replay it
recomputes hidden states, temporal graphs, and embeddings from the stored
observations with the current parameters; history rows entering the
temporal encoder are treated as constants, so backprop reaches one
timestep deep through the graph while still flowing through the full GRU
chain. Targets come exclusively from the target copies; the online
networks contribute only the per-agent argmax actions (double-Q).

Batched forward passes share the exact math of the per-agent reference
path in :mod:`tiger.tgat`, expressed with segment ops over one flat
(batch * agent) row space.
"""

from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from . import tgat, tgraph
from .config import TrainConfig, make_env, resolve_graph_params
from .diffcore import Adam, Tensor, clip_global_norm
from .envs.base import StepResult
from .marl import AgentNet, MixerParams, qmix_mix, select_actions, tiger_mix, vdn_mix
from .tgat import NodeHistory, TgatParams, TimeEncoderParams, time_encode_many
from .tgraph import GatScorer, GraphParams


@dataclass
class EpisodeBatch:
    """Time-major record of one complete episode."""

    obs: np.ndarray         # (T+1, N, obs_dim)
    state: np.ndarray       # (T+1, state_dim)
    actions: np.ndarray     # (T, N)
    rewards: np.ndarray     # (T,)
    terminated: np.ndarray  # (T,) bool; True exactly at the final step
    hiddens: np.ndarray     # (T, N, 2, H) recurrent states used at each step
    length: int
    ep_return: float
    won: bool


class ReplayBuffer:
    """FIFO ring of the most recent complete episodes."""

    def __init__(self, capacity: int = 5000):
        self.capacity = capacity
        self._ring: deque[EpisodeBatch] = deque(maxlen=capacity)

    def add(self, ep: EpisodeBatch) -> None:
        self._ring.append(ep)

    def __len__(self) -> int:
        return len(self._ring)

    def sample(self, rng: np.random.Generator, k: int) -> list[EpisodeBatch]:
        idx = rng.choice(len(self._ring), size=k, replace=False)
        return [self._ring[int(i)] for i in idx]

    def episodes(self) -> list[EpisodeBatch]:
        return list(self._ring)


@dataclass
class Schedule:
    """Linearly annealed exploration rate, clamped at the end value."""

    eps_start: float = 1.0
    eps_end: float = 0.05
    anneal_steps: int = 200_000

    def value(self, step: int) -> float:
        if step < 0:
            raise ValueError(f"step must be nonnegative, got {step}")
        frac = min(1.0, step / self.anneal_steps)
        return self.eps_start + (self.eps_end - self.eps_start) * frac


def epsilon_at(schedule: Schedule, step: int) -> float:
    return schedule.value(step)


@dataclass
class TdLambdaConfig:
    gamma: float = 0.99
    lam: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0 and self.gamma != 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")


def td_lambda_targets(rewards: np.ndarray, bootstrap: np.ndarray,
                      terminated: np.ndarray, cfg: TdLambdaConfig) -> np.ndarray:
    """Backward recursion y_t = r_t + g*(1-done)*[(1-lam)*boot_t + lam*y_{t+1}].

    bootstrap[t] is the target-network joint value at s_{t+1}; entries at
    terminal steps are ignored. Works on (T,) or (T, B) arrays.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    y = np.zeros_like(rewards)
    next_y = np.zeros_like(rewards[0])
    cont = 1.0 - np.asarray(terminated, dtype=np.float64)
    for t in range(rewards.shape[0] - 1, -1, -1):
        y[t] = rewards[t] + cfg.gamma * cont[t] * (
            (1.0 - cfg.lam) * bootstrap[t] + cfg.lam * next_y
        )
        next_y = y[t]
    return y


# ---------------------------------------------------------------------------
# model bundle
# ---------------------------------------------------------------------------

@dataclass
class ModelSet:
    """All learnable pieces for one algorithm variant."""

    algo: str
    n_agents: int
    agent: AgentNet
    mixer: MixerParams | None = None
    scorer: GatScorer | None = None
    scorer_proj: Tensor | None = None
    scorer_attn: Tensor | None = None
    time: TimeEncoderParams | None = None
    tgat: TgatParams | None = None

    @classmethod
    def build(cls, cfg: TrainConfig, env, rng: np.random.Generator) -> "ModelSet":
        algo = cfg.algo_name
        n = env.n_agents
        use_graph = algo == "tiger-mix"
        agent = AgentNet.create(rng, env.obs_dim, env.n_actions,
                                hidden_dim=cfg.gru_hidden,
                                embed_dim=cfg.embed_dim if use_graph else 0)
        ms = cls(algo=algo, n_agents=n, agent=agent)
        if algo == "qmix":
            ms.mixer = MixerParams.create(rng, n, env.state_dim,
                                          embed=cfg.mixing_embed,
                                          hyper_hidden=cfg.hypernet_hidden)
        elif algo == "tiger-mix":
            ms.mixer = MixerParams.create(rng, n, env.state_dim + n * cfg.embed_dim,
                                          embed=cfg.mixing_embed,
                                          hyper_hidden=cfg.hypernet_hidden)
            proj = dc.param(dc.init_uniform(rng, cfg.gru_hidden, cfg.scorer_proj_dim))
            attn = dc.param(dc.init_uniform(rng, 2 * cfg.scorer_proj_dim, 1))
            # the scorer reads the same arrays the optimizer owns
            ms.scorer = GatScorer(proj=proj.data, attn=attn.data)
            ms.scorer_proj = proj
            ms.scorer_attn = attn
            ms.time = TimeEncoderParams.create(rng, cfg.time_dim)
            ms.tgat = TgatParams.create(rng, d0=cfg.gru_hidden, d_time=cfg.time_dim,
                                        d_attn=cfg.attn_dim, obs_dim=env.obs_dim,
                                        fusion_hidden=cfg.fusion_hidden,
                                        embed_dim=cfg.embed_dim)
        elif algo != "vdn":
            raise ValueError(f"unknown algorithm {algo!r}")
        return ms

    def named_params(self) -> dict[str, Tensor]:
        out = self.agent.named("agent")
        if self.mixer is not None:
            out.update(self.mixer.named("mixer"))
        if self.scorer_proj is not None:
            out["scorer.proj"] = self.scorer_proj
            out["scorer.attn"] = self.scorer_attn
        if self.time is not None:
            out.update(self.time.named("time"))
        if self.tgat is not None:
            out.update(self.tgat.named("tgat"))
        return out

    def clone(self) -> "ModelSet":
        dup = copy.deepcopy(self)
        if dup.scorer is not None:
            # re-tie the scorer views to the copied tensors
            dup.scorer = GatScorer(proj=dup.scorer_proj.data, attn=dup.scorer_attn.data)
        return dup

    def sync_from(self, src: "ModelSet") -> None:
        mine = self.named_params()
        theirs = src.named_params()
        for name, p in mine.items():
            p.data[...] = theirs[name].data


# ---------------------------------------------------------------------------
# trainer
# ---------------------------------------------------------------------------

@dataclass
class _UnrollOut:
    qs: list[Tensor]            # per step (B*N, A)
    h2s: list[Tensor]           # per step (B*N, H)
    embs: list[Tensor | None]   # per step (B*N, E) for tiger, else None
    graphs: list[np.ndarray | None]  # per step (B, kept) pruned pair indices


@dataclass
class _BatchArrays:
    """Padded time-major views of one sampled episode batch."""

    batch: int
    t_max: int
    obs_steps: list[np.ndarray]  # per step (B*N, obs_dim)
    states: np.ndarray           # (T+1, B, state_dim)
    actions: np.ndarray          # (T, B, N)
    rewards: np.ndarray          # (T, B)
    done: np.ndarray             # (T, B) 1.0 at/after termination
    valid: np.ndarray            # (T, B) 1.0 inside the episode


class Trainer:
    """One seed's training run; owns env, rng streams, models, and buffer."""

    def __init__(self, cfg: TrainConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.env = make_env(cfg)
        self.n_agents = self.env.n_agents
        self.graph_params = resolve_graph_params(cfg, self.env.n_agents,
                                                 self.env.horizon)
        self.use_graph = cfg.algo_name == "tiger-mix"
        streams = np.random.SeedSequence(seed).spawn(4)
        self.init_rng = np.random.default_rng(streams[0])
        self.env_rng = np.random.default_rng(streams[1])
        self.action_rng = np.random.default_rng(streams[2])
        self.sample_rng = np.random.default_rng(streams[3])
        self.models = ModelSet.build(cfg, self.env, self.init_rng)
        self.targets = self.models.clone()
        self.opt = Adam(self.models.named_params(), lr=cfg.lr)
        self.schedule = Schedule(cfg.eps_start, cfg.eps_end, cfg.eps_anneal_steps)
        self.td_cfg = TdLambdaConfig(cfg.gamma, cfg.td_lambda)
        self.buffer = ReplayBuffer(cfg.buffer_episodes)
        self.env_steps = 0
        self.learner_steps = 0
        self.eval_count = 0
        self.driver_state: dict = {}
        self._pair_i, self._pair_j = tgraph.pair_index_arrays(self.n_agents)
        self._max_depth = max(self.graph_params.k_past_self,
                              self.graph_params.k_past_nbr)

    # -- rollout -----------------------------------------------------------

    def collect_episode(self) -> EpisodeBatch:
        """Roll one episode with the online nets and the global-step epsilon."""
        return self._rollout(self.env, self.env_rng, self.action_rng,
                             epsilon=None, count_steps=True)

    def _rollout(self, env, env_rng, action_rng, epsilon: float | None,
                 count_steps: bool) -> EpisodeBatch:
        n = self.n_agents
        models = self.models
        res: StepResult = env.reset(env_rng)
        obs_l = [res.observations.copy()]
        state_l = [res.global_state.copy()]
        act_l, rew_l, done_l, hid_l = [], [], [], []
        won = False
        t = 0
        with dc.no_grad():
            h1, h2 = models.agent.init_hidden(n)
            hist = NodeHistory(n, models.agent.hidden_dim)
            while True:
                obs = dc.const(res.observations)
                h1, h2 = models.agent.recur(obs, (h1, h2))
                hist.record(h2.data)
                emb = None
                if self.use_graph:
                    attn = tgraph.score_edges(models.scorer, h2.data)
                    edges = tgraph.prune_topk(attn, self.graph_params.k_stat_nbr)
                    graph = tgraph.build_temporal_neighborhood(
                        edges, t, self.graph_params, n)
                    emb = dc.const(tgat.encode_all(graph, hist, res.observations,
                                                   models.time, models.tgat))
                q = models.agent.q_values(h2, emb).data
                eps = self.schedule.value(self.env_steps) if epsilon is None else epsilon
                actions = select_actions(q, eps, action_rng)
                hid_l.append(np.stack([h1.data, h2.data], axis=1))
                res = env.step(actions)
                if count_steps:
                    self.env_steps += 1
                obs_l.append(res.observations.copy())
                state_l.append(res.global_state.copy())
                act_l.append(actions)
                rew_l.append(res.reward)
                done_l.append(res.terminated)
                won = won or bool(res.info.get("won", False))
                t += 1
                if res.terminated:
                    break
        return EpisodeBatch(
            obs=np.stack(obs_l),
            state=np.stack(state_l),
            actions=np.stack(act_l),
            rewards=np.array(rew_l),
            terminated=np.array(done_l, dtype=bool),
            hiddens=np.stack(hid_l),
            length=t,
            ep_return=float(sum(rew_l)),
            won=won,
        )

    def play_episode(self, env, env_rng, action_rng,
                     epsilon: float = 0.0) -> EpisodeBatch:
        """Roll one episode on a caller-owned env without touching counters."""
        return self._rollout(env, env_rng, action_rng, epsilon=epsilon,
                             count_steps=False)

    def evaluate(self, n_episodes: int) -> tuple[float, float, list[float]]:
        """Greedy evaluation on fresh env instances; returns (mean, std, values).

        The metric is win rate for Gather (fraction of episodes ending in
        the all-on-optimal event) and episode return for Tag.
        """
        eval_env = make_env(self.cfg)
        ss = np.random.SeedSequence([self.seed, 0x5EED, self.eval_count])
        erng, arng = [np.random.default_rng(s) for s in ss.spawn(2)]
        self.eval_count += 1
        values = []
        for _ in range(n_episodes):
            ep = self._rollout(eval_env, erng, arng, epsilon=0.0, count_steps=False)
            values.append(float(ep.won) if self.cfg.env_name == "gather"
                          else ep.ep_return)
        arr = np.array(values)
        return float(arr.mean()), float(arr.std()), values

    # -- batched forward ---------------------------------------------------

    def _unroll(self, models: ModelSet, obs_steps: list[np.ndarray],
                batch: int) -> _UnrollOut:
        """Time-major forward over (batch * n_agents) rows for all steps."""
        n = self.n_agents
        rows = batch * n
        h1, h2 = models.agent.init_hidden(rows)
        hist: list[np.ndarray] = []
        phi_table = None
        if self.use_graph:
            phi_table = time_encode_many(
                models.time, np.arange(self._max_depth + 1, dtype=np.float64))
        out = _UnrollOut(qs=[], h2s=[], embs=[], graphs=[])
        for t, obs_np in enumerate(obs_steps):
            obs = dc.const(obs_np)
            h1, h2 = models.agent.recur(obs, (h1, h2))
            emb = None
            keep = None
            if self.use_graph:
                emb, keep = self._encode_batch(models, phi_table, h2, hist,
                                               obs, t, batch)
            hist.append(h2.data)
            out.qs.append(models.agent.q_values(h2, emb))
            out.h2s.append(h2)
            out.embs.append(emb)
            out.graphs.append(keep)
        return out

    def _encode_batch(self, models: ModelSet, phi_table: Tensor, h2: Tensor,
                      hist: list[np.ndarray], obs: Tensor, t: int,
                      batch: int) -> tuple[Tensor, np.ndarray]:
        """Segment-vectorized temporal encoder across all (sample, agent) rows.

        Same math as the per-agent reference path: static rows gather from
        the live current-step hidden tensor (gradients flow), history rows
        come from recorded step data (constants).
        """
        n = self.n_agents
        rows = batch * n
        gp = self.graph_params
        feats = h2.data.reshape(batch, n, -1)
        attn = tgraph._score_batch(models.scorer, feats)
        keep = tgraph.prune_topk_batch(attn, gp.k_stat_nbr)
        base = (np.arange(batch) * n)[:, None]
        row_i = (base + self._pair_i[keep]).ravel()
        row_j = (base + self._pair_j[keep]).ravel()
        seg_cur = np.concatenate([row_i, row_j])
        src_cur = np.concatenate([row_j, row_i])

        seg_blocks = [seg_cur]
        delta_blocks = [np.zeros(seg_cur.size, dtype=np.int64)]
        past_blocks: list[np.ndarray] = []
        for d in range(1, min(gp.k_past_self, t) + 1):
            seg_blocks.append(np.arange(rows, dtype=np.int64))
            delta_blocks.append(np.full(rows, d, dtype=np.int64))
            past_blocks.append(hist[t - d])
        for d in range(1, min(gp.k_past_nbr, t) + 1):
            seg_blocks.append(seg_cur)
            delta_blocks.append(np.full(seg_cur.size, d, dtype=np.int64))
            past_blocks.append(hist[t - d][src_cur])

        seg_all = np.concatenate(seg_blocks)
        delta_all = np.concatenate(delta_blocks)
        cur_embed = dc.take_rows(h2, src_cur)
        if past_blocks:
            embeds = dc.concat_rows([cur_embed, dc.const(np.concatenate(past_blocks))])
        else:
            embeds = cur_embed
        phi_nbr = dc.take_rows(phi_table, delta_all)
        z_nbr = dc.concat_cols([embeds, phi_nbr])
        z_self = dc.concat_cols(
            [h2, dc.take_rows(phi_table, np.zeros(rows, dtype=np.int64))])
        q = dc.matmul(z_self, models.tgat.query_proj)
        k = dc.matmul(z_nbr, models.tgat.key_proj)
        v = dc.matmul(z_nbr, models.tgat.value_proj)
        scores = dc.rows_dot(dc.take_rows(q, seg_all), k)
        alpha = dc.segment_softmax(scores, seg_all, rows)
        msg = dc.segment_sum(dc.mul(alpha, v), seg_all, rows)
        return tgat.fuse(models.tgat, msg, obs), keep

    def _mix(self, models: ModelSet, q_chosen: Tensor, state: Tensor,
             emb: Tensor | None, batch: int) -> Tensor:
        if models.algo == "vdn":
            return vdn_mix(q_chosen)
        if models.algo == "qmix":
            return qmix_mix(q_chosen, state, models.mixer)
        emb_flat = dc.reshape(emb, batch, self.n_agents * models.agent.embed_dim)
        return tiger_mix(q_chosen, state, emb_flat, models.mixer)

    # -- update ------------------------------------------------------------

    def train_step(self) -> float | None:
        """One update from a sampled batch; None while the buffer warms up."""
        cfg = self.cfg
        if len(self.buffer) < cfg.batch_episodes:
            return None
        batch_eps = self.buffer.sample(self.sample_rng, cfg.batch_episodes)
        loss = self._update_on(batch_eps)
        self.learner_steps += 1
        if self.learner_steps % cfg.target_sync_interval == 0:
            self.sync_targets()
        return loss

    def batch_arrays(self, batch_eps: list[EpisodeBatch]) -> "_BatchArrays":
        """Pad a batch of episodes into time-major training arrays."""
        b = len(batch_eps)
        n = self.n_agents
        t_max = max(ep.length for ep in batch_eps)
        obs_steps = [np.zeros((b * n, self.env.obs_dim)) for _ in range(t_max)]
        states = np.zeros((t_max + 1, b, self.env.state_dim))
        acts = np.zeros((t_max, b, n), dtype=np.int64)
        rewards = np.zeros((t_max, b))
        done = np.ones((t_max, b))
        valid = np.zeros((t_max, b))
        for e, ep in enumerate(batch_eps):
            for t in range(ep.length):
                obs_steps[t][e * n : (e + 1) * n] = ep.obs[t]
            states[: ep.length + 1, e] = ep.state
            acts[: ep.length, e] = ep.actions
            rewards[: ep.length, e] = ep.rewards
            done[: ep.length, e] = ep.terminated[: ep.length]
            valid[: ep.length, e] = 1.0
        return _BatchArrays(batch=b, t_max=t_max, obs_steps=obs_steps,
                            states=states, actions=acts, rewards=rewards,
                            done=done, valid=valid)

    def compute_targets(self, arrays: "_BatchArrays",
                        online_q_data: list[np.ndarray] | None = None) -> np.ndarray:
        """(T, B) targets from the target nets, with online argmax actions."""
        b, n, t_max = arrays.batch, self.n_agents, arrays.t_max
        with dc.no_grad():
            if online_q_data is None:
                online_q_data = [q.data for q in
                                 self._unroll(self.models, arrays.obs_steps, b).qs]
            target = self._unroll(self.targets, arrays.obs_steps, b)
            boot = np.zeros((t_max, b))
            for t in range(1, t_max):
                a_star = online_q_data[t].argmax(axis=1)
                qt = dc.const(
                    target.qs[t].data[np.arange(b * n), a_star].reshape(b, n))
                qtot = self._mix(self.targets, qt, dc.const(arrays.states[t]),
                                 target.embs[t], b)
                boot[t - 1] = qtot.data[:, 0]
        return td_lambda_targets(arrays.rewards, boot, arrays.done, self.td_cfg)

    def _mix_loss(self, online: _UnrollOut, arrays: "_BatchArrays",
                  y: np.ndarray):
        """Masked mean squared TD error of the online joint values."""
        b, n, t_max = arrays.batch, self.n_agents, arrays.t_max
        qtot_steps = []
        for t in range(t_max):
            q_chosen = dc.reshape(
                dc.take_per_row(online.qs[t], arrays.actions[t].reshape(b * n)),
                b, n)
            qtot_steps.append(self._mix(self.models, q_chosen,
                                        dc.const(arrays.states[t]),
                                        online.embs[t], b))
        qtot_all = dc.concat_rows(qtot_steps)
        y_all = dc.const(y.reshape(t_max * b, 1))
        mask = dc.const(arrays.valid.reshape(t_max * b, 1))
        diff = dc.sub(qtot_all, y_all)
        n_valid = float(arrays.valid.sum())
        return dc.scale(dc.sum_all(dc.mul(dc.mul(diff, diff), mask)), 1.0 / n_valid)

    def loss_forward(self, arrays: "_BatchArrays", y: np.ndarray):
        """Full online forward to the scalar TD loss against fixed targets."""
        online = self._unroll(self.models, arrays.obs_steps, arrays.batch)
        return self._mix_loss(online, arrays, y)

    def _update_on(self, batch_eps: list[EpisodeBatch]) -> float:
        cfg = self.cfg
        arrays = self.batch_arrays(batch_eps)
        online = self._unroll(self.models, arrays.obs_steps, arrays.batch)
        y = self.compute_targets(arrays, [q.data for q in online.qs])
        loss = self._mix_loss(online, arrays, y)

        dc.backward(loss)
        params = self.opt.params
        names = list(params)
        raw = [params[k].grad if params[k].grad is not None
               else np.zeros_like(params[k].data) for k in names]
        clipped, _ = clip_global_norm(raw, cfg.grad_clip_norm)
        self.opt.step(dict(zip(names, clipped)))
        for p in params.values():
            p.zero_grad()
        dc.clear_tape()
        return float(loss.data[0, 0])

    def sync_targets(self) -> None:
        """Hard-copy every online parameter into the target copies."""
        self.targets.sync_from(self.models)

    # -- persistence -------------------------------------------------------

    def state_snapshot(self) -> dict:
        """Everything beyond parameters needed to resume bit-identically."""
        return {
            "env_steps": self.env_steps,
            "learner_steps": self.learner_steps,
            "eval_count": self.eval_count,
            "adam_t": self.opt.t,
            "rng": {
                "env": self.env_rng.bit_generator.state,
                "action": self.action_rng.bit_generator.state,
                "sample": self.sample_rng.bit_generator.state,
            },
            "buffer_meta": [
                {"length": ep.length, "ep_return": ep.ep_return, "won": ep.won}
                for ep in self.buffer.episodes()
            ],
        }

    def restore_snapshot(self, snap: dict, episodes: list[EpisodeBatch]) -> None:
        self.env_steps = int(snap["env_steps"])
        self.learner_steps = int(snap["learner_steps"])
        self.eval_count = int(snap["eval_count"])
        self.opt.t = int(snap["adam_t"])
        self.env_rng.bit_generator.state = snap["rng"]["env"]
        self.action_rng.bit_generator.state = snap["rng"]["action"]
        self.sample_rng.bit_generator.state = snap["rng"]["sample"]
        self.buffer = ReplayBuffer(self.cfg.buffer_episodes)
        for ep in episodes:
            self.buffer.add(ep)


def random_policy_metric(cfg: TrainConfig, n_episodes: int, seed: int) -> float:
    """Mean metric of the uniform-random policy (baseline for smoke checks)."""
    env = make_env(cfg)
    ss = np.random.SeedSequence([seed, 0xBA5E])
    erng, arng = [np.random.default_rng(s) for s in ss.spawn(2)]
    total = 0.0
    for _ in range(n_episodes):
        res = env.reset(erng)
        won = False
        ret = 0.0
        while not res.terminated:
            actions = arng.integers(0, env.n_actions, size=env.n_agents)
            res = env.step(actions)
            ret += res.reward
            won = won or bool(res.info.get("won", False))
        total += float(won) if cfg.env_name == "gather" else ret
    return total / n_episodes
