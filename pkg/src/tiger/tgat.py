"""Temporal graph encoder: time encoding, attention over the temporal
neighborhood, and fusion with the current observation.

For agent i at time t the encoder stacks a feature matrix whose first row
is i's own base embedding paired with the zero-lag time code, and whose
remaining rows are the neighborhood nodes' recorded embeddings paired
with the time code of their lag. A single attention head (query from the
self row, keys/values from the neighbor rows) produces a message that a
two-layer feed-forward net fuses with the agent's observation into the
final time-aware embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .tgraph import TemporalGraph


@dataclass
class TimeEncoderParams:
    """Learnable cosine time code: code(dt)_k = cos(freq_k * dt + phase_k)."""

    freq: Tensor   # (1, d_time)
    phase: Tensor  # (1, d_time)

    @classmethod
    def create(cls, rng: np.random.Generator, d_time: int) -> "TimeEncoderParams":
        # spread initial frequencies over decreasing scales so different
        # components resolve different lags from the start
        freq = 1.0 / np.power(10.0, np.linspace(0.0, 2.0, d_time))[None, :]
        phase = np.zeros((1, d_time))
        del rng  # layout kept uniform with the other param factories
        return cls(freq=dc.param(freq), phase=dc.param(phase))

    @property
    def d_time(self) -> int:
        return self.freq.shape[1]

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.freq": self.freq, f"{prefix}.phase": self.phase}


def time_encode(params: TimeEncoderParams, delta_t: int) -> Tensor:
    """Time code for one nonnegative integer lag, as a (1, d_time) row."""
    if delta_t < 0:
        raise ValueError(f"delta_t must be nonnegative, got {delta_t}")
    return time_encode_many(params, np.array([delta_t], dtype=np.float64))


def time_encode_many(params: TimeEncoderParams, deltas: np.ndarray) -> Tensor:
    """Time codes for a column of lags: (M,) -> (M, d_time)."""
    col = dc.const(np.asarray(deltas, dtype=np.float64)[:, None])
    phase = dc.add(dc.matmul(col, params.freq), params.phase)
    return dc.cos(phase)


@dataclass
class TgatParams:
    """Projections and fusion weights of the temporal encoder."""

    query_proj: Tensor  # (d0 + d_time, d_attn)
    key_proj: Tensor
    value_proj: Tensor
    fuse1_w: Tensor     # (d_attn + obs_dim, fusion_hidden)
    fuse1_b: Tensor
    fuse2_w: Tensor     # (fusion_hidden, embed_dim)
    fuse2_b: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, d0: int, d_time: int, d_attn: int,
               obs_dim: int, fusion_hidden: int, embed_dim: int) -> "TgatParams":
        from .diffcore import init_uniform

        d_in = d0 + d_time
        return cls(
            query_proj=dc.param(init_uniform(rng, d_in, d_attn)),
            key_proj=dc.param(init_uniform(rng, d_in, d_attn)),
            value_proj=dc.param(init_uniform(rng, d_in, d_attn)),
            fuse1_w=dc.param(init_uniform(rng, d_attn + obs_dim, fusion_hidden)),
            fuse1_b=dc.param(np.zeros((1, fusion_hidden))),
            fuse2_w=dc.param(init_uniform(rng, fusion_hidden, embed_dim)),
            fuse2_b=dc.param(np.zeros((1, embed_dim))),
        )

    @property
    def d_attn(self) -> int:
        return self.query_proj.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.fuse2_w.shape[1]

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.query_proj": self.query_proj,
            f"{prefix}.key_proj": self.key_proj,
            f"{prefix}.value_proj": self.value_proj,
            f"{prefix}.fuse1_w": self.fuse1_w,
            f"{prefix}.fuse1_b": self.fuse1_b,
            f"{prefix}.fuse2_w": self.fuse2_w,
            f"{prefix}.fuse2_b": self.fuse2_b,
        }


class NodeHistory:
    """Base embeddings recorded per (agent, timestep) along one episode."""

    def __init__(self, n_agents: int, d0: int):
        self.n_agents = n_agents
        self.d0 = d0
        self._steps: list[np.ndarray] = []

    def record(self, embeds: np.ndarray) -> None:
        """Append one timestep's (N, d0) embedding block."""
        if embeds.shape != (self.n_agents, self.d0):
            raise ValueError(f"expected {(self.n_agents, self.d0)}, got {embeds.shape}")
        self._steps.append(np.array(embeds, dtype=np.float64))

    def __len__(self) -> int:
        return len(self._steps)

    def get(self, agent: int, t: int) -> np.ndarray:
        if not (0 <= t < len(self._steps)) or not (0 <= agent < self.n_agents):
            raise LookupError(f"no recorded embedding for agent {agent} at t={t}")
        return self._steps[t][agent]


def build_feature_matrix(self_embed: Tensor, neighbors: list[tuple[Tensor, int]],
                         t: int, time_params: TimeEncoderParams) -> Tensor:
    """Stack [self || code(0)] over [neighbor || code(t - tau)] rows.

    `neighbors` must already be in deterministic (agent, tau) order; each
    entry is a (1, d0) embedding row plus its timestep tau <= t.
    """
    rows = [dc.concat_cols([self_embed, time_encode(time_params, 0)])]
    for embed, tau in neighbors:
        if tau > t:
            raise ValueError(f"neighbor timestep {tau} is in the future of t={t}")
        rows.append(dc.concat_cols([embed, time_encode(time_params, t - tau)]))
    return dc.concat_rows(rows)


def temporal_attention(params: TgatParams, feature_matrix: Tensor) -> Tensor:
    """Attention message for one agent: softmax(q . K)-weighted sum of values.

    Row 0 of the feature matrix is the query; the rest are keys/values.
    With no neighbor rows the message is a zero (1, d_attn) row, so the
    fusion step degrades to a function of the observation alone.
    """
    n_rows = feature_matrix.shape[0]
    if n_rows < 2:
        return dc.const(np.zeros((1, params.d_attn)))
    z_self = dc.take_rows(feature_matrix, np.array([0]))
    z_nbrs = dc.take_rows(feature_matrix, np.arange(1, n_rows))
    q = dc.matmul(z_self, params.query_proj)
    k = dc.matmul(z_nbrs, params.key_proj)
    v = dc.matmul(z_nbrs, params.value_proj)
    scores = dc.matmul(k, dc.reshape(q, q.shape[1], 1))
    alpha = dc.segment_softmax(scores, np.zeros(n_rows - 1, dtype=np.int64), 1)
    return dc.segment_sum(dc.mul(alpha, v), np.zeros(n_rows - 1, dtype=np.int64), 1)


def attention_weights(params: TgatParams, feature_matrix: np.ndarray) -> np.ndarray:
    """Forward-only attention weights over the neighbor rows (sums to 1)."""
    z_self = feature_matrix[0:1]
    z_nbrs = feature_matrix[1:]
    q = z_self @ params.query_proj.data
    k = z_nbrs @ params.key_proj.data
    s = (k @ q.T)[:, 0]
    s -= s.max()
    e = np.exp(s)
    return e / e.sum()


def fuse(params: TgatParams, message: Tensor, observation: Tensor) -> Tensor:
    """Two-layer feed-forward merge of the attention message and the observation."""
    x = dc.concat_cols([message, observation])
    hidden = dc.relu(dc.linear(x, params.fuse1_w, params.fuse1_b))
    return dc.linear(hidden, params.fuse2_w, params.fuse2_b)


def encode_agent(agent: int, graph: TemporalGraph, history: NodeHistory,
                 observation: Tensor, time_params: TimeEncoderParams,
                 params: TgatParams) -> Tensor:
    """Full per-agent encoder chain at graph.t (canonical reference path)."""
    t = graph.t
    self_embed = dc.const(history.get(agent, t)[None, :])
    neighbors = [
        (dc.const(history.get(j, tau)[None, :]), tau)
        for j, tau in graph.neighborhood(agent)
    ]
    z = build_feature_matrix(self_embed, neighbors, t, time_params)
    msg = temporal_attention(params, z)
    return fuse(params, msg, observation)


def encode_all(graph: TemporalGraph, history: NodeHistory, observations: np.ndarray,
               time_params: TimeEncoderParams, params: TgatParams) -> np.ndarray:
    """Embeddings for every agent at graph.t, in agent-index order: (N, embed_dim)."""
    out = np.empty((graph.n_agents, params.embed_dim))
    for i in range(graph.n_agents):
        obs = dc.const(observations[i][None, :])
        out[i] = encode_agent(i, graph, history, obs, time_params, params).data[0]
    return out
