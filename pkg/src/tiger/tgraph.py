"""Dynamic temporal graph construction.

At each timestep the N agents form a fully connected candidate graph.
A small attention scorer rates every directed pair, the undirected pairs
are pruned to the top fraction ``k_stat_nbr`` by symmetrized score, and
the surviving static edges are augmented with self-history links (own
past, depth ``k_past_self``) and neighbor-history links (static
neighbors' past, depth ``k_past_nbr``). History windows truncate at the
episode start; no edges point into negative time.

Also provides the exact size accounting for these graphs: the bounded
per-agent neighborhood size under the pooled-edge reading, per-episode
edge totals, and the logarithmic self-history depth rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


@dataclass
class GraphParams:
    """Structural/temporal budget of the graph builder."""

    k_stat_nbr: float = 0.5
    k_past_self: int = 1
    k_past_nbr: int = 1

    def __post_init__(self):
        if not 0.0 <= self.k_stat_nbr <= 1.0:
            raise ValueError(f"k_stat_nbr must be in [0, 1], got {self.k_stat_nbr}")
        if self.k_past_self < 0 or self.k_past_nbr < 0:
            raise ValueError("history depths must be nonnegative")


@dataclass
class GatScorer:
    """Pairwise edge scorer: shared projection + additive attention vector.

    proj: (d, d_proj); attn: (2*d_proj, 1). The attention vector is split
    into a source half and a target half so all N*N logits come from two
    matvecs instead of N^2 concatenations.
    """

    proj: np.ndarray
    attn: np.ndarray
    leaky_slope: float = 0.2

    @classmethod
    def create(cls, rng: np.random.Generator, feat_dim: int, proj_dim: int) -> "GatScorer":
        from .diffcore import init_uniform

        proj = init_uniform(rng, feat_dim, proj_dim)
        attn = init_uniform(rng, 2 * proj_dim, 1)
        return cls(proj=proj, attn=attn)


def score_edges(scorer: GatScorer, node_feats: np.ndarray) -> np.ndarray:
    """Directed attention weights over all agent pairs.

    node_feats: (N, d). Returns (N, N) row-stochastic weights with an
    excluded (zero) diagonal: row i is a softmax over all j != i of
    leaky_relu(attn . [proj(h_i) || proj(h_j)]).
    """
    n = node_feats.shape[0]
    if n < 2:
        raise ValueError(f"score_edges needs at least 2 agents, got {n}")
    if not np.all(np.isfinite(node_feats)):
        raise ValueError("score_edges: non-finite node features")
    return _score_batch(scorer, node_feats[None, :, :])[0]


def _score_batch(scorer: GatScorer, feats: np.ndarray) -> np.ndarray:
    """Vectorized scorer over a (B, N, d) stack; returns (B, N, N)."""
    b, n, _ = feats.shape
    d_proj = scorer.proj.shape[1]
    wh = feats.reshape(b * n, -1) @ scorer.proj
    s_src = (wh @ scorer.attn[:d_proj]).reshape(b, n)
    s_dst = (wh @ scorer.attn[d_proj:]).reshape(b, n)
    logits = s_src[:, :, None] + s_dst[:, None, :]
    logits = np.where(logits >= 0.0, logits, scorer.leaky_slope * logits)
    eye = np.eye(n, dtype=bool)
    logits = np.where(eye[None, :, :], -np.inf, logits)
    logits -= logits.max(axis=2, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=2, keepdims=True)


def n_pairs(n_agents: int) -> int:
    return n_agents * (n_agents - 1) // 2


def kept_edge_count(k_stat_nbr: float, n_agents: int) -> int:
    """Edges surviving the prune: ceil(k * N(N-1)/2)."""
    return math.ceil(k_stat_nbr * n_pairs(n_agents))


@lru_cache(maxsize=None)
def pair_index_arrays(n_agents: int) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangle pair endpoints in lexicographic (i, j) order."""
    iu, ju = np.triu_indices(n_agents, k=1)
    iu.setflags(write=False)
    ju.setflags(write=False)
    return iu, ju


def prune_topk(attn: np.ndarray, k_stat_nbr: float) -> list[tuple[int, int]]:
    """Keep the top fraction of undirected pairs by symmetrized score.

    Pair score is (a_ij + a_ji)/2; ties break toward the lexicographically
    smaller (i, j) so the selection is deterministic.
    """
    n = attn.shape[0]
    keep = kept_edge_count(k_stat_nbr, n)
    iu, ju = pair_index_arrays(n)
    order = _prune_order(attn[None, :, :], iu, ju)[0]
    return [(int(iu[p]), int(ju[p])) for p in order[:keep]]


def _prune_order(attn: np.ndarray, iu: np.ndarray, ju: np.ndarray) -> np.ndarray:
    """Per-sample pair ordering by descending score, stable in (i, j)."""
    sym = 0.5 * (attn[:, iu, ju] + attn[:, ju, iu])
    # stable sort on -score keeps lexicographic pair order within ties
    return np.argsort(-sym, axis=1, kind="stable")


def prune_topk_batch(attn: np.ndarray, k_stat_nbr: float) -> np.ndarray:
    """Batched prune: (B, N, N) weights -> (B, keep) pair indices.

    Pair index p refers to the p-th upper-triangle pair in (i, j) order.
    """
    n = attn.shape[1]
    keep = kept_edge_count(k_stat_nbr, n)
    iu, ju = pair_index_arrays(n)
    order = _prune_order(attn, iu, ju)
    return order[:, :keep]


@dataclass
class TemporalGraph:
    """One timestep's node/edge sets over (agent, time) nodes."""

    t: int
    n_agents: int
    static_edges: list[tuple[int, int]]
    self_history_edges: list[tuple[int, int, int, int]] = field(default_factory=list)
    nbr_history_edges: list[tuple[int, int, int, int]] = field(default_factory=list)

    def neighborhood(self, agent: int) -> list[tuple[int, int]]:
        """All (agent, timestep) nodes attached to `agent` at time t, sorted."""
        nodes = set()
        for i, j in self.static_edges:
            if i == agent:
                nodes.add((j, self.t))
            elif j == agent:
                nodes.add((i, self.t))
        for i, ti, j, tj in self.self_history_edges:
            if i == agent and ti == self.t:
                nodes.add((j, tj))
        for i, ti, j, tj in self.nbr_history_edges:
            if i == agent and ti == self.t:
                nodes.add((j, tj))
        return sorted(nodes)


def build_temporal_neighborhood(static_edges: list[tuple[int, int]], t: int,
                                params: GraphParams, n_agents: int) -> TemporalGraph:
    """Attach self- and neighbor-history edges to the pruned static graph.

    Self edges go back min(k_past_self, t) steps; for every static pair
    {i, j}, both directed neighbor-history links (i at t -> j's past, and
    vice versa) go back min(k_past_nbr, t) steps.
    """
    if t < 0:
        raise ValueError(f"timestep must be nonnegative, got {t}")
    g = TemporalGraph(t=t, n_agents=n_agents, static_edges=sorted(static_edges))
    for i in range(n_agents):
        for d in range(1, min(params.k_past_self, t) + 1):
            g.self_history_edges.append((i, t, i, t - d))
    for i, j in g.static_edges:
        for d in range(1, min(params.k_past_nbr, t) + 1):
            g.nbr_history_edges.append((i, t, j, t - d))
            g.nbr_history_edges.append((j, t, i, t - d))
    return g


def neighborhood_size(params: GraphParams, n_agents: int) -> int:
    """Bounded temporal-neighborhood size under the pooled-edge reading.

    kept = ceil(k_stat_nbr * N(N-1)/2); size = k_past_self + kept +
    kept * k_past_nbr. Assumes t large enough that no history window
    truncates.
    """
    kept = kept_edge_count(params.k_stat_nbr, n_agents)
    return params.k_past_self + kept + kept * params.k_past_nbr


def log_self_history_rule(n_agents: int, horizon: int) -> int:
    """Self-history depth that grows logarithmically with graph size: ceil(ln(N*T))."""
    nt = n_agents * horizon
    if nt < 1:
        raise ValueError(f"n_agents * horizon must be >= 1, got {nt}")
    return math.ceil(math.log(nt))


@dataclass
class GraphStats:
    """Exact size accounting for one episode's worth of temporal graphs."""

    n_agents: int
    horizon: int
    nodes: int
    static_edges_per_step_full: int
    static_edges_episode_full: int
    self_history_total_unbounded: int
    nbr_history_total_unbounded: int
    static_edges_per_step_kept: int
    static_edges_episode_kept: int
    self_history_total_bounded: int
    nbr_history_total_bounded: int
    eq5_neighborhood_size: int
    log_rule_depth: int


def episode_graph_stats(n_agents: int, horizon: int, params: GraphParams) -> GraphStats:
    """Node/edge counts for a full episode, unbounded and under `params`.

    Unbounded totals take the full pair set every step and history windows
    reaching all the way back; bounded totals apply the pruning fraction
    and the two depth caps, with windows truncated near t = 0.
    """
    n, t = n_agents, horizon
    pairs = n_pairs(n)
    kept = kept_edge_count(params.k_stat_nbr, n)
    self_bounded = n * sum(min(params.k_past_self, s) for s in range(t))
    nbr_bounded = 2 * kept * sum(min(params.k_past_nbr, s) for s in range(t))
    return GraphStats(
        n_agents=n,
        horizon=t,
        nodes=n * t,
        static_edges_per_step_full=pairs,
        static_edges_episode_full=pairs * t,
        self_history_total_unbounded=n * t * (t - 1) // 2,
        nbr_history_total_unbounded=pairs * t * (t - 1),
        static_edges_per_step_kept=kept,
        static_edges_episode_kept=kept * t,
        self_history_total_bounded=self_bounded,
        nbr_history_total_bounded=nbr_bounded,
        eq5_neighborhood_size=neighborhood_size(params, n),
        log_rule_depth=log_self_history_rule(n, t) if n * t >= 1 else 0,
    )
