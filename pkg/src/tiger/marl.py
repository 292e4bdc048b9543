"""Per-agent recurrent utility networks and the joint-value mixers.

One parameter set is shared by all agents: observations are encoded by a
linear layer, threaded through a two-layer GRU, and a linear head maps
the top hidden state (optionally concatenated with the agent's temporal
embedding) to one value per action. Execution is decentralized: action
selection touches only per-agent quantities; the global state reaches
only the mixer, which exists for training.

Three mixers are provided: the plain sum, a monotonic hypernetwork mixer
conditioned on the global state, and the same mixer conditioned on the
global state concatenated with all agents' temporal embeddings. The
hypernetwork outputs pass through an absolute value before mixing, so
the joint value is nondecreasing in every agent utility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor, init_uniform


@dataclass
class AgentNet:
    """Shared recurrent Q-network: linear encoder, 2-layer GRU, Q-head."""

    enc_w: Tensor
    enc_b: Tensor
    gru1_wx: Tensor
    gru1_wh: Tensor
    gru1_bx: Tensor
    gru1_bh: Tensor
    gru2_wx: Tensor
    gru2_wh: Tensor
    gru2_bx: Tensor
    gru2_bh: Tensor
    q_w: Tensor
    q_b: Tensor
    hidden_dim: int
    embed_dim: int  # 0 when the Q-head sees the GRU hidden state only

    @classmethod
    def create(cls, rng: np.random.Generator, obs_dim: int, n_actions: int,
               hidden_dim: int = 64, embed_dim: int = 0) -> "AgentNet":
        h = hidden_dim

        def gru(in_dim):
            return (
                dc.param(init_uniform(rng, in_dim, 3 * h)),
                dc.param(init_uniform(rng, h, 3 * h)),
                dc.param(np.zeros((1, 3 * h))),
                dc.param(np.zeros((1, 3 * h))),
            )

        g1 = gru(h)
        g2 = gru(h)
        return cls(
            enc_w=dc.param(init_uniform(rng, obs_dim, h)),
            enc_b=dc.param(np.zeros((1, h))),
            gru1_wx=g1[0], gru1_wh=g1[1], gru1_bx=g1[2], gru1_bh=g1[3],
            gru2_wx=g2[0], gru2_wh=g2[1], gru2_bx=g2[2], gru2_bh=g2[3],
            q_w=dc.param(init_uniform(rng, h + embed_dim, n_actions)),
            q_b=dc.param(np.zeros((1, n_actions))),
            hidden_dim=h,
            embed_dim=embed_dim,
        )

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for f in ("enc_w", "enc_b", "gru1_wx", "gru1_wh", "gru1_bx", "gru1_bh",
                  "gru2_wx", "gru2_wh", "gru2_bx", "gru2_bh", "q_w", "q_b"):
            out[f"{prefix}.{f}"] = getattr(self, f)
        return out

    def init_hidden(self, rows: int) -> tuple[Tensor, Tensor]:
        z = np.zeros((rows, self.hidden_dim))
        return dc.const(z), dc.const(z.copy())

    def recur(self, obs: Tensor, hidden: tuple[Tensor, Tensor]) -> tuple[Tensor, Tensor]:
        """Advance both GRU layers one step; rows are independent agents."""
        x = dc.relu(dc.linear(obs, self.enc_w, self.enc_b))
        h1 = dc.gru_cell(x, hidden[0], self.gru1_wx, self.gru1_wh,
                         self.gru1_bx, self.gru1_bh)
        h2 = dc.gru_cell(h1, hidden[1], self.gru2_wx, self.gru2_wh,
                         self.gru2_bx, self.gru2_bh)
        return h1, h2

    def q_values(self, h2: Tensor, embedding: Tensor | None = None) -> Tensor:
        if self.embed_dim:
            if embedding is None or embedding.shape[1] != self.embed_dim:
                got = None if embedding is None else embedding.shape
                raise dc.ShapeError(
                    f"Q-head expects embedding dim {self.embed_dim}, got {got}"
                )
            h2 = dc.concat_cols([h2, embedding])
        elif embedding is not None:
            raise dc.ShapeError("Q-head was built without an embedding input")
        return dc.linear(h2, self.q_w, self.q_b)


def agent_forward(net: AgentNet, observation: Tensor, hidden: tuple[Tensor, Tensor],
                  embedding: Tensor | None = None):
    """One decision step: returns (action values, next hidden pair)."""
    h1, h2 = net.recur(observation, hidden)
    return net.q_values(h2, embedding), (h1, h2)


def select_actions(action_values: np.ndarray, epsilon: float,
                   rng: np.random.Generator,
                   legal_mask: np.ndarray | None = None) -> np.ndarray:
    """Per-agent epsilon-greedy pick over (N, A) values.

    Greedy ties break toward the lowest action index. With probability
    epsilon an agent takes a uniform draw over its legal actions instead.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    n, a = action_values.shape
    if legal_mask is None:
        legal_mask = np.ones((n, a), dtype=bool)
    if not legal_mask.any(axis=1).all():
        raise ValueError("every agent needs at least one legal action")
    masked = np.where(legal_mask, action_values, -np.inf)
    greedy = masked.argmax(axis=1)
    explore = rng.random(n) < epsilon
    actions = greedy.copy()
    for i in np.flatnonzero(explore):
        actions[i] = rng.choice(np.flatnonzero(legal_mask[i]))
    return actions


# ---------------------------------------------------------------------------
# mixers
# ---------------------------------------------------------------------------

def vdn_mix(agent_q_chosen: Tensor) -> Tensor:
    """Joint value as the exact sum of the agents' chosen-action values."""
    return dc.sum_cols(agent_q_chosen)


@dataclass
class MixerParams:
    """Hypernetwork producing the weights of a two-layer monotonic mix.

    Each hypernetwork head is a two-layer ReLU MLP of the conditioning
    input. The produced layer weights pass through abs() before use.
    """

    w1_l1: Tensor
    w1_l1b: Tensor
    w1_l2: Tensor
    w1_l2b: Tensor
    b1: Tensor
    b1_b: Tensor
    w2_l1: Tensor
    w2_l1b: Tensor
    w2_l2: Tensor
    w2_l2b: Tensor
    v_l1: Tensor
    v_l1b: Tensor
    v_l2: Tensor
    v_l2b: Tensor
    n_agents: int
    embed: int

    @classmethod
    def create(cls, rng: np.random.Generator, n_agents: int, cond_dim: int,
               embed: int = 32, hyper_hidden: int = 64) -> "MixerParams":
        def head(out_dim):
            return (
                dc.param(init_uniform(rng, cond_dim, hyper_hidden)),
                dc.param(np.zeros((1, hyper_hidden))),
                dc.param(init_uniform(rng, hyper_hidden, out_dim)),
                dc.param(np.zeros((1, out_dim))),
            )

        w1 = head(n_agents * embed)
        w2 = head(embed)
        v = head(1)
        return cls(
            w1_l1=w1[0], w1_l1b=w1[1], w1_l2=w1[2], w1_l2b=w1[3],
            b1=dc.param(init_uniform(rng, cond_dim, embed)),
            b1_b=dc.param(np.zeros((1, embed))),
            w2_l1=w2[0], w2_l1b=w2[1], w2_l2=w2[2], w2_l2b=w2[3],
            v_l1=v[0], v_l1b=v[1], v_l2=v[2], v_l2b=v[3],
            n_agents=n_agents,
            embed=embed,
        )

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for f in ("w1_l1", "w1_l1b", "w1_l2", "w1_l2b", "b1", "b1_b",
                  "w2_l1", "w2_l1b", "w2_l2", "w2_l2b",
                  "v_l1", "v_l1b", "v_l2", "v_l2b"):
            out[f"{prefix}.{f}"] = getattr(self, f)
        return out

    @property
    def cond_dim(self) -> int:
        return self.w1_l1.shape[0]


def _hyper_head(cond: Tensor, l1: Tensor, l1b: Tensor, l2: Tensor, l2b: Tensor) -> Tensor:
    return dc.linear(dc.relu(dc.linear(cond, l1, l1b)), l2, l2b)


def qmix_mix(agent_q_chosen: Tensor, cond: Tensor, params: MixerParams) -> Tensor:
    """Monotonic two-layer mix of (B, N) chosen values under (B, cond) conditioning."""
    if agent_q_chosen.shape[1] != params.n_agents:
        raise dc.ShapeError(
            f"mixer built for {params.n_agents} agents, got {agent_q_chosen.shape}"
        )
    if cond.shape[1] != params.cond_dim:
        raise dc.ShapeError(
            f"mixer conditioning dim {params.cond_dim}, got {cond.shape}"
        )
    e = params.embed
    w1 = dc.abs_(_hyper_head(cond, params.w1_l1, params.w1_l1b,
                             params.w1_l2, params.w1_l2b))
    b1 = dc.linear(cond, params.b1, params.b1_b)
    hidden = b1
    for i in range(params.n_agents):
        qi = dc.col_slice(agent_q_chosen, i, i + 1)
        wi = dc.col_slice(w1, i * e, (i + 1) * e)
        hidden = dc.add(hidden, dc.mul(qi, wi))
    hidden = dc.elu(hidden)
    w2 = dc.abs_(_hyper_head(cond, params.w2_l1, params.w2_l1b,
                             params.w2_l2, params.w2_l2b))
    v = _hyper_head(cond, params.v_l1, params.v_l1b, params.v_l2, params.v_l2b)
    return dc.add(dc.rows_dot(hidden, w2), v)


def tiger_mix(agent_q_chosen: Tensor, state: Tensor, embeddings: Tensor,
              params: MixerParams) -> Tensor:
    """Mixer conditioned on the global state plus all agents' temporal embeddings.

    embeddings: (B, N * embed_dim), agents concatenated in index order.
    """
    expect = params.cond_dim - state.shape[1]
    if embeddings.shape[1] != expect:
        raise ValueError(
            f"expected concatenated embeddings of width {expect}, "
            f"got {embeddings.shape[1]} (one block per agent, in order)"
        )
    return qmix_mix(agent_q_chosen, dc.concat_cols([state, embeddings]), params)
