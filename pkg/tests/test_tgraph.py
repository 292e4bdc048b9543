"""Temporal graph construction: scoring, pruning, history edges, accounting."""

import math

import numpy as np
import pytest

from tiger import tgraph
from tiger.tgraph import (
    GatScorer,
    GraphParams,
    build_temporal_neighborhood,
    episode_graph_stats,
    kept_edge_count,
    log_self_history_rule,
    neighborhood_size,
    prune_topk,
    score_edges,
)


def _scorer(r, d=6, dp=4):
    return GatScorer.create(r, d, dp)


# -- edge scoring --------------------------------------------------------------

def test_identical_features_give_uniform_rows():
    r = np.random.default_rng(0)
    sc = _scorer(r)
    feats = np.tile(r.normal(size=(1, 6)), (5, 1))
    a = score_edges(sc, feats)
    off_diag = a[~np.eye(5, dtype=bool)]
    assert np.allclose(off_diag, 0.25, atol=1e-12)
    assert np.allclose(np.diag(a), 0.0)


def test_rows_sum_to_one():
    r = np.random.default_rng(1)
    sc = _scorer(r)
    for _ in range(20):
        a = score_edges(sc, r.normal(size=(6, 6)))
        assert np.allclose(a.sum(axis=1), 1.0, atol=1e-9)


def test_score_edges_matches_direct_evaluation():
    """Independent elementwise evaluation of the attention formula."""
    r = np.random.default_rng(2)
    sc = _scorer(r, d=5, dp=3)
    feats = r.normal(size=(3, 5))
    a = score_edges(sc, feats)

    def leaky(v):
        return v if v >= 0 else 0.2 * v

    wh = [feats[i] @ sc.proj for i in range(3)]
    for i in range(3):
        logits = {}
        for j in range(3):
            if j == i:
                continue
            logits[j] = leaky(float(sc.attn[:, 0] @ np.concatenate([wh[i], wh[j]])))
        mx = max(logits.values())
        exps = {j: math.exp(v - mx) for j, v in logits.items()}
        z = sum(exps.values())
        for j, e in exps.items():
            assert abs(a[i, j] - e / z) < 1e-12


def test_score_edges_needs_two_agents():
    r = np.random.default_rng(3)
    sc = _scorer(r)
    with pytest.raises(ValueError, match="2 agents"):
        score_edges(sc, r.normal(size=(1, 6)))


# -- pruning --------------------------------------------------------------------

def test_prune_keeps_all_pairs_at_one():
    r = np.random.default_rng(4)
    a = score_edges(_scorer(r), r.normal(size=(5, 6)))
    assert len(prune_topk(a, 1.0)) == 10


def test_prune_keeps_none_at_zero():
    r = np.random.default_rng(5)
    a = score_edges(_scorer(r), r.normal(size=(5, 6)))
    assert prune_topk(a, 0.0) == []


def test_prune_half_of_five_agents_keeps_five():
    r = np.random.default_rng(6)
    a = score_edges(_scorer(r), r.normal(size=(5, 6)))
    assert len(prune_topk(a, 0.5)) == 5


def test_prune_count_exact_for_any_fraction():
    r = np.random.default_rng(7)
    for n in range(2, 8):
        a = score_edges(_scorer(r), r.normal(size=(n, 6)))
        for k in (0.0, 0.1, 0.3, 0.5, 0.77, 1.0):
            edges = prune_topk(a, k)
            assert len(edges) == math.ceil(k * n * (n - 1) / 2)
            assert len(set(edges)) == len(edges)
            assert all(i < j for i, j in edges)


def test_prune_selects_highest_symmetric_scores_with_lex_ties():
    a = np.zeros((4, 4))
    # symmetric pair scores: (0,1)=0.9, (0,2)=0.5, (0,3)=0.5, rest lower
    a[0, 1] = a[1, 0] = 0.9
    a[0, 2] = a[2, 0] = 0.5
    a[0, 3] = a[3, 0] = 0.5
    a[1, 2] = a[2, 1] = 0.1
    edges = prune_topk(a, 0.5)  # ceil(0.5 * 6) = 3
    assert edges == [(0, 1), (0, 2), (0, 3)]


def test_prune_batch_matches_single():
    r = np.random.default_rng(8)
    sc = _scorer(r)
    feats = r.normal(size=(6, 5, 6))
    attn = np.stack([score_edges(sc, feats[b]) for b in range(6)])
    keep = tgraph.prune_topk_batch(attn, 0.5)
    iu, ju = tgraph.pair_index_arrays(5)
    for b in range(6):
        single = prune_topk(attn[b], 0.5)
        batched = sorted((int(iu[p]), int(ju[p])) for p in keep[b])
        assert sorted(single) == batched


# -- temporal neighborhoods -------------------------------------------------------

def test_no_history_at_t_zero():
    g = build_temporal_neighborhood([(0, 1)], 0, GraphParams(0.5, 3, 2), 3)
    assert g.self_history_edges == []
    assert g.nbr_history_edges == []


def test_single_self_edge_no_neighbor_history():
    g = build_temporal_neighborhood([(0, 1)], 4, GraphParams(0.5, 1, 0), 3)
    assert g.self_history_edges == [(0, 4, 0, 3), (1, 4, 1, 3), (2, 4, 2, 3)]
    assert g.nbr_history_edges == []


def test_neighborhood_matches_exhaustive_predicate_enumeration():
    """Brute-force membership over all (agent, timestep) pairs."""
    r = np.random.default_rng(9)
    for _ in range(50):
        n = int(r.integers(2, 7))
        t = int(r.integers(0, 6))
        params = GraphParams(float(r.uniform(0, 1)), int(r.integers(0, 4)),
                             int(r.integers(0, 4)))
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        chosen = [pairs[k] for k in r.choice(len(pairs),
                                             size=int(r.integers(0, len(pairs) + 1)),
                                             replace=False)]
        g = build_temporal_neighborhood(chosen, t, params, n)
        static = set(map(tuple, chosen))
        for i in range(n):
            expected = set()
            for j in range(n):
                for tau in range(t + 1):
                    is_nbr = (min(i, j), max(i, j)) in static and i != j
                    if tau == t and is_nbr:
                        expected.add((j, tau))
                    delta = t - tau
                    if j == i and 1 <= delta <= params.k_past_self:
                        expected.add((j, tau))
                    if is_nbr and 1 <= delta <= params.k_past_nbr:
                        expected.add((j, tau))
            assert set(g.neighborhood(i)) == expected


def test_history_never_reaches_negative_time():
    g = build_temporal_neighborhood([(0, 1)], 2, GraphParams(1.0, 5, 5), 2)
    for _, _, _, tau in g.self_history_edges + g.nbr_history_edges:
        assert tau >= 0


def test_neighbor_history_pairs_are_static_edges():
    r = np.random.default_rng(10)
    a = score_edges(_scorer(r), r.normal(size=(6, 6)))
    edges = prune_topk(a, 0.4)
    g = build_temporal_neighborhood(edges, 5, GraphParams(0.4, 1, 2), 6)
    static = set(edges)
    for i, _, j, _ in g.nbr_history_edges:
        assert (min(i, j), max(i, j)) in static


# -- size accounting ---------------------------------------------------------------

def test_neighborhood_size_direct_substitution():
    assert neighborhood_size(GraphParams(0.5, 1, 1), 5) == 11
    assert neighborhood_size(GraphParams(0.0, 0, 0), 5) == 0
    assert neighborhood_size(GraphParams(0.1, 0, 2), 5) == 3


def test_episode_stats_small_team_short_horizon():
    s = episode_graph_stats(5, 8, GraphParams())
    assert s.nodes == 40
    assert s.static_edges_episode_full == 80
    assert s.self_history_total_unbounded == 140
    assert s.nbr_history_total_unbounded == 560


def test_episode_stats_large_team_long_horizon():
    s = episode_graph_stats(13, 100, GraphParams())
    assert s.nodes == 1300
    assert s.static_edges_per_step_full == 78
    assert s.self_history_total_unbounded == 64_350
    assert s.nbr_history_total_unbounded == 772_200


def test_single_agent_has_no_pair_edges():
    s = episode_graph_stats(1, 10, GraphParams())
    assert s.static_edges_episode_full == 0
    assert s.nbr_history_total_unbounded == 0


def test_quadratic_growth_in_horizon_and_agents():
    base = episode_graph_stats(6, 10, GraphParams())
    twice_t = episode_graph_stats(6, 20, GraphParams())
    ratio_t = twice_t.nbr_history_total_unbounded / base.nbr_history_total_unbounded
    assert abs(ratio_t - 4.0) < 0.25  # T(T-1) doubling is 4x asymptotically
    twice_n = episode_graph_stats(12, 10, GraphParams())
    ratio_n = twice_n.nbr_history_total_unbounded / base.nbr_history_total_unbounded
    assert abs(ratio_n - 4.0) < 0.5  # N(N-1)/2 doubling approaches 4x


def test_bounded_totals_match_enumeration():
    r = np.random.default_rng(11)
    for _ in range(20):
        n = int(r.integers(2, 6))
        t_hor = int(r.integers(1, 7))
        params = GraphParams(float(r.uniform(0, 1)), int(r.integers(0, 5)),
                             int(r.integers(0, 5)))
        s = episode_graph_stats(n, t_hor, params)
        kept = kept_edge_count(params.k_stat_nbr, n)
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)][:kept]
        self_total = 0
        nbr_total = 0
        for t in range(t_hor):
            g = build_temporal_neighborhood(pairs, t, params, n)
            self_total += len(g.self_history_edges)
            nbr_total += len(g.nbr_history_edges)
        assert s.self_history_total_bounded == self_total
        assert s.nbr_history_total_bounded == nbr_total


def test_log_rule_values():
    assert log_self_history_rule(5, 8) == 4
    assert log_self_history_rule(10, 100) == 7
    assert log_self_history_rule(1, 1) == 0


def test_construction_is_deterministic():
    r = np.random.default_rng(12)
    sc = _scorer(r)
    feats = r.normal(size=(5, 6))
    a1 = score_edges(sc, feats)
    a2 = score_edges(sc, feats)
    assert np.array_equal(a1, a2)
    assert prune_topk(a1, 0.5) == prune_topk(a2, 0.5)
