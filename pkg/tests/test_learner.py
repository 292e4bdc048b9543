"""Training engine: schedule, TD(lambda), replay, updates, target sync."""

import numpy as np
import pytest

import tiger.diffcore as dc
from tiger.config import parse_config_text
from tiger.learner import (
    EpisodeBatch,
    ReplayBuffer,
    Schedule,
    TdLambdaConfig,
    Trainer,
    epsilon_at,
    random_policy_metric,
    td_lambda_targets,
)


def _cfg(algo="qmix", n_agents=3, extra=""):
    return parse_config_text(f"""
[env]
name = gather
n_agents = {n_agents}
[algo]
name = {algo}
[train]
batch_episodes = 4
{extra}
""")


def _warm_trainer(algo="qmix", seed=0, episodes=4):
    t = Trainer(_cfg(algo), seed)
    for _ in range(episodes):
        t.buffer.add(t.collect_episode())
    return t


# -- schedule ---------------------------------------------------------------------

def test_schedule_endpoints_and_midpoint():
    s = Schedule()
    assert epsilon_at(s, 0) == 1.0
    assert epsilon_at(s, 200_000) == pytest.approx(0.05)
    assert epsilon_at(s, 100_000) == pytest.approx(0.525)


def test_schedule_clamps_and_never_increases():
    s = Schedule()
    values = [epsilon_at(s, k) for k in range(0, 400_000, 10_000)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert epsilon_at(s, 10 ** 9) == pytest.approx(0.05)


# -- td(lambda) --------------------------------------------------------------------

def test_td_lambda_matches_hand_unrolled_three_steps():
    r = np.array([1.0, -2.0, 3.0])
    boot = np.array([10.0, 20.0, 99.0])  # 99 is beyond terminal, must be ignored
    done = np.array([0.0, 0.0, 1.0])
    cfg = TdLambdaConfig(gamma=0.9, lam=0.5)
    y2 = 3.0
    y1 = -2.0 + 0.9 * (0.5 * 20.0 + 0.5 * y2)
    y0 = 1.0 + 0.9 * (0.5 * 10.0 + 0.5 * y1)
    out = td_lambda_targets(r, boot, done, cfg)
    assert np.allclose(out, [y0, y1, y2], atol=1e-15)


def test_td_lambda_zero_reduces_to_one_step():
    r = np.array([1.0, 2.0, 0.5])
    boot = np.array([4.0, 5.0, 0.0])
    done = np.array([0.0, 0.0, 1.0])
    cfg = TdLambdaConfig(gamma=0.95, lam=0.0)
    out = td_lambda_targets(r, boot, done, cfg)
    assert np.allclose(out, r + 0.95 * (1 - done) * boot)


def test_td_lambda_one_gamma_one_is_monte_carlo():
    r = np.array([1.0, 2.0, 3.0, 4.0])
    boot = np.full(4, 123.0)
    done = np.array([0.0, 0.0, 0.0, 1.0])
    cfg = TdLambdaConfig(gamma=1.0, lam=1.0)
    out = td_lambda_targets(r, boot, done, cfg)
    assert np.allclose(out, [10.0, 9.0, 7.0, 4.0])


def test_td_lambda_batched_matches_columnwise():
    rng = np.random.default_rng(0)
    cfg = TdLambdaConfig()
    r = rng.normal(size=(5, 3))
    boot = rng.normal(size=(5, 3))
    done = np.zeros((5, 3))
    done[-1] = 1.0
    done[2, 1] = 1.0
    full = td_lambda_targets(r, boot, done, cfg)
    for b in range(3):
        col = td_lambda_targets(r[:, b], boot[:, b], done[:, b], cfg)
        assert np.allclose(full[:, b], col, atol=1e-14)


# -- replay buffer ------------------------------------------------------------------

def _dummy_episode(tag: float) -> EpisodeBatch:
    return EpisodeBatch(
        obs=np.full((2, 1, 2), tag), state=np.full((2, 2), tag),
        actions=np.zeros((1, 1), dtype=np.int64), rewards=np.array([tag]),
        terminated=np.array([True]), hiddens=np.zeros((1, 1, 2, 3)),
        length=1, ep_return=tag, won=False,
    )


def test_buffer_capacity_and_fifo_eviction():
    buf = ReplayBuffer(capacity=3)
    for k in range(5):
        buf.add(_dummy_episode(float(k)))
    assert len(buf) == 3
    assert [ep.ep_return for ep in buf.episodes()] == [2.0, 3.0, 4.0]


def test_buffer_samples_without_replacement():
    buf = ReplayBuffer(capacity=10)
    for k in range(10):
        buf.add(_dummy_episode(float(k)))
    rng = np.random.default_rng(0)
    picked = buf.sample(rng, 10)
    assert sorted(ep.ep_return for ep in picked) == [float(k) for k in range(10)]


# -- collection ----------------------------------------------------------------------

def test_collect_respects_horizon_and_counts_steps():
    t = Trainer(_cfg(), seed=0)
    ep = t.collect_episode()
    assert 1 <= ep.length <= 8
    assert t.env_steps == ep.length
    assert ep.obs.shape[0] == ep.length + 1
    assert ep.hiddens.shape == (ep.length, 3, 2, 64)
    assert ep.terminated[-1]


def test_collect_is_bitwise_deterministic_across_runs():
    a = Trainer(_cfg("tiger-mix"), seed=42).collect_episode()
    b = Trainer(_cfg("tiger-mix"), seed=42).collect_episode()
    for field in ("obs", "state", "actions", "rewards", "terminated", "hiddens"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_epsilon_follows_global_counter():
    cfg = _cfg(extra="eps_anneal_steps = 100")
    t = Trainer(cfg, seed=0)
    t.env_steps = 50
    assert t.schedule.value(t.env_steps) == pytest.approx(1.0 + (0.05 - 1.0) * 0.5)


# -- updates -------------------------------------------------------------------------

def test_warmup_returns_none_until_batch_available():
    t = Trainer(_cfg(), seed=0)
    t.buffer.add(t.collect_episode())
    assert t.train_step() is None
    assert t.learner_steps == 0


def test_duplicate_episodes_get_identical_treatment():
    t = _warm_trainer("tiger-mix", seed=1)
    ep = t.buffer.episodes()[0]
    out = t._unroll(t.models, _obs_steps_for(t, [ep, ep]), 2)
    n = t.n_agents
    for q in out.qs:
        assert np.allclose(q.data[:n], q.data[n:], atol=1e-12)
    dc.clear_tape()


def test_loss_invariant_under_batch_duplication():
    t = _warm_trainer(seed=2)
    ep = t.buffer.episodes()[0]
    l1 = t._update_on([ep])
    l2 = t._update_on([ep, ep])
    # one update already shifted params; rebuild a fresh trainer per probe
    t = _warm_trainer(seed=2)
    ep = t.buffer.episodes()[0]
    l2 = t._update_on([ep, ep])
    assert l1 == pytest.approx(l2, rel=1e-12)


def _obs_steps_for(trainer, eps):
    n = trainer.n_agents
    od = trainer.env.obs_dim
    t_max = max(e.length for e in eps)
    steps = [np.zeros((len(eps) * n, od)) for _ in range(t_max)]
    for e_idx, e in enumerate(eps):
        for tt in range(e.length):
            steps[tt][e_idx * n : (e_idx + 1) * n] = e.obs[tt]
    return steps


def test_overfit_frozen_buffer_loss_strictly_decreases():
    t = _warm_trainer(seed=3, episodes=1)
    ep = t.buffer.episodes()[0]
    losses = [t._update_on([ep] * 4) for _ in range(50)]
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_update_leaves_no_grads_or_tape_behind():
    t = _warm_trainer(seed=4)
    t.train_step()
    assert dc.tape_size() == 0
    assert all(p.grad is None for p in t.opt.params.values())


def test_train_uses_all_parameters():
    """Every parameter except the hard-pruned edge scorer gets gradient."""
    t = _warm_trainer("tiger-mix", seed=5)
    batch = t.buffer.sample(t.sample_rng, 4)
    b = len(batch)
    online = t._unroll(t.models, _obs_steps_for(t, batch), b)
    q_sum = dc.sum_all(dc.concat_rows([dc.sum_cols(q) for q in online.qs]))
    emb_sum = dc.sum_all(dc.concat_rows(list(online.embs)))
    dc.backward(dc.add(q_sum, emb_sum))
    for name, p in t.models.named_params().items():
        if name.startswith("scorer.") or name.startswith("mixer."):
            continue
        assert p.grad is not None, f"no gradient reached {name}"
    dc.clear_tape()
    for p in t.models.named_params().values():
        p.zero_grad()


# -- target sync ----------------------------------------------------------------------

def test_sync_copies_bitwise_and_isolates_until_next_sync():
    t = _warm_trainer(seed=6)
    t.sync_targets()
    for name, p in t.targets.named_params().items():
        assert np.array_equal(p.data, t.models.named_params()[name].data)
    frozen = {k: p.data.copy() for k, p in t.targets.named_params().items()}
    for _ in range(3):
        t.train_step()
    for name, p in t.targets.named_params().items():
        assert np.array_equal(p.data, frozen[name]), "target drifted between syncs"
    changed = any(
        not np.array_equal(p.data, t.targets.named_params()[name].data)
        for name, p in t.models.named_params().items())
    assert changed, "online parameters should have moved"


def test_sync_happens_every_interval_steps():
    cfg = _cfg(extra="target_sync_interval = 2")
    t = Trainer(cfg, seed=7)
    for _ in range(4):
        t.buffer.add(t.collect_episode())
    for k in range(4):
        t.train_step()
        if (k + 1) % 2 == 0:
            for name, p in t.targets.named_params().items():
                assert np.array_equal(p.data, t.models.named_params()[name].data)


# -- evaluation ----------------------------------------------------------------------

def test_uniform_policy_gather_five_agents_rarely_wins():
    cfg = parse_config_text("[env]\nn_agents = 5\n[algo]\nname = qmix\n")
    assert random_policy_metric(cfg, 1000, seed=8) < 0.1


def test_evaluate_deterministic_given_state():
    a = Trainer(_cfg(), seed=9)
    b = Trainer(_cfg(), seed=9)
    assert a.evaluate(8) == b.evaluate(8)


def test_evaluate_does_not_touch_training_counters():
    t = Trainer(_cfg(), seed=10)
    t.evaluate(4)
    assert t.env_steps == 0
    assert t.learner_steps == 0


def test_tag_returns_nonnegative():
    cfg = parse_config_text("""
[env]
name = tag
n_agents = 3
horizon = 15
n_adversaries = 1
[algo]
name = qmix
""")
    t = Trainer(cfg, seed=11)
    mean, _, values = t.evaluate(3)
    assert all(v >= 0.0 for v in values)
    assert mean >= 0.0


def test_random_policy_baseline_measurable():
    v = random_policy_metric(_cfg(), 200, seed=0)
    assert 0.05 < v < 0.4  # all-random consensus is rare but not negligible
