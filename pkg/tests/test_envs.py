"""Environment semantics: reward rules, termination, determinism, layouts."""

import numpy as np
import pytest

from tiger.envs import GatherConfig, GatherEnv, PlacementError, TagConfig, TagEnv


def _gather(n=5, **kw):
    return GatherEnv(GatherConfig(n_agents=n, **kw))


# -- gather: reset -----------------------------------------------------------------

def test_optimal_goal_uniform_over_resets():
    env = _gather()
    rng = np.random.default_rng(0)
    counts = np.zeros(3)
    for _ in range(10_000):
        env.reset(rng)
        counts[env._optimal] += 1
    assert np.all(np.abs(counts / 10_000 - 1 / 3) < 0.02)


def test_uninformed_goal_slot_is_zero():
    env = _gather()
    rng = np.random.default_rng(1)
    res = env.reset(rng)
    n = env.n_agents
    for i in range(n):
        flag = res.observations[i, n]
        goal_slot = res.observations[i, n + 1 : n + 4]
        if flag == 0.0:
            assert np.array_equal(goal_slot, np.zeros(3))
        else:
            assert goal_slot.sum() == 1.0


def test_observation_shapes_uniform_across_agents():
    env = _gather()
    res = env.reset(np.random.default_rng(2))
    assert res.observations.shape == (5, env.obs_dim)
    assert res.reward == 0.0
    assert not res.terminated


def test_default_informed_count_is_two_of_five():
    env = _gather()
    env.reset(np.random.default_rng(3))
    assert env._informed.sum() == 2


# -- gather: step ------------------------------------------------------------------

def _reset_with_optimal(env, optimal, seed=0):
    rng = np.random.default_rng(seed)
    while True:
        res = env.reset(rng)
        if env._optimal == optimal:
            return res


def test_all_on_optimal_goal_wins_ten():
    env = _gather()
    _reset_with_optimal(env, 1)
    res = env.step(np.full(5, 1))
    assert res.reward == 10.0
    assert res.terminated
    assert res.info["won"]


def test_unanimous_non_optimal_pays_five():
    env = _gather()
    _reset_with_optimal(env, 1)
    res = env.step(np.full(5, 0))
    assert res.reward == 5.0
    assert res.terminated
    assert not res.info["won"]


def test_split_vote_costs_five_and_continues():
    env = _gather()
    _reset_with_optimal(env, 1)
    res = env.step(np.array([1, 1, 1, 1, 0]))
    assert res.reward == -5.0
    assert not res.terminated


def test_episode_caps_at_horizon():
    env = _gather()
    env.reset(np.random.default_rng(4))
    for t in range(8):
        res = env.step(np.array([0, 1, 2, 0, 1]))
    assert res.terminated
    with pytest.raises(RuntimeError, match="finished"):
        env.step(np.zeros(5, dtype=int))


def test_action_out_of_range_rejected():
    env = _gather()
    env.reset(np.random.default_rng(5))
    with pytest.raises(ValueError, match="out of range"):
        env.step(np.array([0, 1, 3, 0, 1]))


def test_same_seed_same_episode():
    def run(seed):
        env = _gather()
        res = env.reset(np.random.default_rng(seed))
        track = [res.observations.copy(), res.global_state.copy()]
        for a in ([0, 1, 2, 0, 1], [2, 2, 2, 2, 2]):
            res = env.step(np.array(a))
            track += [res.observations.copy(), res.global_state.copy(),
                      np.array([res.reward])]
        return track

    for a, b in zip(run(7), run(7)):
        assert np.array_equal(a, b)


def test_gather_step_rewards_in_contract_set():
    env = _gather(3)
    rng = np.random.default_rng(8)
    seen = set()
    for _ in range(200):
        res = env.reset(rng)
        while not res.terminated:
            res = env.step(rng.integers(0, 3, size=3))
            seen.add(res.reward)
    assert seen <= {10.0, 5.0, -5.0, 0.0}


def test_gather_split_without_optimal_is_free():
    env = _gather(3)
    _reset_with_optimal(env, 2)
    res = env.step(np.array([0, 0, 1]))  # nobody on the optimal goal
    assert res.reward == 0.0
    assert not res.terminated
    res = env.step(np.array([0, 0, 2]))  # one agent stands on the optimal goal
    assert res.reward == -5.0


# -- tag ---------------------------------------------------------------------------

def _tag(**kw):
    return TagEnv(TagConfig(**kw))


def test_tag_initial_layout_respects_spacing():
    env = _tag()
    res = env.reset(np.random.default_rng(0))
    pts = np.vstack([env._pursuers, env._adversaries])
    d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    np.fill_diagonal(d, np.inf)
    assert d.min() > env.config.collision_radius
    for o in env._obstacles:
        assert np.linalg.norm(pts - o, axis=1).min() > env.config.obstacle_radius
    assert res.reward == 0.0


def test_tag_state_concatenates_entity_kinematics():
    env = _tag()
    res = env.reset(np.random.default_rng(1))
    assert res.global_state.shape == (4 * (10 + 3),)
    assert env.state_dim == 52


def test_tag_same_seed_identical_layouts():
    a, b = _tag(), _tag()
    a.reset(np.random.default_rng(5))
    b.reset(np.random.default_rng(5))
    assert np.array_equal(a._pursuers, b._pursuers)
    assert np.array_equal(a._adversaries, b._adversaries)
    assert np.array_equal(a._obstacles, b._obstacles)


def test_tag_zero_collisions_zero_reward():
    env = _tag()
    env.reset(np.random.default_rng(2))
    # spread everyone far apart
    env._pursuers[:] = -0.9
    env._pursuers[:, 1] = np.linspace(-0.9, 0.9, 10)
    env._adversaries[:] = 0.9
    env._adversaries[:, 1] = np.linspace(-0.5, 0.5, 3)
    res = env.step(np.zeros(10, dtype=int))
    assert res.reward == 0.0


def test_tag_simultaneous_tags_sum():
    env = _tag()
    env.reset(np.random.default_rng(3))
    env._pursuers[:] = np.linspace(-0.9, 0.9, 10)[:, None] * np.array([1.0, 0.0]) \
        + np.array([0.0, -0.9])
    env._adversaries[:] = np.array([[0.9, 0.9], [-0.9, 0.9], [0.0, 0.9]])
    # park two pursuers on two different adversaries; evaders move one
    # adversary_speed step, far less than the collision radius allows
    env._pursuers[0] = env._adversaries[0]
    env._pursuers[1] = env._adversaries[1]
    res = env.step(np.zeros(10, dtype=int))
    assert res.reward == 2.0
    assert res.info["captures"] == 2


def test_tag_noop_keeps_position():
    env = _tag()
    env.reset(np.random.default_rng(4))
    before = env._pursuers.copy()
    env.step(np.zeros(10, dtype=int))
    assert np.array_equal(env._pursuers, before)
    assert np.array_equal(env._pursuer_vel, np.zeros_like(before))


def test_tag_terminates_exactly_at_horizon():
    env = _tag(horizon=12)
    env.reset(np.random.default_rng(6))
    for t in range(12):
        res = env.step(np.zeros(10, dtype=int))
        assert res.terminated == (t == 11)


def test_tag_reward_never_negative():
    env = _tag(horizon=30, n_pursuers=4, n_adversaries=2)
    rng = np.random.default_rng(7)
    res = env.reset(rng)
    while not res.terminated:
        res = env.step(rng.integers(0, 5, size=4))
        assert res.reward >= 0.0
        assert res.reward == int(res.reward)


def test_tag_speed_ordering_enforced():
    with pytest.raises(ValueError, match="faster"):
        TagConfig(pursuer_speed=0.05, adversary_speed=0.05)


def test_tag_adversary_flees_nearest_pursuer():
    env = _tag(n_obstacles=0)
    env.reset(np.random.default_rng(8))
    env._pursuers[:] = -0.95
    env._adversaries[0] = np.array([0.0, 0.0])
    env._adversaries[1:] = 0.9
    before = env._adversaries[0].copy()
    env.step(np.zeros(10, dtype=int))
    after = env._adversaries[0]
    d0 = np.linalg.norm(env._pursuers - before, axis=1).min()
    d1 = np.linalg.norm(env._pursuers - after, axis=1).min()
    assert d1 > d0


def test_tag_obstacle_blocks_movement():
    env = _tag(n_obstacles=1)
    env.reset(np.random.default_rng(9))
    env._obstacles[0] = np.array([0.5, 0.0])
    env._pursuers[0] = np.array([0.27, 0.0])  # obstacle edge at x = 0.3
    env._adversaries[:] = -0.9
    env.step(np.concatenate([[1], np.zeros(9)]).astype(int))
    assert env._pursuers[0][0] <= 0.3 + 1e-12


def test_tag_placement_failure_raises():
    cfg = TagConfig(n_pursuers=200, n_adversaries=3, arena_half_width=0.2,
                    collision_radius=0.15, placement_retries=20)
    with pytest.raises(PlacementError):
        TagEnv(cfg).reset(np.random.default_rng(10))
