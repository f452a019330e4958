import numpy as np
import pytest

from conftest import LAMBDA
from fluidbia.bia import BiaInstance, sum_rate, user_rate
from fluidbia.channel import channel_at
from fluidbia.env import (
    EnvConfig,
    FeasibleRegion,
    PositionAction,
    PositionEnv,
    decouple,
    default_env_config,
    featurize,
    is_feasible,
    make_scenario,
    reward,
    rollout,
    rollout_batch,
    squash,
)
from fluidbia.policy import GaussianPolicy


@pytest.fixture
def cfg():
    return default_env_config(eta=1.0)


def origin_cfg(**kw):
    return EnvConfig(region=FeasibleRegion([-1, -1, -1], [1, 1, 1]), d_min=LAMBDA / 2, **kw)


def test_default_config(cfg):
    np.testing.assert_allclose(cfg.region.lo, [2.75, -0.25, -0.25])
    np.testing.assert_allclose(cfg.region.hi, [3.25, 0.25, 0.25])
    assert cfg.d_min == pytest.approx(LAMBDA / 2)
    assert (cfg.power, cfg.sigma2, cfg.num_users) == (0.25, 1e-9, 4)
    assert cfg.episode_length == 50 and cfg.violation_penalty == -10


def test_config_validation():
    r = FeasibleRegion([0, 0, 0], [1, 1, 1])
    with pytest.raises(ValueError):
        EnvConfig(region=r, d_min=0.0)
    with pytest.raises(ValueError):
        EnvConfig(region=r, d_min=0.1, episode_length=0)
    with pytest.raises(ValueError):
        EnvConfig(region=r, d_min=0.1, violation_penalty=1.0)
    with pytest.raises(ValueError):
        FeasibleRegion([0, 0, 0], [1, 0, 1])


def test_config_json_roundtrip(cfg):
    back = EnvConfig.from_json(cfg.to_json())
    assert back.to_dict() == cfg.to_dict()
    d = cfg.to_dict()
    d["extra"] = 1
    with pytest.raises(ValueError, match="extra"):
        EnvConfig.from_dict(d)


def test_is_feasible_examples():
    c = origin_cfg()
    d = c.d_min
    assert not is_feasible(PositionAction([0, 0, 0], [0, 0, 0]), c)
    assert is_feasible(PositionAction([0, 0, 0], [0, 0, d]), c)
    assert not is_feasible(PositionAction([0, 0, 0], [0, 0, 1 + 1e-6]), c)
    assert is_feasible(PositionAction([0, 0, 0], [0, 0, 1.0]), c)


def test_is_feasible_symmetric(rng):
    c = origin_cfg()
    for _ in range(200):
        u = rng.uniform(-1.01, 1.01, size=(2, 3))
        u[1] = u[0] + rng.normal(size=3) * c.d_min
        assert is_feasible(PositionAction(u[0], u[1]), c) == is_feasible(PositionAction(u[1], u[0]), c)


def test_reward_infeasible(geom, cfg, rng):
    r, inst = reward(PositionAction([3, 0, 0], [3, 0, 0]), geom, cfg, rng)
    assert r == cfg.violation_penalty and inst is None


def test_reward_zero_error_deterministic(geom, rng):
    cfg = default_env_config(eta=0.0)
    a = PositionAction([3, 0, 0], [3.1, 0.05, 0])
    h1, h2 = channel_at(geom, a.u1), channel_at(geom, a.u2)
    expect = user_rate(BiaInstance(h1, h2, np.zeros(2), np.zeros(2), 0.25, 1e-9, 4))
    r1, _ = reward(a, geom, cfg, np.random.default_rng(1))
    r2, _ = reward(a, geom, cfg, np.random.default_rng(2))
    assert r1 == r2 == expect


def test_reward_seeded_repeat(geom, cfg):
    a = PositionAction([3, 0, 0], [3.1, 0.05, 0])
    r1, i1 = reward(a, geom, cfg, np.random.default_rng(5))
    r2, i2 = reward(a, geom, cfg, np.random.default_rng(5))
    assert r1 == r2
    np.testing.assert_array_equal(i1.h_tilde, i2.h_tilde)
    np.testing.assert_array_equal(i1.delta, i2.delta)
    np.testing.assert_allclose(i1.h_tilde + i1.delta, [channel_at(geom, a.u1), channel_at(geom, a.u2)])


def test_feasible_reward_above_penalty(geom, cfg, rng):
    for _ in range(100):
        u = rng.uniform(cfg.region.lo, cfg.region.hi, size=(2, 3))
        a = PositionAction(u[0], u[1])
        if is_feasible(a, cfg):
            assert reward(a, geom, cfg, rng)[0] > cfg.violation_penalty


def test_squash_lands_in_box(cfg, rng):
    u = squash(rng.normal(scale=10, size=(1000, 6)), cfg.region)
    assert u.shape == (1000, 2, 3)
    assert np.all(cfg.region.contains(u))
    np.testing.assert_allclose(squash(np.zeros(6), cfg.region), [cfg.region.center] * 2)


def test_featurize_layout():
    h = np.array([[1 + 2j, 3 + 4j], [5 + 6j, 7 + 8j]])
    np.testing.assert_array_equal(featurize(h), [1, 2, 3, 4, 5, 6, 7, 8])
    assert featurize(np.zeros((5, 3, 2, 2), complex)).shape == (5, 3, 8)


def test_batched_positions_match_scalar_reward(geom):
    cfg = default_env_config(eta=0.0)
    env = PositionEnv(geom, cfg)
    rng = np.random.default_rng(0)
    pos = rng.uniform(cfg.region.lo, cfg.region.hi, size=(50, 2, 3))
    pos[0, 1] = pos[0, 0]
    r, s = env.evaluate_positions(pos, rng)
    for i in range(50):
        expect, _ = reward(PositionAction.from_array(pos[i]), geom, cfg, rng)
        assert r[i] == pytest.approx(expect, abs=1e-9)
    assert r[0] == cfg.violation_penalty
    np.testing.assert_allclose(s[1], featurize(np.stack([channel_at(geom, p) for p in pos[1]])))


def test_initial_state_reference(geom):
    cfg = default_env_config(eta=0.0)
    env = PositionEnv(geom, cfg)
    ref = env.reference_positions()
    np.testing.assert_allclose(ref[1] - ref[0], [cfg.d_min, 0, 0])
    np.testing.assert_allclose(ref.mean(axis=0), cfg.region.center)
    s = env.initial_states(3, np.random.default_rng(0))
    np.testing.assert_allclose(s[2], featurize(np.stack([channel_at(geom, p) for p in ref])))


def _policy(seed=0):
    return GaussianPolicy.init(8, 6, np.random.default_rng(seed), hidden=16)


def test_rollout_single_step(geom):
    cfg = default_env_config(eta=1.0, episode_length=1)
    traj = rollout(_policy(), geom, cfg, np.random.default_rng(0))
    assert traj.states.shape == (1, 1, 8) and traj.actions.shape == (1, 1, 6)
    assert traj.rewards.shape == (1, 1) and len(traj) == 1


def test_rollout_terminal_reward_and_determinism(geom):
    cfg = default_env_config(eta=0.0, episode_length=7)
    pol = _policy()
    t1 = rollout(pol, geom, cfg, np.random.default_rng(1), deterministic=True)
    t2 = rollout(pol, geom, cfg, np.random.default_rng(2), deterministic=True)
    np.testing.assert_array_equal(t1.rewards, t2.rewards)
    np.testing.assert_array_equal(t1.states, t2.states)
    assert t1.terminal_rewards[0] == t1.rewards[0, -1]


def test_rollout_state_follows_action(geom):
    cfg = default_env_config(eta=0.0, episode_length=4)
    env = PositionEnv(geom, cfg)
    pol = _policy(3)
    traj = rollout_batch(pol, env, 2, np.random.default_rng(0))
    for t in range(3):
        pos = env.to_positions(traj.actions[:, t])
        h = np.stack([[channel_at(geom, p) for p in pair] for pair in pos])
        np.testing.assert_allclose(traj.states[:, t + 1], featurize(h), atol=1e-12)
    # stored log-probs are those of the sampling policy
    lp = pol.log_prob(traj.states.reshape(-1, 8), traj.actions.reshape(-1, 6))
    np.testing.assert_allclose(traj.log_probs.ravel(), lp, atol=1e-12)


def test_decouple(rng):
    cfg = default_env_config(num_users=2)
    envs = decouple(make_scenario(cfg, rng))
    assert len(envs) == 2 and envs[0].cfg is envs[1].cfg
    assert not np.array_equal(envs[0].geom.prm, envs[1].geom.prm)
    assert len(decouple(make_scenario(default_env_config(), rng))) == 4


def test_decouple_sum_matches_sum_rate(rng):
    cfg = default_env_config(eta=1.0)
    envs = decouple(make_scenario(cfg, rng))
    a = PositionAction([3, 0, 0], [3.05, 0.1, -0.1])
    total, insts = 0.0, []
    for env in envs:
        r, inst = reward(a, env.geom, cfg, rng)
        total += r
        insts.append(inst)
    assert total == pytest.approx(sum_rate(insts), rel=1e-12)
