import math

import numpy as np
import pytest

from wrrl.envs import make_env, param_vector
from wrrl.nets import MLP, Adam
from wrrl.policy import (CategoricalPolicy, Critic, GaussianPolicy, PPOConfig,
                         PPOUpdater, RolloutBatch, collect_rollouts, compute_gae,
                         policy_entropy, ppo_update, sample_action, surrogate_objective)


class FixedValues:
    """Critic stub returning preset values (for hand-computed GAE episodes)."""

    def __init__(self, values):
        self._values = np.asarray(values, dtype=np.float64)

    def values(self, states):
        return self._values[:len(states)]


class TestMLP:
    def test_forward_backward_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        net = MLP(3, 2, hidden=(5,), rng=rng)
        x = rng.normal(size=(7, 3))
        dout = rng.normal(size=(7, 2))
        cache = []
        net.forward(x, cache)
        grad = net.backward(cache, dout)
        theta = net.get_theta()
        h = 1e-6
        fd = np.zeros_like(theta)
        for i in range(len(theta)):
            tp = theta.copy(); tp[i] += h
            net.set_theta(tp)
            up = float((net.forward(x) * dout).sum())
            tm = theta.copy(); tm[i] -= h
            net.set_theta(tm)
            down = float((net.forward(x) * dout).sum())
            fd[i] = (up - down) / (2 * h)
        net.set_theta(theta)
        np.testing.assert_allclose(grad, fd, atol=1e-7)

    def test_theta_roundtrip(self):
        net = MLP(4, 3, hidden=(6, 6), rng=np.random.default_rng(1))
        theta = net.get_theta()
        net.set_theta(np.zeros_like(theta))
        assert np.all(net.forward(np.ones((1, 4))) == 0)
        net.set_theta(theta)
        assert np.array_equal(net.get_theta(), theta)

    def test_wrong_size_rejected(self):
        net = MLP(2, 1, hidden=(3,))
        with pytest.raises(ValueError):
            net.set_theta(np.zeros(5))


class TestAdam:
    def test_zero_gradient_is_identity(self):
        opt = Adam(4, lr=0.1)
        theta = np.array([1.0, -2.0, 0.5, 0.0])
        assert np.array_equal(opt.step(theta, np.zeros(4)), theta)

    def test_descends_quadratic(self):
        opt = Adam(1, lr=0.1)
        x = np.array([3.0])
        for _ in range(200):
            x = opt.step(x, 2 * x)
        assert abs(x[0]) < 0.1


class TestSampling:
    def test_reproducible(self):
        pol = GaussianPolicy(3, 2, hidden=(8,), rng=np.random.default_rng(2))
        s = np.array([0.1, -0.2, 0.3])
        a1, lp1 = sample_action(pol, s, np.random.default_rng(5))
        a2, lp2 = sample_action(pol, s, np.random.default_rng(5))
        assert np.array_equal(a1, a2) and lp1 == lp2

    def test_zero_variance_limit(self):
        pol = GaussianPolicy(3, 2, hidden=(8,), rng=np.random.default_rng(2),
                             init_log_std=-50.0)  # clamped to the floor
        s = np.array([0.1, -0.2, 0.3])
        action, _ = pol.act(s, np.random.default_rng(0))
        np.testing.assert_allclose(action, pol.mean_action(s), atol=1e-7)

    def test_farther_actions_less_likely(self):
        pol = GaussianPolicy(2, 1, hidden=(8,), rng=np.random.default_rng(3))
        s = np.array([0.5, -0.5])
        mean = pol.mean_action(s)
        rng = np.random.default_rng(7)
        for _ in range(20):
            a, _ = pol.act(s, rng)
            farther = mean + 1.7 * (a - mean)
            lp_a = pol.log_prob(s[None, :], a[None, :])[0]
            lp_far = pol.log_prob(s[None, :], farther[None, :])[0]
            assert lp_a >= lp_far

    def test_density_integrates_to_one(self):
        # Monte-Carlo integral of the 1-d action density
        pol = GaussianPolicy(2, 1, hidden=(8,), rng=np.random.default_rng(4))
        s = np.array([0.2, 0.1])
        mean = pol.mean_action(s)[0]
        rng = np.random.default_rng(8)
        lo, hi = mean - 8.0, mean + 8.0
        xs = rng.uniform(lo, hi, size=200_000)
        dens = np.exp(pol.log_prob(np.tile(s, (len(xs), 1)), xs[:, None]))
        integral = (hi - lo) * dens.mean()
        assert integral == pytest.approx(1.0, rel=0.02)

    def test_discrete_action_sampling(self):
        pol = CategoricalPolicy(4, 2, hidden=(8,), rng=np.random.default_rng(5))
        rng = np.random.default_rng(0)
        actions = {pol.act(np.zeros(4), rng)[0] for _ in range(50)}
        assert actions <= {0, 1}


class TestEntropy:
    def test_unit_gaussian_entropy(self):
        pol = GaussianPolicy(2, 1, hidden=(4,), rng=np.random.default_rng(0),
                             init_log_std=0.0)
        expected = 0.5 * math.log(2 * math.pi * math.e)
        assert policy_entropy(pol, np.zeros((3, 2))) == pytest.approx(expected, abs=1e-12)

    def test_doubling_std_adds_log2_per_dim(self):
        pol = GaussianPolicy(2, 3, hidden=(4,), rng=np.random.default_rng(0),
                             init_log_std=0.0)
        base = policy_entropy(pol, np.zeros((1, 2)))
        pol.log_std = pol.log_std + math.log(2.0)
        assert policy_entropy(pol, np.zeros((1, 2))) == pytest.approx(
            base + 3 * math.log(2.0), abs=1e-12)

    def test_uniform_categorical(self):
        pol = CategoricalPolicy(3, 2, hidden=(4,))
        pol.set_theta(np.zeros(pol.n_params))  # zero logits => uniform
        assert policy_entropy(pol, np.zeros((5, 3))) == pytest.approx(math.log(2.0))


class TestRollouts:
    def test_collects_at_least_n_with_complete_final_episode(self):
        env = make_env("cartpole", param_vector("cartpole", [1.0]), seed=0)
        pol = CategoricalPolicy(4, 2, hidden=(8,), rng=np.random.default_rng(1))
        batch = collect_rollouts(pol, env, 300, np.random.default_rng(2))
        assert len(batch) >= 300
        assert batch.dones[-1]
        assert batch.episode_bounds[-1][1] == len(batch)
        lengths = [e - s for s, e in batch.episode_bounds]
        assert sum(lengths) == len(batch)

    def test_deterministic(self):
        pol = CategoricalPolicy(4, 2, hidden=(8,), rng=np.random.default_rng(1))
        b1 = collect_rollouts(pol, make_env("cartpole", param_vector("cartpole", [1.0]), seed=3),
                              200, np.random.default_rng(4))
        b2 = collect_rollouts(pol, make_env("cartpole", param_vector("cartpole", [1.0]), seed=3),
                              200, np.random.default_rng(4))
        assert np.array_equal(b1.states, b2.states)
        assert np.array_equal(b1.actions, b2.actions)
        assert np.array_equal(b1.log_probs, b2.log_probs)

    def test_zero_reward_env_zero_advantages(self):
        # curvature 0 makes every reward exactly 0; a zero critic then gives GAE 0
        env = make_env("quad_testbed", param_vector("quad_testbed", [0.3, 0.1]),
                       seed=0, curvature=np.zeros((2, 2)))
        pol = GaussianPolicy(2, 1, hidden=(4,), rng=np.random.default_rng(0))
        batch = collect_rollouts(pol, env, 20, np.random.default_rng(1))
        critic = Critic(2, hidden=(4,))
        critic.set_theta(np.zeros(critic.n_params))
        compute_gae(batch, critic, gamma=0.99, lam=0.95)
        assert np.array_equal(batch.advantages, np.zeros(len(batch)))

    def test_episode_returns_are_reward_sums(self):
        env = make_env("pendulum", param_vector("pendulum", [1.0, 1.0]), seed=2)
        pol = GaussianPolicy(2, 1, hidden=(8,), rng=np.random.default_rng(1))
        batch = collect_rollouts(pol, env, 250, np.random.default_rng(3))
        for (s, e), ret in zip(batch.episode_bounds, batch.episode_returns):
            assert ret == pytest.approx(batch.rewards[s:e].sum(), abs=1e-9)


class TestGAE:
    def _episode(self):
        batch = RolloutBatch(
            states=np.zeros((3, 1)),
            actions=np.zeros(3),
            rewards=np.array([1.0, 2.0, 3.0]),
            dones=np.array([False, False, True]),
            log_probs=np.zeros(3),
            episode_bounds=[(0, 3)],
            episode_returns=np.array([6.0]),
        )
        return batch, FixedValues([0.5, 0.2, 0.1])

    def test_lambda_one_is_discounted_monte_carlo(self):
        batch, critic = self._episode()
        gamma = 0.9
        compute_gae(batch, critic, gamma=gamma, lam=1.0)
        v = [0.5, 0.2, 0.1]
        returns = [1 + gamma * 2 + gamma ** 2 * 3, 2 + gamma * 3, 3.0]
        expected = [ret - vi for ret, vi in zip(returns, v)]
        np.testing.assert_allclose(batch.advantages, expected, atol=1e-12)

    def test_lambda_zero_is_td_residual(self):
        batch, critic = self._episode()
        gamma = 0.9
        compute_gae(batch, critic, gamma=gamma, lam=0.0)
        v = [0.5, 0.2, 0.1, 0.0]
        expected = [1 + gamma * v[1] - v[0], 2 + gamma * v[2] - v[1], 3 + 0 - v[2]]
        np.testing.assert_allclose(batch.advantages, expected, atol=1e-12)

    def test_returns_to_go(self):
        batch, critic = self._episode()
        compute_gae(batch, critic, gamma=0.9, lam=0.5)
        np.testing.assert_allclose(batch.returns_to_go,
                                   batch.advantages + batch.values, atol=1e-12)


def make_batch_for_update(seed=0, n=48):
    env = make_env("cartpole", param_vector("cartpole", [1.0]), seed=seed)
    pol = CategoricalPolicy(4, 2, hidden=(8,), rng=np.random.default_rng(seed))
    critic = Critic(4, hidden=(8,), rng=np.random.default_rng(seed + 1))
    batch = collect_rollouts(pol, env, n, np.random.default_rng(seed + 2))
    return pol, critic, batch


class TestSurrogate:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        pol = GaussianPolicy(3, 2, hidden=(4,), rng=rng)
        states = rng.normal(size=(10, 3))
        actions = rng.normal(size=(10, 2))
        theta = pol.get_theta()
        pol.set_theta(theta + 0.01 * rng.normal(size=pol.n_params))
        old_lp = pol.log_prob(states, actions)
        pol.set_theta(theta)
        adv = rng.normal(size=10)
        _, grad = surrogate_objective(pol, states, actions, old_lp, adv, 0.2, 0.01)
        h = 1e-6
        fd = np.zeros_like(theta)
        for i in range(len(theta)):
            for sign, store in ((1, 0), (-1, 1)):
                t = theta.copy(); t[i] += sign * h
                pol.set_theta(t)
                val, _ = surrogate_objective(pol, states, actions, old_lp, adv, 0.2, 0.01)
                fd[i] += sign * val / (2 * h)
        pol.set_theta(theta)
        assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-6

    def test_zero_clip_ratio_zero_gradient(self):
        rng = np.random.default_rng(1)
        pol = CategoricalPolicy(4, 2, hidden=(4,), rng=rng)
        states = rng.normal(size=(6, 4))
        actions = rng.integers(0, 2, size=6)
        old_lp = pol.log_prob(states, actions)
        adv = rng.normal(size=6)
        _, grad = surrogate_objective(pol, states, actions, old_lp, adv, 0.0, 0.0)
        assert np.array_equal(grad, np.zeros_like(grad))


class TestPPOUpdate:
    def test_zero_advantages_leave_policy_unchanged(self):
        pol, critic, batch = make_batch_for_update()
        compute_gae(batch, critic, 0.99, 0.95)
        batch.advantages = np.zeros(len(batch))
        theta_before = pol.get_theta()
        cfg = PPOConfig(epochs=2, minibatch_size=16, entropy_coef=0.0)
        ppo_update(pol, critic, batch, cfg, np.random.default_rng(0))
        assert np.array_equal(pol.get_theta(), theta_before)

    def test_entropy_bonus_moves_policy_with_zero_advantages(self):
        pol, critic, batch = make_batch_for_update()
        compute_gae(batch, critic, 0.99, 0.95)
        batch.advantages = np.zeros(len(batch))
        theta_before = pol.get_theta()
        cfg = PPOConfig(epochs=1, minibatch_size=16, entropy_coef=0.05)
        ppo_update(pol, critic, batch, cfg, np.random.default_rng(0))
        assert not np.array_equal(pol.get_theta(), theta_before)

    def test_surrogate_nondecreasing_over_epochs_majority(self):
        passes = 0
        trials = 20
        for seed in range(trials):
            pol, critic, batch = make_batch_for_update(seed=seed, n=64)
            compute_gae(batch, critic, 0.99, 0.95)
            adv = batch.advantages
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
            batch.advantages = adv
            cfg = PPOConfig(epochs=1, minibatch_size=32, policy_lr=3e-4,
                            entropy_coef=0.0)
            updater = PPOUpdater(pol, critic, cfg)
            values = []
            for _ in range(4):
                val, _ = surrogate_objective(pol, batch.states, batch.actions,
                                             batch.log_probs, adv, cfg.clip_ratio)
                values.append(val)
                updater.update(pol, critic, batch, np.random.default_rng(seed))
            val, _ = surrogate_objective(pol, batch.states, batch.actions,
                                         batch.log_probs, adv, cfg.clip_ratio)
            values.append(val)
            if all(b >= a - 1e-9 for a, b in zip(values, values[1:])):
                passes += 1
        assert passes >= 0.8 * trials

    def test_nan_aborts_and_restores(self):
        pol, critic, batch = make_batch_for_update()
        compute_gae(batch, critic, 0.99, 0.95)
        batch.log_probs = np.full(len(batch), -np.inf)  # poisoned ratios
        theta_before = pol.get_theta()
        critic_before = critic.get_theta()
        diag = ppo_update(pol, critic, batch, PPOConfig(epochs=1, minibatch_size=16),
                          np.random.default_rng(0))
        assert diag.nan_abort
        assert diag.notes
        assert np.array_equal(pol.get_theta(), theta_before)
        assert np.array_equal(critic.get_theta(), critic_before)

    def test_critic_regresses_on_returns(self):
        pol, critic, batch = make_batch_for_update(n=96)
        cfg = PPOConfig(epochs=20, minibatch_size=32, critic_lr=5e-3)
        compute_gae(batch, critic, cfg.gamma, cfg.gae_lambda)
        before = float(np.mean((critic.values(batch.states) - batch.returns_to_go) ** 2))
        ppo_update(pol, critic, batch, cfg, np.random.default_rng(0))
        after = float(np.mean((critic.values(batch.states) - batch.returns_to_go) ** 2))
        assert after < before
