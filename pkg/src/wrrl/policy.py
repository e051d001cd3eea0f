"""Stochastic policies, rollout collection, advantage estimation and PPO updates.

Policies follow the standard continuous-control recipe: a two-hidden-layer
tanh network outputs the Gaussian mean (or categorical logits for discrete
actions), with a free per-dimension log standard deviation in the
continuous case.  The critic is a separate network of the same structure.
Updates ascend the clipped surrogate objective with minibatched
adaptive-moment steps; the critic regresses on returns-to-go.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .envs import ParamEnv
from .nets import MLP, Adam

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
GAUSSIAN_ENTROPY_CONST = 0.5 * math.log(2.0 * math.pi * math.e)


# ---------------------------------------------------------------------------
# policies and critic
# ---------------------------------------------------------------------------

class GaussianPolicy:
    """Diagonal-Gaussian policy for box action spaces.

    The flat parameter vector is the network weights followed by the free
    per-dimension log standard deviations.
    """

    action_type = "box"

    def __init__(self, state_dim: int, action_dim: int, hidden: tuple[int, ...] = (64, 64),
                 rng: np.random.Generator | None = None, init_log_std: float = 0.0):
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.net = MLP(state_dim, action_dim, hidden, rng, out_scale=0.01)
        self.log_std = np.full(action_dim, float(init_log_std))

    @property
    def n_params(self) -> int:
        return self.net.n_params + self.action_dim

    def get_theta(self) -> np.ndarray:
        return np.concatenate([self.net.theta, self.log_std])

    def set_theta(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {theta.size}")
        self.net.set_theta(theta[:self.net.n_params])
        self.log_std = theta[self.net.n_params:].copy()

    def _std(self) -> np.ndarray:
        return np.exp(np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX))

    def act(self, state: np.ndarray, rng: np.random.Generator):
        state = np.asarray(state, dtype=np.float64).reshape(1, -1)
        mean = self.net.forward(state)[0]
        if not np.all(np.isfinite(mean)):
            raise FloatingPointError(f"non-finite policy output for state {state}")
        std = self._std()
        action = mean + std * rng.standard_normal(self.action_dim)
        z = (action - mean) / std
        log_prob = float(np.sum(-0.5 * z * z - np.log(std) - HALF_LOG_2PI))
        return action, log_prob

    def mean_action(self, state: np.ndarray) -> np.ndarray:
        state = np.asarray(state, dtype=np.float64).reshape(1, -1)
        return self.net.forward(state)[0]

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        mean = self.net.forward(states)
        std = self._std()
        z = (actions - mean) / std
        return np.sum(-0.5 * z * z - np.log(std) - HALF_LOG_2PI, axis=1)

    def entropy(self, states: np.ndarray) -> float:
        """Mean differential entropy (state-independent for this family)."""
        clipped = np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)
        return float(np.sum(clipped + GAUSSIAN_ENTROPY_CONST))

    def logp_with_grad_hook(self, states: np.ndarray, actions: np.ndarray):
        """Log-probabilities plus a closure mapping per-sample weights to
        d/dtheta of sum_i weights_i * log pi(a_i | s_i)."""
        cache: list = []
        mean = self.net.forward(states, cache)
        clipped = np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)
        std = np.exp(clipped)
        z = (actions - mean) / std
        logp = np.sum(-0.5 * z * z - clipped - HALF_LOG_2PI, axis=1)
        active = (self.log_std > LOG_STD_MIN) & (self.log_std < LOG_STD_MAX)

        def grad(weights: np.ndarray) -> np.ndarray:
            dmean = weights[:, None] * z / std
            g_net = self.net.backward(cache, dmean)
            g_log_std = (weights[:, None] * (z * z - 1.0)).sum(axis=0) * active
            return np.concatenate([g_net, g_log_std])

        return logp, grad

    def entropy_grad(self, states: np.ndarray) -> np.ndarray:
        """d/dtheta of the mean entropy."""
        active = (self.log_std > LOG_STD_MIN) & (self.log_std < LOG_STD_MAX)
        return np.concatenate([np.zeros(self.net.n_params), active.astype(np.float64)])


class CategoricalPolicy:
    """Softmax policy over a finite action set."""

    action_type = "discrete"

    def __init__(self, state_dim: int, n_actions: int, hidden: tuple[int, ...] = (64, 64),
                 rng: np.random.Generator | None = None):
        self.state_dim = int(state_dim)
        self.action_dim = int(n_actions)
        self.net = MLP(state_dim, n_actions, hidden, rng, out_scale=0.01)

    @property
    def n_params(self) -> int:
        return self.net.n_params

    def get_theta(self) -> np.ndarray:
        return self.net.get_theta()

    def set_theta(self, theta: np.ndarray) -> None:
        self.net.set_theta(theta)

    @staticmethod
    def _log_softmax(logits: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))

    def act(self, state: np.ndarray, rng: np.random.Generator):
        state = np.asarray(state, dtype=np.float64).reshape(1, -1)
        logits = self.net.forward(state)
        if not np.all(np.isfinite(logits)):
            raise FloatingPointError(f"non-finite policy output for state {state}")
        logp = self._log_softmax(logits)[0]
        probs = np.exp(logp)
        action = int(rng.choice(self.action_dim, p=probs / probs.sum()))
        return action, float(logp[action])

    def mean_action(self, state: np.ndarray) -> int:
        state = np.asarray(state, dtype=np.float64).reshape(1, -1)
        return int(np.argmax(self.net.forward(state)[0]))

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        logp = self._log_softmax(self.net.forward(states))
        return logp[np.arange(len(actions)), actions.astype(int)]

    def entropy(self, states: np.ndarray) -> float:
        logp = self._log_softmax(self.net.forward(states))
        return float(np.mean(-np.sum(np.exp(logp) * logp, axis=1)))

    def logp_with_grad_hook(self, states: np.ndarray, actions: np.ndarray):
        cache: list = []
        logits = self.net.forward(states, cache)
        logp_all = self._log_softmax(logits)
        probs = np.exp(logp_all)
        idx = actions.astype(int)
        onehot = np.zeros_like(probs)
        onehot[np.arange(len(idx)), idx] = 1.0
        logp = logp_all[np.arange(len(idx)), idx]

        def grad(weights: np.ndarray) -> np.ndarray:
            dlogits = weights[:, None] * (onehot - probs)
            return self.net.backward(cache, dlogits)

        return logp, grad

    def entropy_grad(self, states: np.ndarray) -> np.ndarray:
        cache: list = []
        logits = self.net.forward(states, cache)
        logp = self._log_softmax(logits)
        probs = np.exp(logp)
        ent = -np.sum(probs * logp, axis=1, keepdims=True)
        dlogits = -probs * (logp + ent) / len(states)
        return self.net.backward(cache, dlogits)


class Critic:
    """State-value network with the same structure as the policy."""

    def __init__(self, state_dim: int, hidden: tuple[int, ...] = (64, 64),
                 rng: np.random.Generator | None = None):
        self.net = MLP(state_dim, 1, hidden, rng)

    @property
    def n_params(self) -> int:
        return self.net.n_params

    def get_theta(self) -> np.ndarray:
        return self.net.get_theta()

    def set_theta(self, theta: np.ndarray) -> None:
        self.net.set_theta(theta)

    def values(self, states: np.ndarray) -> np.ndarray:
        return self.net.forward(states)[:, 0]

    def mse_grad(self, states: np.ndarray, targets: np.ndarray):
        cache: list = []
        values = self.net.forward(states, cache)[:, 0]
        err = values - targets
        loss = float(np.mean(err * err))
        grad = self.net.backward(cache, (2.0 * err / len(err))[:, None])
        return loss, grad


def make_policy(env: ParamEnv, rng: np.random.Generator,
                hidden: tuple[int, ...] = (64, 64)):
    """Policy matching an environment's action space."""
    if env.spec.action_type == "discrete":
        return CategoricalPolicy(env.spec.state_dim, env.spec.action_dim, hidden, rng)
    return GaussianPolicy(env.spec.state_dim, env.spec.action_dim, hidden, rng)


def sample_action(policy, state, rng: np.random.Generator):
    """Draw an action and its log-probability from the policy."""
    return policy.act(state, rng)


def policy_entropy(policy, states: np.ndarray) -> float:
    """Mean (differential or categorical) entropy over the given states."""
    return policy.entropy(np.atleast_2d(np.asarray(states, dtype=np.float64)))


# ---------------------------------------------------------------------------
# rollouts and advantage estimation
# ---------------------------------------------------------------------------

@dataclass
class RolloutBatch:
    """On-policy transitions with per-episode bookkeeping.

    ``advantages`` and ``returns_to_go`` are filled by :func:`compute_gae`
    once value predictions are available.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    log_probs: np.ndarray
    episode_bounds: list[tuple[int, int]]
    episode_returns: np.ndarray
    values: np.ndarray | None = None
    advantages: np.ndarray | None = None
    returns_to_go: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.states)


def collect_rollouts(policy, env: ParamEnv, n_transitions: int,
                     rng: np.random.Generator) -> RolloutBatch:
    """Run whole episodes until at least ``n_transitions`` are collected."""
    if n_transitions < 1:
        raise ValueError(f"n_transitions must be >= 1, got {n_transitions}")
    states, actions, rewards, dones, log_probs = [], [], [], [], []
    bounds, ep_returns = [], []
    while len(states) < n_transitions:
        start = len(states)
        state = env.reset()
        ep_ret = 0.0
        while True:
            action, logp = policy.act(state, rng)
            tr = env.step(action)
            states.append(state)
            actions.append(action)
            rewards.append(tr.reward)
            dones.append(tr.done)
            log_probs.append(logp)
            ep_ret += tr.reward
            state = tr.next_state
            if tr.done:
                break
        bounds.append((start, len(states)))
        ep_returns.append(ep_ret)
    return RolloutBatch(
        states=np.asarray(states),
        actions=np.asarray(actions),
        rewards=np.asarray(rewards),
        dones=np.asarray(dones, dtype=bool),
        log_probs=np.asarray(log_probs),
        episode_bounds=bounds,
        episode_returns=np.asarray(ep_returns),
    )


def compute_gae(batch: RolloutBatch, critic: Critic, gamma: float, lam: float) -> None:
    """Generalized advantage estimation, in place.

    Episodes bootstrap a terminal value of zero, so lambda=1 reproduces the
    discounted Monte-Carlo advantage and lambda=0 the one-step TD residual.
    """
    values = critic.values(batch.states)
    advantages = np.zeros(len(batch))
    for start, end in batch.episode_bounds:
        gae = 0.0
        for t in range(end - 1, start - 1, -1):
            next_value = values[t + 1] if t + 1 < end else 0.0
            delta = batch.rewards[t] + gamma * next_value - values[t]
            gae = delta + gamma * lam * gae
            advantages[t] = gae
    batch.values = values
    batch.advantages = advantages
    batch.returns_to_go = advantages + values


# ---------------------------------------------------------------------------
# PPO update
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PPOConfig:
    clip_ratio: float = 0.2
    policy_lr: float = 3e-4
    critic_lr: float = 1e-3
    gae_lambda: float = 0.95
    gamma: float = 0.99
    epochs: int = 10
    minibatch_size: int = 64
    entropy_coef: float = 0.0
    entropy_stop_threshold: float | None = None  # resolved per action type

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if not 0.0 <= self.clip_ratio < 1.0:
            raise ValueError(f"clip_ratio must be in [0, 1), got {self.clip_ratio}")

    def resolve_entropy_threshold(self, action_type: str) -> float:
        if self.entropy_stop_threshold is not None:
            return self.entropy_stop_threshold
        return 0.3 if action_type == "discrete" else -0.5


def surrogate_objective(policy, states, actions, old_log_probs, advantages,
                        clip_ratio: float, entropy_coef: float = 0.0):
    """Clipped surrogate value and its exact gradient in the policy parameters.

    The subgradient at the clip boundary is taken from the clipped branch,
    so ``clip_ratio=0`` yields an exactly zero policy gradient.
    """
    logp, grad_hook = policy.logp_with_grad_hook(states, actions)
    ratio = np.exp(logp - old_log_probs)
    clipped_ratio = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio)
    per_sample = np.minimum(ratio * advantages, clipped_ratio * advantages)
    value = float(np.mean(per_sample))
    clipped_out = ((advantages > 0) & (ratio >= 1.0 + clip_ratio)) | \
                  ((advantages < 0) & (ratio <= 1.0 - clip_ratio))
    weights = np.where(clipped_out, 0.0, advantages * ratio) / len(states)
    grad = grad_hook(weights)
    if entropy_coef != 0.0:
        value += entropy_coef * policy.entropy(states)
        grad = grad + entropy_coef * policy.entropy_grad(states)
    return value, grad


@dataclass
class PPODiagnostics:
    surrogate: float = 0.0
    critic_loss: float = 0.0
    entropy: float = 0.0
    nan_abort: bool = False
    notes: list[str] = field(default_factory=list)


class PPOUpdater:
    """Holds the optimizer state across updates."""

    def __init__(self, policy, critic: Critic, cfg: PPOConfig):
        self.cfg = cfg
        self.pi_opt = Adam(policy.n_params, cfg.policy_lr)
        self.vf_opt = Adam(critic.n_params, cfg.critic_lr)

    def update(self, policy, critic: Critic, batch: RolloutBatch,
               rng: np.random.Generator) -> PPODiagnostics:
        return ppo_update(policy, critic, batch, self.cfg, rng,
                          self.pi_opt, self.vf_opt)


def ppo_update(policy, critic: Critic, batch: RolloutBatch, cfg: PPOConfig,
               rng: np.random.Generator, pi_opt: Adam | None = None,
               vf_opt: Adam | None = None) -> PPODiagnostics:
    """Clipped-surrogate ascent plus critic regression on one batch.

    Advantages are normalized per batch.  A non-finite loss aborts the
    update and restores the incoming parameters.
    """
    if batch.advantages is None:
        compute_gae(batch, critic, cfg.gamma, cfg.gae_lambda)
    if pi_opt is None:
        pi_opt = Adam(policy.n_params, cfg.policy_lr)
    if vf_opt is None:
        vf_opt = Adam(critic.n_params, cfg.critic_lr)
    adv = batch.advantages
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    theta0 = policy.get_theta()
    critic0 = critic.get_theta()
    diag = PPODiagnostics()
    n = len(batch)
    mb = min(cfg.minibatch_size, n)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            pick = order[start:start + mb]
            value, grad = surrogate_objective(
                policy, batch.states[pick], batch.actions[pick],
                batch.log_probs[pick], adv[pick], cfg.clip_ratio, cfg.entropy_coef)
            if not (np.isfinite(value) and np.all(np.isfinite(grad))):
                policy.set_theta(theta0)
                critic.set_theta(critic0)
                diag.nan_abort = True
                diag.notes.append("non-finite surrogate; update aborted")
                return diag
            # ascend the surrogate
            policy.set_theta(pi_opt.step(policy.get_theta(), -grad))
            vf_loss, vf_grad = critic.mse_grad(batch.states[pick], batch.returns_to_go[pick])
            if not np.all(np.isfinite(vf_grad)):
                policy.set_theta(theta0)
                critic.set_theta(critic0)
                diag.nan_abort = True
                diag.notes.append("non-finite critic gradient; update aborted")
                return diag
            critic.set_theta(vf_opt.step(critic.get_theta(), vf_grad))
            diag.surrogate = value
            diag.critic_loss = vf_loss
    diag.entropy = policy.entropy(batch.states)
    return diag
