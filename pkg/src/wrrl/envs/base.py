"""Base types for parameterized episodic simulators.

Every environment family exposes its dynamics through an explicit
parameter vector that can be swapped at any time via ``set_params``,
so the same simulator instance can serve both the reference dynamics
and any perturbed candidate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class EnvError(ValueError):
    """Invalid environment construction, parameters, or inputs."""


@dataclass(frozen=True)
class ParamVector:
    """Dense vector of dynamics-specification parameters.

    Attributes:
        values: parameter values, shape (d,), finite.
        names: one label per dimension.
        bounds: optional (d, 2) physical-validity box [lo, hi].
    """

    values: np.ndarray
    names: tuple[str, ...]
    bounds: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) != values.size:
            raise EnvError(
                f"{values.size} values but {len(self.names)} names"
            )
        if not np.all(np.isfinite(values)):
            raise EnvError(f"non-finite parameter values: {values}")
        if self.bounds is not None:
            bounds = np.asarray(self.bounds, dtype=np.float64).reshape(-1, 2)
            if bounds.shape[0] != values.size:
                raise EnvError(
                    f"bounds shape {bounds.shape} does not match dimension {values.size}"
                )
            object.__setattr__(self, "bounds", bounds)
            bad = (values < bounds[:, 0]) | (values > bounds[:, 1])
            if np.any(bad):
                idx = int(np.nonzero(bad)[0][0])
                raise EnvError(
                    f"parameter {self.names[idx]}={values[idx]:g} outside "
                    f"validity box [{bounds[idx, 0]:g}, {bounds[idx, 1]:g}]"
                )

    def __len__(self) -> int:
        return self.values.size

    def with_values(self, values: Sequence[float] | np.ndarray) -> "ParamVector":
        """Same names/bounds, new values (re-validated)."""
        return ParamVector(np.asarray(values, dtype=np.float64), self.names, self.bounds)

    def contains(self, values: np.ndarray) -> bool:
        """True if ``values`` lies inside the validity box (always True without bounds)."""
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.size != len(self):
            return False
        if not np.all(np.isfinite(values)):
            return False
        if self.bounds is None:
            return True
        return bool(
            np.all(values >= self.bounds[:, 0]) and np.all(values <= self.bounds[:, 1])
        )


@dataclass(frozen=True)
class EnvSpec:
    """Static description of an environment family instance."""

    family: str
    state_dim: int
    action_dim: int
    action_type: str  # "discrete" or "box"
    max_steps: int
    init_dist: str
    reference_params: ParamVector
    action_low: np.ndarray | None = None
    action_high: np.ndarray | None = None

    def __post_init__(self):
        if self.max_steps < 1:
            raise EnvError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.action_type not in ("discrete", "box"):
            raise EnvError(f"unknown action_type {self.action_type!r}")


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray | int
    next_state: np.ndarray
    reward: float
    done: bool


class ParamEnv:
    """Single-owner episodic simulator with swappable dynamics parameters.

    Subclasses implement ``_sample_init_state``, ``_transition`` (the
    deterministic mean map), ``_reward`` and ``_terminal``.  Additive
    Gaussian transition noise of scale ``noise_std`` is applied uniformly
    by this base class, so every family has both a Dirac and a genuinely
    stochastic mode.

    Determinism contract: identical (params, seed, action sequence) give an
    identical trajectory.  Episode randomness (init states, transition
    noise) and ``next_state_samples`` draw from two independent streams so
    probing successor distributions never perturbs a running episode.
    """

    def __init__(self, spec: EnvSpec, params: ParamVector, seed: int, noise_std: float = 0.0):
        if len(params) != len(spec.reference_params):
            raise EnvError(
                f"{spec.family}: expected {len(spec.reference_params)} parameters, "
                f"got {len(params)}"
            )
        if noise_std < 0:
            raise EnvError(f"noise_std must be >= 0, got {noise_std}")
        self.spec = spec
        self.noise_std = float(noise_std)
        self._params = params
        self._validate_params(params)
        self.seed = int(seed)
        ep_ss, probe_ss = np.random.SeedSequence(self.seed).spawn(2)
        self._rng = np.random.default_rng(ep_ss)
        self._probe_rng = np.random.default_rng(probe_ss)
        self._state: np.ndarray | None = None
        self._t = 0
        self._done = True

    # -- family hooks ----------------------------------------------------

    def _validate_params(self, params: ParamVector) -> None:
        """Raise EnvError on physically invalid values (beyond the box check)."""

    def _sample_init_state(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _transition(self, state: np.ndarray, action) -> np.ndarray:
        """Noise-free successor state under the current parameters."""
        raise NotImplementedError

    def _reward(self, state: np.ndarray, action, next_state: np.ndarray) -> float:
        raise NotImplementedError

    def _terminal(self, next_state: np.ndarray) -> bool:
        """State-based termination (time limit is handled by the base class)."""
        return False

    # -- public interface ------------------------------------------------

    @property
    def params(self) -> ParamVector:
        return self._params

    def set_params(self, params: ParamVector) -> None:
        """Swap the dynamics parameters; takes effect on the next step."""
        if len(params) != len(self._params):
            raise EnvError(
                f"{self.spec.family}: expected {len(self._params)} parameters, "
                f"got {len(params)}"
            )
        merged = ParamVector(params.values, self._params.names, self._params.bounds)
        self._validate_params(merged)
        self._params = merged

    def reset(self) -> np.ndarray:
        self._state = self._sample_init_state(self._rng)
        self._t = 0
        self._done = False
        return self._state.copy()

    @property
    def state(self) -> np.ndarray:
        if self._state is None:
            raise EnvError("reset() must be called before reading the state")
        return self._state.copy()

    @property
    def done(self) -> bool:
        return self._done

    def _check_action(self, action):
        if self.spec.action_type == "discrete":
            a = int(action)
            if not 0 <= a < self.spec.action_dim:
                raise EnvError(f"discrete action {action} not in [0, {self.spec.action_dim})")
            return a
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.size != self.spec.action_dim:
            raise EnvError(
                f"action dimension {a.size} != {self.spec.action_dim}"
            )
        if not np.all(np.isfinite(a)):
            raise EnvError(f"non-finite action {a}")
        return a

    def step(self, action) -> Transition:
        if self._state is None:
            raise EnvError("reset() must be called before step()")
        if self._done:
            raise EnvError("episode is done; call reset()")
        a = self._check_action(action)
        state = self._state
        nxt = self._transition(state, a)
        if self.noise_std > 0:
            nxt = nxt + self.noise_std * self._rng.standard_normal(nxt.size)
        reward = float(self._reward(state, a, nxt))
        self._t += 1
        done = self._terminal(nxt) or self._t >= self.spec.max_steps
        self._state = nxt
        self._done = done
        return Transition(state.copy(), a, nxt.copy(), reward, done)

    def next_state_samples(self, state, action, n: int) -> np.ndarray:
        """n independent successor draws from (state, action) under the current params.

        Deterministic families return n identical rows.  Uses a dedicated
        RNG stream, leaving the episode stream untouched.
        """
        if n < 1:
            raise EnvError(f"n must be >= 1, got {n}")
        state = np.asarray(state, dtype=np.float64).reshape(-1)
        if state.size != self.spec.state_dim:
            raise EnvError(f"state dimension {state.size} != {self.spec.state_dim}")
        a = self._check_action(action)
        mean = self._transition(state, a)
        out = np.tile(mean, (n, 1))
        if self.noise_std > 0:
            out = out + self.noise_std * self._probe_rng.standard_normal(out.shape)
        return out

    def sample_action(self, rng: np.random.Generator):
        """Draw a uniform-random action (used to populate constraint buckets)."""
        if self.spec.action_type == "discrete":
            return int(rng.integers(self.spec.action_dim))
        return rng.uniform(self.spec.action_low, self.spec.action_high)
