"""Synthetic quadratic testbed with closed-form return and distance maps.

A d-dimensional environment whose single transition is
``s' = s + gain * params (+ noise)`` and whose episode return, in
noise-free mode, equals exactly

    J(params) = peak - 0.5 * (params - target)' curvature (params - target)

so every estimator in the package (return gradients, distance Hessians,
constrained updates) has an analytic oracle.  The per-dimension ``gain``
scales the transition map, which makes the expected squared 2-Wasserstein
distance to a reference an arbitrary diagonal quadratic:

    E[W2^2](params, ref) = sum_i gain_i^2 (params_i - ref_i)^2.
"""

from __future__ import annotations

import numpy as np

from .base import EnvError, EnvSpec, ParamEnv, ParamVector


def default_params(d: int = 3) -> ParamVector:
    return ParamVector(np.zeros(d), tuple(f"phi_{i}" for i in range(d)))


class QuadTestbedEnv(ParamEnv):
    """One-step episodes; the action (a 1-d box) is accepted but ignored."""

    def __init__(self, params: ParamVector, seed: int, noise_std: float = 0.0,
                 curvature: np.ndarray | None = None,
                 target: np.ndarray | None = None,
                 peak: float = 0.0,
                 gain: np.ndarray | None = None):
        d = len(params)
        self.curvature = np.eye(d) if curvature is None else np.asarray(curvature, dtype=np.float64)
        self.target = np.zeros(d) if target is None else np.asarray(target, dtype=np.float64).reshape(-1)
        self.peak = float(peak)
        self.gain = np.ones(d) if gain is None else np.asarray(gain, dtype=np.float64).reshape(-1)
        if self.curvature.shape != (d, d):
            raise EnvError(f"curvature must be {(d, d)}, got {self.curvature.shape}")
        if not np.allclose(self.curvature, self.curvature.T):
            raise EnvError("curvature matrix must be symmetric")
        if self.target.size != d or self.gain.size != d:
            raise EnvError("target and gain must match the parameter dimension")
        if np.any(self.gain <= 0):
            raise EnvError(f"gain must be positive, got {self.gain}")
        spec = EnvSpec(
            family="quad_testbed",
            state_dim=d,
            action_dim=1,
            action_type="box",
            max_steps=1,
            init_dist="point mass at 0",
            reference_params=default_params(d),
            action_low=np.array([-1.0]),
            action_high=np.array([1.0]),
        )
        super().__init__(spec, params, seed, noise_std)

    def _sample_init_state(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(self.spec.state_dim)

    def _transition(self, state: np.ndarray, action) -> np.ndarray:
        return state + self.gain * self._params.values

    def _reward(self, state, action, next_state) -> float:
        delta = next_state / self.gain - self.target
        return self.peak - 0.5 * float(delta @ self.curvature @ delta)

    # -- analytic oracles -------------------------------------------------

    def return_value(self, values: np.ndarray) -> float:
        """Noise-free episode return as a function of the parameter values."""
        delta = np.asarray(values, dtype=np.float64) - self.target
        return self.peak - 0.5 * float(delta @ self.curvature @ delta)

    def return_gradient(self, values: np.ndarray) -> np.ndarray:
        delta = np.asarray(values, dtype=np.float64) - self.target
        return -self.curvature @ delta

    def return_hessian(self) -> np.ndarray:
        return -self.curvature.copy()

    def expected_w2_exact(self, values: np.ndarray, ref: np.ndarray) -> float:
        """Noise-free expected squared 2-Wasserstein distance between dynamics."""
        delta = np.asarray(values, dtype=np.float64) - np.asarray(ref, dtype=np.float64)
        return float(np.sum((self.gain * delta) ** 2))
