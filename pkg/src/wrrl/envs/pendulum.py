"""Torque-controlled pendulum swing-up with (length, mass) parameterization.

State is (theta, theta_dot) with theta measured from upright and wrapped to
[-pi, pi].  The continuous action is a torque in [-2, 2]; the cost penalizes
angle, angular velocity and effort.  Episodes run a fixed number of steps.
"""

from __future__ import annotations

import math

import numpy as np

from .base import EnvError, EnvSpec, ParamEnv, ParamVector

GRAVITY = 9.8
DT = 0.05
MAX_STEPS = 200
MAX_TORQUE = 2.0
MAX_SPEED = 8.0

REFERENCE_LENGTH = 1.0
REFERENCE_MASS = 1.0
PARAM_BOX = ((0.1, 10.0), (0.1, 10.0))


def default_params(length: float = REFERENCE_LENGTH,
                   mass: float = REFERENCE_MASS) -> ParamVector:
    return ParamVector(
        np.array([length, mass]), ("length", "mass"), np.array(PARAM_BOX)
    )


def _wrap_angle(theta: float) -> float:
    return ((theta + math.pi) % (2 * math.pi)) - math.pi


class PendulumEnv(ParamEnv):
    """Reward is -(theta^2 + 0.1*theta_dot^2 + 0.001*torque^2) per step."""

    def __init__(self, params: ParamVector, seed: int, noise_std: float = 0.0,
                 max_steps: int = MAX_STEPS):
        spec = EnvSpec(
            family="pendulum",
            state_dim=2,
            action_dim=1,
            action_type="box",
            max_steps=max_steps,
            init_dist="theta ~ uniform[-pi, pi], theta_dot ~ uniform[-1, 1]",
            reference_params=default_params(),
            action_low=np.array([-MAX_TORQUE]),
            action_high=np.array([MAX_TORQUE]),
        )
        super().__init__(spec, params, seed, noise_std)

    def _validate_params(self, params: ParamVector) -> None:
        length, mass = params.values
        if length <= 0 or mass <= 0:
            raise EnvError(f"length and mass must be positive, got {params.values}")

    def _sample_init_state(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-1.0, 1.0)])

    def _transition(self, state: np.ndarray, action: np.ndarray) -> np.ndarray:
        theta, theta_dot = state
        length, mass = self._params.values
        torque = min(max(float(action[0]), -MAX_TORQUE), MAX_TORQUE)
        theta_acc = (3.0 * GRAVITY / (2.0 * length)) * math.sin(theta) \
            + 3.0 / (mass * length * length) * torque
        new_dot = theta_dot + DT * theta_acc
        new_dot = min(max(new_dot, -MAX_SPEED), MAX_SPEED)
        new_theta = _wrap_angle(theta + DT * new_dot)
        return np.array([new_theta, new_dot])

    def _reward(self, state, action, next_state) -> float:
        theta, theta_dot = state
        torque = min(max(float(action[0]), -MAX_TORQUE), MAX_TORQUE)
        return -(theta * theta + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque)
