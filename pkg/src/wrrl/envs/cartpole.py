"""Classic cart-pole balancing, parameterized by pole length.

State is (x, x_dot, theta, theta_dot); two discrete actions push the cart
left or right with a fixed force.  Physics follow the standard frictionless
cart-pole ODE integrated with explicit Euler.  The single dynamics
parameter is the full pole length; the reference system uses 1.0.
"""

from __future__ import annotations

import math

import numpy as np

from .base import EnvError, EnvSpec, ParamEnv, ParamVector

GRAVITY = 9.8
MASS_CART = 1.0
MASS_POLE = 0.1
FORCE_MAG = 10.0
DT = 0.02
THETA_MAX = 12 * math.pi / 180.0
X_MAX = 2.4
MAX_STEPS = 1000
INIT_SPAN = 0.05

REFERENCE_LENGTH = 1.0
LENGTH_BOX = (0.05, 10.0)


def default_params(length: float = REFERENCE_LENGTH) -> ParamVector:
    return ParamVector(
        np.array([length]), ("pole_length",), np.array([LENGTH_BOX])
    )


class CartPoleEnv(ParamEnv):
    """Survival task: +1 reward per step until the pole or cart leaves bounds."""

    def __init__(self, params: ParamVector, seed: int, noise_std: float = 0.0,
                 max_steps: int = MAX_STEPS):
        spec = EnvSpec(
            family="cartpole",
            state_dim=4,
            action_dim=2,
            action_type="discrete",
            max_steps=max_steps,
            init_dist=f"uniform[-{INIT_SPAN}, {INIT_SPAN}]^4",
            reference_params=default_params(),
        )
        super().__init__(spec, params, seed, noise_std)

    def _validate_params(self, params: ParamVector) -> None:
        length = params.values[0]
        if length <= 0:
            raise EnvError(f"pole_length must be positive, got {length:g}")

    def _sample_init_state(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-INIT_SPAN, INIT_SPAN, size=4)

    def _transition(self, state: np.ndarray, action: int) -> np.ndarray:
        x, x_dot, theta, theta_dot = state
        force = FORCE_MAG if action == 1 else -FORCE_MAG
        # the ODE is written in terms of the pole's half length
        half = self._params.values[0] / 2.0
        total_mass = MASS_CART + MASS_POLE
        polemass_half = MASS_POLE * half
        sin_t = math.sin(theta)
        cos_t = math.cos(theta)
        temp = (force + polemass_half * theta_dot * theta_dot * sin_t) / total_mass
        theta_acc = (GRAVITY * sin_t - cos_t * temp) / (
            half * (4.0 / 3.0 - MASS_POLE * cos_t * cos_t / total_mass)
        )
        x_acc = temp - polemass_half * theta_acc * cos_t / total_mass
        return np.array([
            x + DT * x_dot,
            x_dot + DT * x_acc,
            theta + DT * theta_dot,
            theta_dot + DT * theta_acc,
        ])

    def _reward(self, state, action, next_state) -> float:
        return 1.0

    def _terminal(self, next_state: np.ndarray) -> bool:
        x, _, theta, _ = next_state
        return abs(theta) > THETA_MAX or abs(x) > X_MAX
