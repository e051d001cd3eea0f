"""Parameterized episodic simulators with swappable dynamics."""

from __future__ import annotations

import numpy as np

from . import cartpole, pendulum, quadratic
from .base import EnvError, EnvSpec, ParamEnv, ParamVector, Transition

FAMILIES = ("cartpole", "pendulum", "quad_testbed")

_CONSTRUCTORS = {
    "cartpole": cartpole.CartPoleEnv,
    "pendulum": pendulum.PendulumEnv,
    "quad_testbed": quadratic.QuadTestbedEnv,
}


def make_env(family: str, params: ParamVector, seed: int, **options) -> ParamEnv:
    """Create an isolated, deterministically seeded simulator instance.

    ``options`` are family-specific keyword arguments (``noise_std`` for
    every family; ``curvature``/``target``/``peak``/``gain`` for the
    quadratic testbed; ``max_steps`` overrides for the physical families).
    """
    if family not in _CONSTRUCTORS:
        raise EnvError(f"unknown family {family!r}; choose from {FAMILIES}")
    return _CONSTRUCTORS[family](params, seed, **options)


def reference_params(family: str, **kwargs) -> ParamVector:
    """The nominal parameter vector for a family."""
    if family == "cartpole":
        return cartpole.default_params(**kwargs)
    if family == "pendulum":
        return pendulum.default_params(**kwargs)
    if family == "quad_testbed":
        return quadratic.default_params(**kwargs)
    raise EnvError(f"unknown family {family!r}; choose from {FAMILIES}")


def param_vector(family: str, values) -> ParamVector:
    """Build a ParamVector with the family's standard names and bounds."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if family == "quad_testbed":
        return quadratic.default_params(values.size).with_values(values)
    return reference_params(family).with_values(values)


__all__ = [
    "EnvError",
    "EnvSpec",
    "FAMILIES",
    "ParamEnv",
    "ParamVector",
    "Transition",
    "make_env",
    "param_vector",
    "reference_params",
]
