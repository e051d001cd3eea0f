"""Robust reinforcement learning over a Wasserstein ball of simulator dynamics.

The package trains policies against worst-case dynamics drawn from an
epsilon-ball (in expected squared 2-Wasserstein distance) around a
reference simulator, alternating zero-order constrained descent on the
dynamics parameters with proximal policy ascent on the policy parameters.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .core import (WR2LConfig, TrainReport, TrainResult, closed_form_minimizer,
                   constraint_value, inner_descent_step, inner_loop, kkt_residuals,
                   train, train_ppo)
from .envs import (EnvError, EnvSpec, ParamEnv, ParamVector, Transition, make_env,
                   param_vector, reference_params)
from .harness import EvalGrid, EvalReport, compare_policies, default_cartpole_grid, evaluate_grid
from .linesearch import WolfeConfig, wolfe_search
from .policy import (CategoricalPolicy, Critic, GaussianPolicy, PPOConfig, RolloutBatch,
                     collect_rollouts, compute_gae, make_policy, policy_entropy,
                     ppo_update, sample_action)
from .wasserstein import (StateActionBucket, build_bucket, expected_w2,
                          w2_squared_1d, w2_squared_empirical, w2_squared_gaussian)
from .zo import (GradEstimate, HessianEstimate, ZOConfig, estimate_return_gradient,
                 estimate_w2_hessian, finite_diff_oracle, zo_gradient, zo_hessian)

__all__ = [
    "CategoricalPolicy", "Critic", "EnvError", "EnvSpec", "EvalGrid", "EvalReport",
    "GaussianPolicy", "GradEstimate", "HessianEstimate", "ParamEnv", "ParamVector",
    "PPOConfig", "RolloutBatch", "StateActionBucket", "TrainReport", "TrainResult",
    "Transition", "WR2LConfig", "WolfeConfig", "ZOConfig", "build_bucket",
    "closed_form_minimizer", "collect_rollouts", "compare_policies", "compute_gae",
    "constraint_value", "default_cartpole_grid", "estimate_return_gradient",
    "estimate_w2_hessian", "evaluate_grid", "expected_w2", "finite_diff_oracle",
    "inner_descent_step", "inner_loop", "kkt_residuals", "make_env", "make_policy",
    "param_vector", "policy_entropy", "ppo_update", "reference_params",
    "sample_action", "train", "train_ppo", "w2_squared_1d", "w2_squared_empirical",
    "w2_squared_gaussian", "wolfe_search", "zo_gradient", "zo_hessian", "__version__",
]
