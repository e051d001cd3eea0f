"""Run configuration: strict YAML parsing, defaults, and round-tripping.

A run file has four sections (``env``, ``wr2l``, ``eval``, ``io``).
Unknown keys are rejected with their full path, every numeric default
lives in the DEFAULTS table below, and a parsed config serializes back to
an equivalent document (parse -> serialize -> parse is the identity).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .envs import FAMILIES, ParamVector, reference_params
from .harness import EvalGrid
from .linesearch import WolfeConfig
from .policy import PPOConfig
from .core import WR2LConfig
from .zo import ZOConfig


class ConfigError(ValueError):
    """Malformed run configuration; the message names the offending field."""


DEFAULTS: dict = {
    "env": {
        "family": "cartpole",
        "params": None,        # family reference values
        "noise_std": 0.0,
        "bounds": None,        # per-dimension [lo, hi] validity box override
        "quad": {"curvature": None, "target": None, "peak": 0.0, "gain": None},
    },
    "wr2l": {
        "epsilon": None,       # required
        "outer_iters": 10,
        "inner_max_iters": 30,
        "inner_grad_tol": 0.01,
        "n_transitions": 5000,
        "grad_rollouts": 2,
        "ls_rollouts": 4,
        "ls_delta": 0.05,
        "bucket_size": 1000,
        "n_next": None,
        "hessian_samples": 2000,
        "hessian_sigma": None,
        "warm_start": True,
        "hidden": [64, 64],
        "zo": {"sigma": 0.05, "n_samples": 16, "antithetic": True, "max_resample": 100},
        "ppo": {"clip_ratio": 0.2, "policy_lr": 3e-4, "critic_lr": 1e-3,
                "gae_lambda": 0.95, "gamma": 0.99, "epochs": 10,
                "minibatch_size": 64, "entropy_coef": 0.0,
                "entropy_stop_threshold": None},
        "wolfe": {"c1": 1e-4, "c2": 0.9, "alpha_init": 1.0, "alpha_max": 1.0,
                  "alpha_min": 0.05, "max_iters": 8},
    },
    "eval": {
        "axes": None,          # default: the family's standard sweep
        "episodes_per_point": 20,
        "max_episode_len": 1000,
        "stochastic": True,
    },
    "io": {
        "out_dir": "runs",
        "seed": 0,
        "jobs": 1,
    },
}


def _check_keys(data: dict, template: dict, path: str) -> None:
    for key in data:
        if key not in template:
            raise ConfigError(f"unknown key '{path}{key}'")
        if isinstance(template[key], dict) and isinstance(data[key], dict):
            _check_keys(data[key], template[key], f"{path}{key}.")


def _merged(data: dict, template: dict) -> dict:
    out = {}
    for key, default in template.items():
        if isinstance(default, dict) and key in data and isinstance(data[key], dict):
            out[key] = _merged(data[key], default)
        elif key in data:
            out[key] = data[key]
        elif isinstance(default, dict):
            out[key] = _merged({}, default)
        else:
            out[key] = default
    return out


def _require(value, name: str):
    if value is None:
        raise ConfigError(f"missing required field '{name}'")
    return value


@dataclass
class RunConfig:
    """Fully resolved configuration for one run directory."""

    raw: dict

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("top level must be a mapping")
        _check_keys(data, DEFAULTS, "")
        merged = _merged(data, DEFAULTS)
        family = merged["env"]["family"]
        if family not in FAMILIES:
            raise ConfigError(f"env.family must be one of {FAMILIES}, got {family!r}")
        return cls(raw=merged)

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from exc
        return cls.from_dict(data or {})

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_yaml(fh.read())

    def to_dict(self) -> dict:
        return self.raw

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=True, default_flow_style=None)

    # -- resolved objects --------------------------------------------------

    @property
    def family(self) -> str:
        return self.raw["env"]["family"]

    @property
    def seed(self) -> int:
        return int(self.raw["io"]["seed"])

    @property
    def jobs(self) -> int:
        return int(self.raw["io"]["jobs"])

    @property
    def out_dir(self) -> str:
        return self.raw["io"]["out_dir"]

    def phi0(self) -> ParamVector:
        env = self.raw["env"]
        if env["params"] is None:
            if self.family == "quad_testbed":
                raise ConfigError("env.params is required for the quad_testbed family")
            base = reference_params(self.family)
        else:
            values = np.asarray(env["params"], dtype=np.float64)
            if self.family == "quad_testbed":
                base = reference_params("quad_testbed", d=values.size).with_values(values)
            else:
                base = reference_params(self.family).with_values(values)
        if env["bounds"] is not None:
            bounds = np.asarray(env["bounds"], dtype=np.float64)
            base = ParamVector(base.values, base.names, bounds)
        return base

    def env_options(self) -> dict:
        env = self.raw["env"]
        options: dict = {}
        if env["noise_std"]:
            options["noise_std"] = float(env["noise_std"])
        if self.family == "quad_testbed":
            quad = env["quad"]
            for key in ("curvature", "target", "gain"):
                if quad[key] is not None:
                    options[key] = np.asarray(quad[key], dtype=np.float64)
            if quad["peak"]:
                options["peak"] = float(quad["peak"])
        return options

    def wr2l(self) -> WR2LConfig:
        w = self.raw["wr2l"]
        epsilon = _require(w["epsilon"], "wr2l.epsilon")
        try:
            return WR2LConfig(
                epsilon=float(epsilon),
                outer_iters=int(w["outer_iters"]),
                inner_max_iters=int(w["inner_max_iters"]),
                inner_grad_tol=float(w["inner_grad_tol"]),
                n_transitions=int(w["n_transitions"]),
                grad_rollouts=int(w["grad_rollouts"]),
                ls_rollouts=int(w["ls_rollouts"]),
                ls_delta=float(w["ls_delta"]),
                bucket_size=int(w["bucket_size"]),
                n_next=None if w["n_next"] is None else int(w["n_next"]),
                hessian_samples=int(w["hessian_samples"]),
                hessian_sigma=None if w["hessian_sigma"] is None else float(w["hessian_sigma"]),
                warm_start=bool(w["warm_start"]),
                hidden=tuple(int(h) for h in w["hidden"]),
                zo=ZOConfig(sigma=float(w["zo"]["sigma"]),
                            n_samples=int(w["zo"]["n_samples"]),
                            antithetic=bool(w["zo"]["antithetic"]),
                            max_resample=int(w["zo"]["max_resample"])),
                ppo=PPOConfig(
                    clip_ratio=float(w["ppo"]["clip_ratio"]),
                    policy_lr=float(w["ppo"]["policy_lr"]),
                    critic_lr=float(w["ppo"]["critic_lr"]),
                    gae_lambda=float(w["ppo"]["gae_lambda"]),
                    gamma=float(w["ppo"]["gamma"]),
                    epochs=int(w["ppo"]["epochs"]),
                    minibatch_size=int(w["ppo"]["minibatch_size"]),
                    entropy_coef=float(w["ppo"]["entropy_coef"]),
                    entropy_stop_threshold=(
                        None if w["ppo"]["entropy_stop_threshold"] is None
                        else float(w["ppo"]["entropy_stop_threshold"]))),
                wolfe=WolfeConfig(c1=float(w["wolfe"]["c1"]), c2=float(w["wolfe"]["c2"]),
                                  alpha_init=float(w["wolfe"]["alpha_init"]),
                                  alpha_max=float(w["wolfe"]["alpha_max"]),
                                  alpha_min=float(w["wolfe"]["alpha_min"]),
                                  max_iters=int(w["wolfe"]["max_iters"])),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid wr2l section: {exc}") from exc

    def eval_grid(self) -> EvalGrid:
        ev = self.raw["eval"]
        axes_cfg = ev["axes"]
        if axes_cfg is None:
            if self.family == "cartpole":
                axes_cfg = [{"name": "pole_length", "start": 0.3, "stop": 3.0, "num": 28}]
            else:
                raise ConfigError("eval.axes is required for this family")
        axes = []
        for i, axis in enumerate(axes_cfg):
            if not isinstance(axis, dict) or "name" not in axis:
                raise ConfigError(f"eval.axes[{i}] needs a 'name'")
            name = axis["name"]
            if "values" in axis:
                values = tuple(float(v) for v in axis["values"])
            elif {"start", "stop", "num"} <= set(axis):
                values = tuple(np.linspace(float(axis["start"]), float(axis["stop"]),
                                           int(axis["num"])).tolist())
            else:
                raise ConfigError(
                    f"eval.axes[{i}] needs 'values' or 'start'/'stop'/'num'")
            extra = set(axis) - {"name", "values", "start", "stop", "num"}
            if extra:
                raise ConfigError(f"unknown key 'eval.axes[{i}].{sorted(extra)[0]}'")
            axes.append((name, values))
        try:
            return EvalGrid(axes=tuple(axes),
                            episodes_per_point=int(ev["episodes_per_point"]),
                            max_episode_len=int(ev["max_episode_len"]))
        except ValueError as exc:
            raise ConfigError(f"invalid eval section: {exc}") from exc

    @property
    def eval_stochastic(self) -> bool:
        return bool(self.raw["eval"]["stochastic"])
