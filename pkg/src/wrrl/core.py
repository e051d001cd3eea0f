"""Alternating descent-ascent driver for Wasserstein-robust policy training.

Each outer iteration runs two phases.  Phase I minimizes the estimated
expected return over the dynamics parameters, constrained to the ellipsoid

    0.5 * (phi - phi0)' H0 (phi - phi0) <= epsilon

where H0 is the (estimated, positive-definite) Hessian of the expected
squared 2-Wasserstein distance at the reference parameters phi0.  Steps
move toward the closed-form minimizer of the linearized objective over the
ellipsoid, with a Wolfe line search on the estimated return.  Phase II is
a standard PPO update on rollouts collected under the current worst-case
dynamics.  With epsilon = 0 the dynamics stay pinned at phi0 and training
reduces exactly to plain PPO.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import LinearOperator, cg

from .envs import ParamEnv, ParamVector, make_env, reference_params
from .linesearch import LineSearchResult, WolfeConfig, wolfe_search
from .policy import (Critic, PPOConfig, PPOUpdater, collect_rollouts, make_policy,
                     policy_entropy)
from .wasserstein import build_bucket, default_n_next
from .zo import (GradEstimate, HessianEstimate, ZOConfig, estimate_return_gradient,
                 estimate_w2_hessian, make_return_fn)

CONSTRAINT_TOL = 1e-6


class ConvergedGradient(RuntimeError):
    """The estimated gradient vanished; the inner problem is stationary."""


def _as_matrix(h0) -> np.ndarray:
    return h0.matrix if isinstance(h0, HessianEstimate) else np.asarray(h0, dtype=np.float64)


def _as_vector(g) -> np.ndarray:
    return g.grad if isinstance(g, GradEstimate) else np.asarray(g, dtype=np.float64)


def solve_spd(matrix: np.ndarray, vec: np.ndarray, method: str = "auto") -> np.ndarray:
    """Solve H x = v for symmetric positive-definite H.

    Direct Cholesky for the moderate dimensions in scope; ``method="cg"``
    switches to conjugate gradients with matrix-vector products only.
    """
    if method == "auto":
        method = "direct" if matrix.shape[0] <= 64 else "cg"
    if method == "direct":
        return cho_solve(cho_factor(matrix), vec)
    if method == "cg":
        op = LinearOperator(matrix.shape, matvec=lambda x: matrix @ x)
        x, info = cg(op, vec, rtol=1e-12, atol=0.0, maxiter=10 * matrix.shape[0])
        if info != 0:
            raise np.linalg.LinAlgError(f"conjugate gradients did not converge (info={info})")
        return x
    raise ValueError(f"unknown method {method!r}")


def constraint_value(phi_values, phi0_values, h0) -> float:
    """Quadratic-form distance 0.5 (phi - phi0)' H0 (phi - phi0)."""
    d = np.asarray(phi_values, dtype=np.float64) - np.asarray(phi0_values, dtype=np.float64)
    return 0.5 * float(d @ _as_matrix(h0) @ d)


def closed_form_minimizer(g, h0, phi0: ParamVector, epsilon: float,
                          solve_method: str = "auto") -> ParamVector:
    """Minimizer of the linearized return over the constraint ellipsoid.

        phi* = phi0 - sqrt(2 eps / g' H0^-1 g) H0^-1 g

    which lands exactly on the ellipsoid boundary and satisfies the KKT
    conditions with multiplier sqrt(g' H0^-1 g / (2 eps)).
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    gv = _as_vector(g)
    if not np.any(gv):
        raise ConvergedGradient("zero gradient: any ellipsoid point is a minimizer")
    h = _as_matrix(h0)
    u = solve_spd(h, gv, solve_method)
    quad = float(gv @ u)
    if quad <= 0:
        raise np.linalg.LinAlgError(
            f"g' H0^-1 g = {quad:g} <= 0; H0 is not positive definite")
    step = np.sqrt(2.0 * epsilon / quad)
    return phi0.with_values(phi0.values - step * u)


def kkt_residuals(phi_star: ParamVector | np.ndarray, g, h0, phi0: ParamVector | np.ndarray,
                  epsilon: float) -> dict[str, float]:
    """Optimality diagnostics of the closed-form solution (all ~0 at optimum)."""
    x = phi_star.values if isinstance(phi_star, ParamVector) else np.asarray(phi_star)
    x0 = phi0.values if isinstance(phi0, ParamVector) else np.asarray(phi0)
    gv = _as_vector(g)
    h = _as_matrix(h0)
    u = solve_spd(h, gv)
    lam = float(np.sqrt(gv @ u / (2.0 * epsilon)))
    gnorm = float(np.linalg.norm(gv))
    cons = constraint_value(x, x0, h)
    return {
        "lambda": lam,
        "stationarity": float(np.linalg.norm(gv + lam * (h @ (x - x0)))) / max(gnorm, 1e-300),
        "primal": abs(cons - epsilon) / epsilon,
        "complementary_slackness": abs(lam * (cons - epsilon)),
    }


# ---------------------------------------------------------------------------
# Phase I: constrained descent on the dynamics parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InnerState:
    """One accepted iterate of the constrained descent."""

    x: ParamVector
    j: int
    last_grad: GradEstimate | None
    constraint: float
    alpha: float = 0.0
    wolfe_satisfied: bool = True


def inner_descent_step(state: InnerState, g, h0, phi0: ParamVector, epsilon: float,
                       wolfe: WolfeConfig,
                       j_eval: Callable[[np.ndarray], float],
                       ls_delta: float = 0.05) -> InnerState:
    """One step toward the closed-form point, with a Wolfe line search.

    ``j_eval`` estimates the expected return at given parameter values; the
    search minimizes it along p = (closed-form point - x).  Any step in
    [0, 1] stays inside the ellipsoid because both endpoints are feasible.
    """
    h = _as_matrix(h0)
    target = closed_form_minimizer(g, h, phi0, epsilon)
    p = target.values - state.x.values
    pnorm = float(np.linalg.norm(p))
    if pnorm < 1e-12 * max(1.0, float(np.linalg.norm(state.x.values))):
        return replace(state, j=state.j + 1, last_grad=g if isinstance(g, GradEstimate) else None)

    def f(alpha: float) -> float:
        return j_eval(state.x.values + alpha * p)

    def df(alpha: float) -> float:
        lo = max(alpha - ls_delta, 0.0)
        hi = min(alpha + ls_delta, wolfe.alpha_max)
        if hi <= lo:
            return 0.0
        return (f(hi) - f(lo)) / (hi - lo)

    result: LineSearchResult = wolfe_search(f, df, wolfe)
    new_x = state.x.with_values(state.x.values + result.alpha * p)
    cons = constraint_value(new_x.values, phi0.values, h)
    if cons > epsilon + CONSTRAINT_TOL:
        raise AssertionError(
            f"accepted step violates the constraint: {cons:g} > {epsilon:g}")
    return InnerState(x=new_x, j=state.j + 1,
                      last_grad=g if isinstance(g, GradEstimate) else None,
                      constraint=cons, alpha=result.alpha,
                      wolfe_satisfied=result.satisfied)


def inner_loop(grad_fn: Callable[[ParamVector, int], GradEstimate | np.ndarray],
               j_eval_fn: Callable[[np.ndarray, int], float],
               phi_init: ParamVector, h0, phi0: ParamVector, epsilon: float,
               wolfe: WolfeConfig, max_iters: int = 30, grad_tol: float = 0.01,
               seed: int = 0, ls_delta: float = 0.05) -> tuple[ParamVector, list[InnerState]]:
    """Iterate constrained descent steps until the gradient collapses.

    Terminates when the estimated gradient's infinity norm drops below
    ``grad_tol`` times its initial value, or after ``max_iters`` steps.
    ``grad_fn(phi, seed)`` supplies the return gradient at an iterate;
    ``j_eval_fn(values, seed)`` the return estimate for the line search.
    """
    seeds = np.random.SeedSequence(seed).spawn(max_iters)
    state = InnerState(x=phi_init, j=0, last_grad=None,
                       constraint=constraint_value(phi_init.values, phi0.values, h0))
    history: list[InnerState] = []
    g0_norm = None
    for j in range(max_iters):
        iter_seeds = seeds[j].spawn(2)
        g = grad_fn(state.x, int(iter_seeds[0].generate_state(1)[0]))
        gv = _as_vector(g)
        gnorm = float(np.max(np.abs(gv))) if gv.size else 0.0
        if g0_norm is None:
            g0_norm = gnorm
        if gnorm == 0.0 or gnorm < grad_tol * g0_norm:
            break
        ls_seed = int(iter_seeds[1].generate_state(1)[0])
        state = inner_descent_step(
            state, g, h0, phi0, epsilon, wolfe,
            j_eval=lambda values: j_eval_fn(values, ls_seed),
            ls_delta=ls_delta)
        history.append(state)
    return state.x, history


# ---------------------------------------------------------------------------
# full training driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WR2LConfig:
    """Everything Algorithm-level: ball radius, budgets, and nested configs."""

    epsilon: float
    outer_iters: int = 10
    inner_max_iters: int = 30
    inner_grad_tol: float = 0.01
    n_transitions: int = 5000
    grad_rollouts: int = 2
    ls_rollouts: int = 4
    ls_delta: float = 0.05
    bucket_size: int = 1000
    n_next: int | None = None  # None: 1 for noise-free dynamics, 32 otherwise
    hessian_samples: int = 2000
    hessian_sigma: float | None = None  # None: reuse zo.sigma
    warm_start: bool = True
    zo: ZOConfig = field(default_factory=lambda: ZOConfig(sigma=0.05, n_samples=16))
    ppo: PPOConfig = field(default_factory=PPOConfig)
    wolfe: WolfeConfig = field(default_factory=WolfeConfig)
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class TrainRecord:
    k: int
    phi: np.ndarray
    return_mean: float
    constraint: float
    entropy: float
    seconds: float


@dataclass
class TrainReport:
    """Append-only per-outer-iteration log plus run metadata."""

    param_names: tuple[str, ...]
    metadata: dict = field(default_factory=dict)
    records: list[TrainRecord] = field(default_factory=list)

    def append(self, record: TrainRecord) -> None:
        self.records.append(record)

    def to_csv(self, path_or_buffer) -> None:
        close = False
        if isinstance(path_or_buffer, (str, bytes)):
            buf = open(path_or_buffer, "w", newline="")
            close = True
        else:
            buf = path_or_buffer
        try:
            writer = csv.writer(buf)
            writer.writerow(["k", *[f"phi:{n}" for n in self.param_names],
                             "return_mean", "constraint", "entropy", "seconds"])
            for r in self.records:
                writer.writerow([r.k, *[repr(float(v)) for v in r.phi],
                                 repr(float(r.return_mean)), repr(float(r.constraint)),
                                 repr(float(r.entropy)), f"{r.seconds:.3f}"])
        finally:
            if close:
                buf.close()

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


@dataclass
class TrainResult:
    policy: object
    critic: Critic
    phi: ParamVector
    report: TrainReport
    h0: HessianEstimate | None = None


def _spawn_streams(seed: int):
    """Fixed stream layout shared by the robust and plain-PPO drivers."""
    children = np.random.SeedSequence(seed).spawn(6)
    return {
        "policy": np.random.default_rng(children[0]),
        "critic": np.random.default_rng(children[1]),
        "env_seed": int(children[2].generate_state(1)[0]),
        "actions": np.random.default_rng(children[3]),
        "shuffle": np.random.default_rng(children[4]),
        "phase1": children[5],
    }


def train(cfg: WR2LConfig, env_family: str, seed: int,
          phi0: ParamVector | None = None, env_options: dict | None = None,
          on_iteration: Callable[[TrainRecord], None] | None = None) -> TrainResult:
    """Alternate Phase I (worst-case dynamics descent) and Phase II (PPO).

    With ``epsilon = 0`` Phase I and all of its random streams are skipped
    entirely, so the run is bitwise identical to :func:`train_ppo`.
    """
    env_options = dict(env_options or {})
    phi0 = phi0 if phi0 is not None else reference_params(env_family)
    streams = _spawn_streams(seed)
    env = make_env(env_family, phi0, streams["env_seed"], **env_options)
    policy = make_policy(env, streams["policy"], cfg.hidden)
    critic = Critic(env.spec.state_dim, cfg.hidden, streams["critic"])
    updater = PPOUpdater(policy, critic, cfg.ppo)
    entropy_stop = cfg.ppo.resolve_entropy_threshold(env.spec.action_type)

    report = TrainReport(param_names=phi0.names, metadata={
        "family": env_family, "seed": int(seed), "epsilon": cfg.epsilon,
        "phi0": phi0.values.tolist(),
    })

    h0_est: HessianEstimate | None = None
    if cfg.epsilon > 0:
        p1 = streams["phase1"].spawn(2 + cfg.outer_iters)
        bucket = build_bucket(env_family, phi0, cfg.bucket_size,
                              seed=int(p1[0].generate_state(1)[0]),
                              env_options=env_options)
        n_next = cfg.n_next if cfg.n_next is not None else default_n_next(env)
        hess_cfg = replace(cfg.zo, n_samples=cfg.hessian_samples,
                           sigma=cfg.hessian_sigma or cfg.zo.sigma,
                           antithetic=False,
                           seed=int(p1[1].generate_state(1)[0]))
        h0_est = estimate_w2_hessian(bucket, phi0, hess_cfg, n_next=n_next)
        report.metadata["h0"] = h0_est.matrix.tolist()

        def env_factory(params: ParamVector, env_seed: int) -> ParamEnv:
            return make_env(env_family, params, env_seed, **env_options)

        def grad_fn(phi: ParamVector, grad_seed: int):
            return estimate_return_gradient(
                policy, env_factory, phi, replace(cfg.zo, seed=grad_seed),
                rollout_budget=cfg.grad_rollouts)

        def j_eval_fn(values: np.ndarray, eval_seed: int) -> float:
            f = make_return_fn(policy, env_factory, phi0, cfg.ls_rollouts)
            return f(values, np.random.default_rng(eval_seed))

    phi = phi0
    for k in range(cfg.outer_iters):
        t0 = time.perf_counter()
        if cfg.epsilon > 0:
            start = phi if cfg.warm_start else phi0
            phi, _ = inner_loop(
                grad_fn, j_eval_fn, start, h0_est, phi0, cfg.epsilon, cfg.wolfe,
                max_iters=cfg.inner_max_iters, grad_tol=cfg.inner_grad_tol,
                seed=int(p1[2 + k].generate_state(1)[0]), ls_delta=cfg.ls_delta)
            env.set_params(phi)
            cons = constraint_value(phi.values, phi0.values, h0_est)
        else:
            cons = 0.0
        batch = collect_rollouts(policy, env, cfg.n_transitions, streams["actions"])
        updater.update(policy, critic, batch, streams["shuffle"])
        entropy = policy_entropy(policy, batch.states)
        record = TrainRecord(k=k, phi=phi.values.copy(),
                             return_mean=float(batch.episode_returns.mean()),
                             constraint=cons, entropy=entropy,
                             seconds=time.perf_counter() - t0)
        report.append(record)
        if on_iteration is not None:
            on_iteration(record)
        if entropy < entropy_stop:
            report.metadata["stopped_on_entropy"] = k
            break
    return TrainResult(policy=policy, critic=critic, phi=phi, report=report, h0=h0_est)


def train_ppo(cfg: WR2LConfig, env_family: str, seed: int,
              phi0: ParamVector | None = None, env_options: dict | None = None,
              on_iteration: Callable[[TrainRecord], None] | None = None) -> TrainResult:
    """Plain PPO on the reference dynamics (the epsilon = 0 special case),
    written as an independent loop so the degeneracy is a real check."""
    env_options = dict(env_options or {})
    phi0 = phi0 if phi0 is not None else reference_params(env_family)
    streams = _spawn_streams(seed)
    env = make_env(env_family, phi0, streams["env_seed"], **env_options)
    policy = make_policy(env, streams["policy"], cfg.hidden)
    critic = Critic(env.spec.state_dim, cfg.hidden, streams["critic"])
    updater = PPOUpdater(policy, critic, cfg.ppo)
    entropy_stop = cfg.ppo.resolve_entropy_threshold(env.spec.action_type)
    report = TrainReport(param_names=phi0.names, metadata={
        "family": env_family, "seed": int(seed), "epsilon": 0.0,
        "phi0": phi0.values.tolist(),
    })
    for k in range(cfg.outer_iters):
        t0 = time.perf_counter()
        batch = collect_rollouts(policy, env, cfg.n_transitions, streams["actions"])
        updater.update(policy, critic, batch, streams["shuffle"])
        entropy = policy_entropy(policy, batch.states)
        record = TrainRecord(k=k, phi=phi0.values.copy(),
                             return_mean=float(batch.episode_returns.mean()),
                             constraint=0.0, entropy=entropy,
                             seconds=time.perf_counter() - t0)
        report.append(record)
        if on_iteration is not None:
            on_iteration(record)
        if entropy < entropy_stop:
            report.metadata["stopped_on_entropy"] = k
            break
    return TrainResult(policy=policy, critic=critic, phi=phi0, report=report)
