"""Zero-order Monte-Carlo estimators for dynamics-parameter derivatives.

Gradients of the expected return and the Hessian of the expected squared
2-Wasserstein distance are estimated from function evaluations only, by
perturbing the parameter vector with Gaussian noise xi ~ N(0, sigma^2 I):

    grad  ~ mean_i [ xi_i * f(phi + xi_i) ] / sigma^2
    hess  ~ mean_i [ xi_i w(phi0 + xi_i) xi_i' / sigma^2 - w(phi0 + xi_i) I ] / sigma^2

Each perturbation index draws from its own counter-based RNG stream, so
estimates are identical however the evaluations are scheduled, and the
reduction always runs in index order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .envs import ParamEnv, ParamVector


class EstimationError(RuntimeError):
    """Estimator could not produce a finite result."""


@dataclass(frozen=True)
class ZOConfig:
    """Perturbation scale and sampling budget for zero-order estimates.

    ``n_samples`` counts function evaluations; antithetic sampling spends
    them in (+xi, -xi) pairs.
    """

    sigma: float
    n_samples: int
    antithetic: bool = True
    seed: int = 0
    max_resample: int = 100

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be finite and positive, got {self.sigma}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.antithetic and self.n_samples < 2:
            raise ValueError("antithetic sampling needs n_samples >= 2")


@dataclass(frozen=True)
class GradEstimate:
    grad: np.ndarray
    n_used: int
    stderr: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.grad)):
            raise EstimationError(f"non-finite gradient estimate: {self.grad}")


@dataclass(frozen=True)
class HessianEstimate:
    matrix: np.ndarray
    n_used: int
    regularized: bool
    min_eig_floor: float


def _stream_base(seed: int) -> int:
    return int(np.random.SeedSequence(seed).generate_state(2, np.uint64)[0]) << 64


def _stream(base: int, index: int) -> np.random.Generator:
    """Independent per-index stream from a counter-based generator."""
    return np.random.Generator(np.random.Philox(key=base + index))


class _LazyStream:
    """Per-index stream materialized only when an evaluation draws from it.

    Keeps scheduling independence (the stream depends only on the base seed
    and the perturbation index) without paying generator construction for
    deterministic objective functions.
    """

    __slots__ = ("_base", "_index", "_rng")

    def __init__(self, base: int, index: int):
        self._base = base
        self._index = index
        self._rng = None

    def __getattr__(self, name):
        if self._rng is None:
            self._rng = _stream(self._base, self._index)
        return getattr(self._rng, name)


def _draw_perturbations(base: int, phi: ParamVector, cfg: ZOConfig, n: int,
                        two_sided: bool) -> np.ndarray:
    """n scaled Gaussian rows, each keeping phi (+/-) xi inside the validity box.

    The batch comes from one dedicated stream; rows violating the box are
    redrawn from their own per-index streams, so results do not depend on
    how evaluations are scheduled.
    """
    xi_rng = _stream(base, 2 ** 62)
    xi = cfg.sigma * xi_rng.standard_normal((n, len(phi)))
    if phi.bounds is None:
        return xi
    lo, hi = phi.bounds[:, 0], phi.bounds[:, 1]

    def ok(rows: np.ndarray) -> np.ndarray:
        plus = phi.values + rows
        inside = np.all((plus >= lo) & (plus <= hi), axis=1)
        if two_sided:
            minus = phi.values - rows
            inside &= np.all((minus >= lo) & (minus <= hi), axis=1)
        return inside

    bad = np.nonzero(~ok(xi))[0]
    for i in bad:
        rng = _stream(base, int(i))
        for _ in range(cfg.max_resample):
            cand = cfg.sigma * rng.standard_normal(len(phi))
            if ok(cand[None, :])[0]:
                xi[i] = cand
                break
        else:
            raise EstimationError(
                f"no valid perturbation after {cfg.max_resample} draws; "
                "sigma is likely too large for the parameter bounds")
    return xi


def zo_gradient(f: Callable[[np.ndarray, np.random.Generator], float],
                phi: ParamVector, cfg: ZOConfig) -> GradEstimate:
    """Zero-order gradient of a scalar function of the parameter values.

    ``f(values, rng)`` is evaluated at perturbed parameter values; the rng
    argument is the evaluation's private stream (ignore it for
    deterministic functions).
    """
    base = _stream_base(cfg.seed)
    center = phi.values
    if cfg.antithetic:
        n_pairs = cfg.n_samples // 2
        xi = _draw_perturbations(base, phi, cfg, n_pairs, two_sided=True)
        deltas = np.empty(n_pairs)
        for i in range(n_pairs):
            rng = _LazyStream(base, i)
            deltas[i] = f(center + xi[i], rng) - f(center - xi[i], rng)
        terms = xi * (deltas / (2.0 * cfg.sigma ** 2))[:, None]
        n_used = 2 * n_pairs
    else:
        xi = _draw_perturbations(base, phi, cfg, cfg.n_samples, two_sided=False)
        values = np.empty(cfg.n_samples)
        for i in range(cfg.n_samples):
            values[i] = f(center + xi[i], _LazyStream(base, i))
        terms = xi * (values / cfg.sigma ** 2)[:, None]
        n_used = cfg.n_samples
    if not np.all(np.isfinite(terms)):
        raise EstimationError("non-finite function value during gradient estimation")
    grad = terms.mean(axis=0)
    if terms.shape[0] > 1:
        stderr = terms.std(axis=0, ddof=1) / np.sqrt(terms.shape[0])
    else:
        stderr = np.full(len(phi), np.inf)
    return GradEstimate(grad=grad, n_used=n_used, stderr=stderr)


def rollout_return(policy, env: ParamEnv, rng: np.random.Generator,
                   n_episodes: int = 1) -> float:
    """Mean undiscounted episode return of a stochastic policy."""
    total = 0.0
    for _ in range(n_episodes):
        state = env.reset()
        ep = 0.0
        while True:
            action, _ = policy.act(state, rng)
            tr = env.step(action)
            ep += tr.reward
            state = tr.next_state
            if tr.done:
                break
        total += ep
    return total / n_episodes


def make_return_fn(policy, env_factory: Callable[[ParamVector, int], ParamEnv],
                   phi: ParamVector, rollout_budget: int):
    """Estimated expected return as a function of the parameter values."""
    def f(values: np.ndarray, rng: np.random.Generator) -> float:
        env = env_factory(phi.with_values(values), int(rng.integers(2 ** 63)))
        return rollout_return(policy, env, rng, n_episodes=rollout_budget)
    return f


def estimate_return_gradient(policy, env_factory: Callable[[ParamVector, int], ParamEnv],
                             phi: ParamVector, cfg: ZOConfig,
                             rollout_budget: int = 1) -> GradEstimate:
    """Gradient of the expected return with respect to the dynamics parameters.

    Each perturbation evaluation runs ``rollout_budget`` fresh episodes
    under the perturbed dynamics with the (fixed) stochastic policy.
    """
    if rollout_budget < 1:
        raise ValueError(f"rollout_budget must be >= 1, got {rollout_budget}")
    return zo_gradient(make_return_fn(policy, env_factory, phi, rollout_budget), phi, cfg)


def zo_hessian(w: Callable[[np.ndarray, np.random.Generator], float],
               phi0: ParamVector, cfg: ZOConfig, regularize: bool = True,
               eig_floor_coeff: float = 1e-3) -> HessianEstimate:
    """Zero-order Hessian of a scalar function that is zero and flat at phi0.

    After averaging, the estimate is symmetrized; with ``regularize`` the
    eigenvalues are floored at ``eig_floor_coeff * max(1, lambda_max)`` so
    the result is usable as the metric of an ellipsoidal constraint.
    """
    d = len(phi0)
    base = _stream_base(cfg.seed)
    center = phi0.values
    xi = _draw_perturbations(base, phi0, cfg, cfg.n_samples, two_sided=False)
    values = np.empty(cfg.n_samples)
    for i in range(cfg.n_samples):
        values[i] = w(center + xi[i], _LazyStream(base, i))
    if not np.all(np.isfinite(values)):
        raise EstimationError("non-finite distance value during Hessian estimation")
    outer_mean = (xi * values[:, None]).T @ xi / cfg.n_samples
    est = (outer_mean / cfg.sigma ** 2 - values.mean() * np.eye(d)) / cfg.sigma ** 2
    est = 0.5 * (est + est.T)
    if not regularize:
        return HessianEstimate(matrix=est, n_used=cfg.n_samples,
                               regularized=False, min_eig_floor=0.0)
    vals, vecs = np.linalg.eigh(est)
    floor = eig_floor_coeff * max(1.0, float(vals.max()))
    changed = bool(vals.min() < floor)
    vals = np.maximum(vals, floor)
    matrix = (vecs * vals) @ vecs.T
    matrix = 0.5 * (matrix + matrix.T)
    return HessianEstimate(matrix=matrix, n_used=cfg.n_samples,
                           regularized=changed, min_eig_floor=floor)


def estimate_w2_hessian(bucket, phi0: ParamVector, cfg: ZOConfig,
                        n_next: int = 1, regularize: bool = True) -> HessianEstimate:
    """Hessian of the expected squared 2-Wasserstein distance at the reference.

    The distance uses common random numbers for the reference and candidate
    successor draws, so it is exactly zero (and flat) at ``phi0`` as the
    Taylor argument behind the ellipsoidal constraint requires.
    """
    from .wasserstein import BucketDistance

    dist = BucketDistance(bucket, n_next=n_next)
    at_ref = dist(phi0)
    if abs(at_ref) > 1e-9:
        raise EstimationError(
            f"expected distance at the reference parameters is {at_ref:g}, not 0"
        )
    return zo_hessian(lambda values, rng: dist(values), phi0, cfg, regularize=regularize)


def finite_diff_oracle(f: Callable[[np.ndarray], float], phi: ParamVector | np.ndarray,
                       h: float = 1e-4) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient and Hessian of a scalar function."""
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    x0 = phi.values if isinstance(phi, ParamVector) else np.asarray(phi, dtype=np.float64)
    d = x0.size
    eye = np.eye(d)
    grad = np.empty(d)
    for i in range(d):
        grad[i] = (f(x0 + h * eye[i]) - f(x0 - h * eye[i])) / (2.0 * h)
    hess = np.empty((d, d))
    f0 = f(x0)
    for i in range(d):
        hess[i, i] = (f(x0 + 2 * h * eye[i]) - 2.0 * f0 + f(x0 - 2 * h * eye[i])) / (4.0 * h * h)
        for j in range(i + 1, d):
            hij = (f(x0 + h * (eye[i] + eye[j])) - f(x0 + h * (eye[i] - eye[j]))
                   - f(x0 - h * (eye[i] - eye[j])) + f(x0 - h * (eye[i] + eye[j]))) / (4.0 * h * h)
            hess[i, j] = hij
            hess[j, i] = hij
    return grad, hess
