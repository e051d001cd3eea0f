"""Built-in oracle suite: independent checks of the numerical core.

Every check validates an implementation path against a slower but
transparent reference: exhaustive coupling enumeration for optimal
transport, central differences for derivative estimates, boundary
sampling and KKT residuals for the constrained update.  The CLI runs this
suite via ``wrrl selftest``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import closed_form_minimizer, constraint_value, kkt_residuals
from .envs import ParamVector
from .wasserstein import (w2_squared_1d, w2_squared_empirical, w2_squared_gaussian)
from .zo import ZOConfig, finite_diff_oracle, zo_gradient, zo_hessian


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def w2_bruteforce(x: np.ndarray, y: np.ndarray) -> float:
    """Exhaustive minimum over permutation couplings (equal-size supports)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    n = x.shape[0]
    cost = ((x[:, None, :] - y[None, :, :]) ** 2).sum(-1)
    best = np.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, cost[np.arange(n), perm].mean())
    return float(best)


def check_finite_differences(rng: np.random.Generator) -> CheckResult:
    d = 4
    m = rng.normal(size=(d, d))
    a = m @ m.T + np.eye(d)
    b = rng.normal(size=d)
    f = lambda v: 0.5 * v @ a @ v + b @ v
    x0 = rng.normal(size=d)
    grad, hess = finite_diff_oracle(f, x0, h=1e-4)
    g_err = np.abs(grad - (a @ x0 + b)).max()
    h_err = np.abs(hess - a).max()
    ok = g_err < 1e-6 and h_err < 1e-5
    return CheckResult("finite-difference oracle on a quadratic", ok,
                       f"grad err {g_err:.2e}, hess err {h_err:.2e}")


def check_ot_bruteforce(rng: np.random.Generator, n_cases: int) -> CheckResult:
    worst = 0.0
    for _ in range(n_cases):
        n = int(rng.integers(2, 6))
        d = int(rng.integers(1, 4))
        x = rng.normal(size=(n, d))
        y = rng.normal(size=(n, d)) + rng.normal(size=d)
        worst = max(worst, abs(w2_squared_empirical(x, y) - w2_bruteforce(x, y)))
    ok = worst < 1e-10
    return CheckResult("assignment solver vs coupling enumeration", ok,
                       f"max abs diff {worst:.2e} over {n_cases} cases")


def check_1d_fast_path(rng: np.random.Generator, n_cases: int) -> CheckResult:
    worst = 0.0
    for _ in range(n_cases):
        n = int(rng.integers(1, 30))
        x = rng.normal(size=n) * rng.uniform(0.5, 3)
        y = rng.normal(size=n) + rng.normal()
        worst = max(worst, abs(w2_squared_1d(x, y) - w2_squared_empirical(x, y)))
    ok = worst < 1e-10
    return CheckResult("1-d sorted pairing vs general solver", ok,
                       f"max abs diff {worst:.2e} over {n_cases} cases")


def check_gaussian_closed_form(rng: np.random.Generator, n_samples: int,
                               tol: float) -> CheckResult:
    mean1 = np.array([0.0, 0.0])
    mean2 = np.array([2.0, -1.0])
    a1 = rng.normal(size=(2, 2))
    a2 = rng.normal(size=(2, 2))
    cov1 = a1 @ a1.T + 0.3 * np.eye(2)
    cov2 = a2 @ a2.T + 0.3 * np.eye(2)
    exact = w2_squared_gaussian(mean1, cov1, mean2, cov2)
    x = rng.multivariate_normal(mean1, cov1, size=n_samples)
    y = rng.multivariate_normal(mean2, cov2, size=n_samples)
    emp = w2_squared_empirical(x, y)
    rel = abs(emp - exact) / exact
    return CheckResult("Gaussian closed form vs empirical distance", rel < tol,
                       f"closed {exact:.4f}, empirical {emp:.4f}, rel err {rel:.3f}")


def check_closed_form_kkt(rng: np.random.Generator, n_cases: int, n_boundary: int,
                          minimizer: Callable = closed_form_minimizer) -> CheckResult:
    """Boundary hit, KKT residuals, and optimality against sampled boundary points."""
    worst_primal = worst_stat = 0.0
    for _ in range(n_cases):
        d = int(rng.integers(1, 11))
        m = rng.normal(size=(d, d))
        h0 = m @ m.T + 0.1 * np.eye(d)
        g = rng.normal(size=d)
        while not np.any(g):
            g = rng.normal(size=d)
        phi0 = ParamVector(rng.normal(size=d), tuple(f"p{i}" for i in range(d)))
        eps = float(rng.uniform(0.05, 3.0))
        phi_star = minimizer(g, h0, phi0, eps)
        res = kkt_residuals(phi_star, g, h0, phi0, eps)
        worst_primal = max(worst_primal, res["primal"])
        worst_stat = max(worst_stat, res["stationarity"])
        # no sampled boundary point may beat the closed form on the linear objective
        u = rng.standard_normal((n_boundary, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        vals, vecs = np.linalg.eigh(h0)
        boundary = phi0.values + np.sqrt(2 * eps) * (u / np.sqrt(vals)) @ vecs.T
        objective = boundary @ g
        best_val = float(g @ phi_star.values)
        if best_val > objective.min() + 1e-8 * max(1.0, abs(best_val)):
            return CheckResult("closed-form update optimality and KKT", False,
                               f"a sampled boundary point beats the closed form "
                               f"({objective.min():.6g} < {best_val:.6g})")
        if res["primal"] > 1e-8 or res["stationarity"] > 1e-8:
            return CheckResult("closed-form update optimality and KKT", False,
                               f"KKT residuals too large: primal {res['primal']:.2e}, "
                               f"stationarity {res['stationarity']:.2e}")
    return CheckResult("closed-form update optimality and KKT", True,
                       f"{n_cases} cases; max primal {worst_primal:.2e}, "
                       f"max stationarity {worst_stat:.2e}")


def check_zo_gradient(rng: np.random.Generator, n_samples: int) -> CheckResult:
    d = 4
    m = rng.normal(size=(d, d))
    a = m @ m.T / d + np.eye(d)
    target = rng.normal(size=d)
    phi = ParamVector(rng.normal(size=d) * 0.5, tuple(f"p{i}" for i in range(d)))
    f = lambda v, _rng: 1.3 - 0.5 * (v - target) @ a @ (v - target)
    est = zo_gradient(f, phi, ZOConfig(sigma=0.05, n_samples=n_samples, seed=int(rng.integers(2**31))))
    truth = -a @ (phi.values - target)
    rel = np.linalg.norm(est.grad - truth) / np.linalg.norm(truth)
    return CheckResult("zero-order gradient vs analytic on a quadratic", rel < 0.1,
                       f"relative L2 error {rel:.4f} at {n_samples} evaluations")


def check_zo_hessian(rng: np.random.Generator, n_samples: int) -> CheckResult:
    phi0 = ParamVector(np.zeros(2), ("p0", "p1"))
    m = np.diag([1.0, 4.0])
    w = lambda v, _rng: 0.5 * v @ m @ v
    est = zo_hessian(w, phi0, ZOConfig(sigma=0.1, n_samples=n_samples, antithetic=False,
                                       seed=int(rng.integers(2**31))))
    diag_err = np.abs(np.diag(est.matrix) - np.array([1.0, 4.0]))
    off = abs(est.matrix[0, 1])
    ok = diag_err.max() < 0.5 and off < 0.3
    return CheckResult("zero-order Hessian recovers an anisotropic quadratic", ok,
                       f"diag {np.diag(est.matrix).round(3)}, off-diag {off:.3f}")


def check_constraint_form(rng: np.random.Generator) -> CheckResult:
    d = 3
    m = rng.normal(size=(d, d))
    h0 = m @ m.T + np.eye(d)
    x = rng.normal(size=d)
    x0 = rng.normal(size=d)
    direct = 0.5 * (x - x0) @ h0 @ (x - x0)
    ok = abs(constraint_value(x, x0, h0) - direct) < 1e-12
    return CheckResult("ellipsoid constraint quadratic form", ok,
                       f"abs diff {abs(constraint_value(x, x0, h0) - direct):.2e}")


def run_selftest(quick: bool = False, seed: int = 20240,
                 minimizer: Callable = closed_form_minimizer) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = [
        check_finite_differences(rng),
        check_ot_bruteforce(rng, n_cases=30 if not quick else 8),
        check_1d_fast_path(rng, n_cases=30 if not quick else 8),
        check_gaussian_closed_form(rng, n_samples=6000 if not quick else 2000,
                                   tol=0.05 if not quick else 0.10),
        check_closed_form_kkt(rng, n_cases=20 if not quick else 5,
                              n_boundary=2000 if not quick else 500,
                              minimizer=minimizer),
        check_zo_gradient(rng, n_samples=20000 if not quick else 4000),
        check_zo_hessian(rng, n_samples=50000 if not quick else 10000),
        check_constraint_form(rng),
    ]
    return results
