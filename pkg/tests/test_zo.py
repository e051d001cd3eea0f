import numpy as np
import pytest

from wrrl.envs import ParamVector, make_env, param_vector
from wrrl.wasserstein import build_bucket
from wrrl.zo import (EstimationError, ZOConfig, estimate_return_gradient,
                     estimate_w2_hessian, finite_diff_oracle, zo_gradient, zo_hessian)


def unbounded(values):
    values = np.asarray(values, dtype=np.float64)
    return ParamVector(values, tuple(f"p{i}" for i in range(values.size)))


class TestZOConfig:
    def test_sigma_positive(self):
        with pytest.raises(ValueError):
            ZOConfig(sigma=0.0, n_samples=10)

    def test_antithetic_needs_two(self):
        with pytest.raises(ValueError):
            ZOConfig(sigma=0.1, n_samples=1, antithetic=True)
        ZOConfig(sigma=0.1, n_samples=1, antithetic=False)


class TestGradient:
    def test_linear_function_unbiased(self):
        # for linear J the single-sample terms have expectation exactly b
        b = np.array([1.5, -2.0, 0.7])
        f = lambda v, _rng: float(b @ v)
        est = zo_gradient(f, unbounded([0.2, 0.1, -0.4]),
                          ZOConfig(sigma=0.1, n_samples=20_000, antithetic=False, seed=0))
        np.testing.assert_array_less(np.abs(est.grad - b), 4 * est.stderr)

    def test_quadratic_accuracy(self):
        rng = np.random.default_rng(1)
        m = rng.normal(size=(4, 4))
        a = m @ m.T / 4 + np.eye(4)
        target = rng.normal(size=4)
        phi = unbounded(rng.normal(size=4) * 0.5)
        f = lambda v, _rng: 2.0 - 0.5 * (v - target) @ a @ (v - target)
        est = zo_gradient(f, phi, ZOConfig(sigma=0.05, n_samples=20_000, seed=2))
        truth = -a @ (phi.values - target)
        assert np.linalg.norm(est.grad - truth) / np.linalg.norm(truth) < 0.1

    def test_single_sample_finite_with_stderr(self):
        f = lambda v, _rng: float(np.sum(v ** 2))
        est = zo_gradient(f, unbounded([1.0, 2.0]),
                          ZOConfig(sigma=0.1, n_samples=1, antithetic=False, seed=3))
        assert np.all(np.isfinite(est.grad))
        assert est.n_used == 1
        assert np.all(np.isinf(est.stderr))

    def test_unbiased_over_repeated_runs(self):
        # mean over independent runs stays within 3 pooled standard errors
        b = np.array([0.8, -1.2])
        a = np.array([[1.0, 0.2], [0.2, 2.0]])
        phi = unbounded([0.3, -0.5])
        truth = -(a @ phi.values) + b
        f = lambda v, _rng: float(b @ v - 0.5 * v @ a @ v)
        runs = 50
        grads = np.empty((runs, 2))
        stderrs = np.empty((runs, 2))
        for r in range(runs):
            est = zo_gradient(f, phi, ZOConfig(sigma=0.1, n_samples=400, seed=100 + r))
            grads[r] = est.grad
            stderrs[r] = est.stderr
        pooled = np.sqrt(np.mean(stderrs ** 2, axis=0) / runs)
        np.testing.assert_array_less(np.abs(grads.mean(axis=0) - truth), 3 * pooled)

    def test_antithetic_reduces_variance(self):
        # equal evaluation budget; offset-heavy quadratic where pairing shines
        a = np.diag([1.0, 3.0])
        f = lambda v, _rng: 10.0 - 0.5 * v @ a @ v
        phi = unbounded([0.5, -0.2])
        wins = 0
        reps = 20
        for r in range(reps):
            anti = zo_gradient(f, phi, ZOConfig(sigma=0.1, n_samples=200, seed=r))
            plain = zo_gradient(f, phi, ZOConfig(sigma=0.1, n_samples=200,
                                                 antithetic=False, seed=r))
            if np.sum(anti.stderr ** 2) < np.sum(plain.stderr ** 2):
                wins += 1
        assert wins > reps / 2

    def test_deterministic_given_seed(self):
        f = lambda v, rng: float(np.sum(v ** 2)) + 0.01 * rng.standard_normal()
        cfg = ZOConfig(sigma=0.1, n_samples=64, seed=9)
        e1 = zo_gradient(f, unbounded([1.0, 1.0]), cfg)
        e2 = zo_gradient(f, unbounded([1.0, 1.0]), cfg)
        assert np.array_equal(e1.grad, e2.grad)

    def test_bounds_resampling(self):
        phi = ParamVector(np.array([0.5]), ("p0",), np.array([[0.0, 1.0]]))
        f = lambda v, _rng: float(v[0] ** 2)
        est = zo_gradient(f, phi, ZOConfig(sigma=0.3, n_samples=500, seed=4))
        assert np.all(np.isfinite(est.grad))

    def test_bounds_exhausted_raises(self):
        phi = ParamVector(np.array([0.5]), ("p0",), np.array([[0.0, 1.0]]))
        f = lambda v, _rng: float(v[0])
        with pytest.raises(EstimationError, match="perturbation"):
            zo_gradient(f, phi, ZOConfig(sigma=50.0, n_samples=10, seed=5, max_resample=8))

    def test_nan_function_raises(self):
        f = lambda v, _rng: float("nan")
        with pytest.raises(EstimationError):
            zo_gradient(f, unbounded([1.0]), ZOConfig(sigma=0.1, n_samples=4, seed=0))


class TestReturnGradientThroughEnv:
    def test_quad_testbed_rollout_gradient(self):
        rng = np.random.default_rng(7)
        d = 3
        a = np.diag([1.0, 2.0, 0.5])
        target = np.array([0.3, -0.2, 0.1])
        phi = param_vector("quad_testbed", rng.normal(size=d) * 0.3)

        def env_factory(params, seed):
            return make_env("quad_testbed", params, seed, curvature=a, target=target)

        from wrrl.policy import GaussianPolicy
        policy = GaussianPolicy(d, 1, hidden=(8,), rng=np.random.default_rng(0))
        est = estimate_return_gradient(policy, env_factory, phi,
                                       ZOConfig(sigma=0.05, n_samples=4000, seed=11),
                                       rollout_budget=1)
        truth = -a @ (phi.values - target)
        assert np.linalg.norm(est.grad - truth) / np.linalg.norm(truth) < 0.2

    def test_rollout_budget_validated(self):
        with pytest.raises(ValueError):
            estimate_return_gradient(None, None, unbounded([1.0]),
                                     ZOConfig(sigma=0.1, n_samples=2), rollout_budget=0)


class TestHessian:
    def test_zero_function_zero_matrix_before_flooring(self):
        est = zo_hessian(lambda v, _rng: 0.0, unbounded([0.0, 0.0]),
                         ZOConfig(sigma=0.1, n_samples=100, antithetic=False, seed=0),
                         regularize=False)
        assert np.array_equal(est.matrix, np.zeros((2, 2)))
        assert not est.regularized

    def test_isotropic_quadratic(self):
        # W(phi) = |phi|^2 has Hessian 2I
        phi0 = unbounded([0.0, 0.0, 0.0])
        w = lambda v, _rng: float(np.sum(v ** 2))
        est = zo_hessian(w, phi0, ZOConfig(sigma=0.1, n_samples=100_000,
                                           antithetic=False, seed=1))
        assert np.abs(est.matrix - 2 * np.eye(3)).max() < 0.2

    def test_anisotropic_ratio(self):
        phi0 = unbounded([0.0, 0.0])
        m = np.diag([1.0, 4.0])
        w = lambda v, _rng: 0.5 * float(v @ m @ v)
        est = zo_hessian(w, phi0, ZOConfig(sigma=0.1, n_samples=100_000,
                                           antithetic=False, seed=2))
        ratio = est.matrix[1, 1] / est.matrix[0, 0]
        assert ratio == pytest.approx(4.0, rel=0.1)

    def test_error_decreases_with_samples(self):
        # average error over 10 seeds shrinks monotonically across budgets
        phi0 = unbounded([0.0, 0.0])
        m = np.array([[2.0, 0.4], [0.4, 1.0]])
        w = lambda v, _rng: 0.5 * float(v @ m @ v)
        budgets = [1_000, 10_000, 100_000]
        mean_errors = []
        for n in budgets:
            errs = []
            for s in range(10):
                est = zo_hessian(w, phi0, ZOConfig(sigma=0.1, n_samples=n,
                                                   antithetic=False, seed=1000 + s),
                                 regularize=False)
                errs.append(np.abs(est.matrix - m).max())
            mean_errors.append(np.mean(errs))
        assert mean_errors[0] > mean_errors[1] > mean_errors[2]

    def test_regularization_postconditions(self):
        # tiny budget leaves sampling noise; flooring must still give SPD
        phi0 = unbounded([0.0, 0.0, 0.0])
        w = lambda v, _rng: 0.01 * float(np.sum(v ** 2))
        est = zo_hessian(w, phi0, ZOConfig(sigma=0.1, n_samples=10,
                                           antithetic=False, seed=3))
        eigs = np.linalg.eigvalsh(est.matrix)
        assert eigs.min() >= est.min_eig_floor - 1e-12
        assert est.min_eig_floor > 0
        raw = zo_hessian(w, phi0, ZOConfig(sigma=0.1, n_samples=10,
                                           antithetic=False, seed=3), regularize=False)
        raw_eigs = np.linalg.eigvalsh(0.5 * (raw.matrix + raw.matrix.T))
        assert est.regularized == bool(raw_eigs.min() < est.min_eig_floor)

    def test_flag_false_when_already_positive(self):
        phi0 = unbounded([0.0])
        w = lambda v, _rng: float(v[0] ** 2)
        est = zo_hessian(w, phi0, ZOConfig(sigma=0.1, n_samples=20_000,
                                           antithetic=False, seed=4))
        assert not est.regularized
        assert est.matrix[0, 0] == pytest.approx(2.0, rel=0.2)

    def test_symmetry(self):
        phi0 = unbounded([0.0, 0.0, 0.0])
        m = np.array([[2.0, 0.4, 0.1], [0.4, 1.0, -0.2], [0.1, -0.2, 1.5]])
        w = lambda v, _rng: 0.5 * float(v @ m @ v)
        est = zo_hessian(w, phi0, ZOConfig(sigma=0.1, n_samples=500,
                                           antithetic=False, seed=5))
        assert np.abs(est.matrix - est.matrix.T).max() < 1e-12


class TestW2HessianThroughEnv:
    def test_consistent_with_finite_differences(self):
        # noise-free testbed: the expected distance is an exact quadratic
        gain = np.array([0.8, 1.2])
        phi0 = param_vector("quad_testbed", [0.0, 0.0])
        bucket = build_bucket("quad_testbed", phi0, 16, seed=6,
                              env_options={"gain": gain})
        est = estimate_w2_hessian(bucket, phi0,
                                  ZOConfig(sigma=0.05, n_samples=50_000,
                                           antithetic=False, seed=7))
        from wrrl.wasserstein import BucketDistance
        dist = BucketDistance(bucket, n_next=1)
        _, fd_hess = finite_diff_oracle(lambda v: dist(v), phi0, h=1e-4)
        truth = 2.0 * np.diag(gain ** 2)
        np.testing.assert_allclose(fd_hess, truth, atol=1e-6)
        for i in range(2):
            assert est.matrix[i, i] == pytest.approx(fd_hess[i, i], rel=0.15)
        assert abs(est.matrix[0, 1]) < 0.15 * fd_hess.max()

    def test_reference_distance_must_vanish(self):
        # probing a point that is not the bucket's own reference must fail fast
        phi0 = param_vector("quad_testbed", [0.0, 0.0])
        bucket = build_bucket("quad_testbed", phi0, 8, seed=8)
        with pytest.raises(EstimationError, match="not 0"):
            estimate_w2_hessian(bucket, phi0.with_values([0.5, 0.5]),
                                ZOConfig(sigma=0.05, n_samples=10, antithetic=False))


class TestFiniteDifferenceOracle:
    def test_quadratic_exact(self):
        rng = np.random.default_rng(10)
        m = rng.normal(size=(3, 3))
        a = m @ m.T + np.eye(3)
        b = rng.normal(size=3)
        f = lambda v: 0.5 * v @ a @ v + b @ v
        x0 = rng.normal(size=3)
        grad, hess = finite_diff_oracle(f, x0, h=1e-4)
        np.testing.assert_allclose(grad, a @ x0 + b, atol=1e-6)
        np.testing.assert_allclose(hess, a, atol=1e-5)

    def test_constant(self):
        grad, hess = finite_diff_oracle(lambda v: 3.0, np.zeros(2), h=1e-3)
        assert np.array_equal(grad, np.zeros(2))
        assert np.array_equal(hess, np.zeros((2, 2)))

    def test_norm_squared_at_origin(self):
        grad, hess = finite_diff_oracle(lambda v: float(np.sum(v ** 2)), np.zeros(3), h=1e-4)
        np.testing.assert_allclose(grad, np.zeros(3), atol=1e-9)
        np.testing.assert_allclose(hess, 2 * np.eye(3), atol=1e-7)

    def test_h_positive(self):
        with pytest.raises(ValueError):
            finite_diff_oracle(lambda v: 0.0, np.zeros(1), h=0.0)
