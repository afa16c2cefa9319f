import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.linear_model import Lasso

from deltafwer.lasso import (
    NoiseEstimationError,
    gram_stats,
    kkt_violation,
    lambda_max,
    lambda_universal,
    lasso_cd,
    lasso_gram,
    lasso_objective,
    noise_std_reid,
    nodewise_gram,
)


def instance(seed, n=40, C=15, s=3, noise=0.5):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, C))
    b = np.zeros(C)
    b[rng.choice(C, s, replace=False)] = rng.normal(scale=2, size=s)
    return Z, Z @ b + noise * rng.normal(size=n)


class TestSolver:
    def test_above_lambda_max_is_zero(self):
        Z, y = instance(0)
        sol = lasso_cd(Z, y, lambda_max(Z, y) * 1.0001)
        assert not sol.coef.any() and sol.n_iter == 0

    def test_orthonormal_soft_threshold(self):
        n, C = 64, 8
        Q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(n, C)))
        Z = Q * math.sqrt(n)  # Z'Z/n = I
        y = np.random.default_rng(2).normal(size=n) * 3
        lam = 0.4
        u = Z.T @ y / n
        expect = np.sign(u) * np.maximum(np.abs(u) - lam, 0)
        np.testing.assert_allclose(lasso_cd(Z, y, lam, tol=1e-12).coef, expect, atol=1e-10)

    def test_matches_reference_solver(self):
        Z, y = instance(3, n=60, C=30)
        lam = 0.1
        ours = lasso_cd(Z, y, lam, tol=1e-12)
        ref = Lasso(alpha=lam, fit_intercept=False, tol=1e-14, max_iter=100000).fit(Z, y)
        np.testing.assert_allclose(ours.coef, ref.coef_, atol=1e-7)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_proximal_gradient(self, seed):
        # independent slow oracle: proximal gradient with step 1/L for many iterations
        Z, y = instance(seed, n=10, C=5, s=2)
        lam = 0.3 * lambda_max(Z, y)
        n = Z.shape[0]
        L = np.linalg.eigvalsh(Z.T @ Z / n)[-1]
        b = np.zeros(5)
        for _ in range(20_000):
            u = b - Z.T @ (Z @ b - y) / (n * L)
            b = np.sign(u) * np.maximum(np.abs(u) - lam / L, 0)
        ours = lasso_cd(Z, y, lam, tol=1e-14)
        assert abs(lasso_objective(Z, y, ours.coef, lam) - lasso_objective(Z, y, b, lam)) <= 1e-8

    @given(st.integers(0, 10_000), st.integers(5, 40), st.integers(2, 60),
           st.floats(0.01, 0.9))
    def test_kkt(self, seed, n, C, frac):
        Z, y = instance(seed, n=n, C=C, s=min(3, C))
        lam = frac * lambda_max(Z, y)
        sol = lasso_cd(Z, y, lam, tol=1e-8)
        assert sol.converged
        assert kkt_violation(Z, y, sol) <= 1e-6 * max(1.0, float(y @ y / n))

    @given(st.integers(0, 10_000), st.floats(0.02, 0.8))
    def test_duality_gap_certifies_suboptimality(self, seed, frac):
        Z, y = instance(seed, n=30, C=50)
        lam = frac * lambda_max(Z, y)
        loose = lasso_cd(Z, y, lam, tol=1e-3)
        tight = lasso_cd(Z, y, lam, tol=1e-13)
        gap = lasso_objective(Z, y, loose.coef, lam) - lasso_objective(Z, y, tight.coef, lam)
        assert -1e-12 <= gap <= loose.dual_gap + 1e-12

    @given(st.integers(0, 10_000))
    def test_objective_monotone(self, seed):
        Z, y = instance(seed, n=25, C=40)
        trace = []
        lasso_cd(Z, y, 0.05 * lambda_max(Z, y), tol=1e-12, trace=trace)
        assert len(trace) >= 1
        assert np.all(np.diff(trace) <= 1e-12 * max(1.0, abs(trace[0])))

    def test_path_continuity(self):
        for seed in range(5):
            Z, y = instance(seed, n=50, C=80)
            lam = 0.2 * lambda_max(Z, y)
            f = [lasso_objective(Z, y, lasso_cd(Z, y, l, tol=1e-12).coef, l)
                 for l in (0.99 * lam, lam, 1.01 * lam)]
            assert abs(f[0] - f[1]) <= 0.011 * f[1]
            assert abs(f[2] - f[1]) <= 0.011 * f[1]

    def test_warm_start_and_skip(self):
        Z, y = instance(5)
        G, c, yy = gram_stats(Z, y)
        cold = lasso_gram(G, c, yy, 0.1, tol=1e-12)
        warm = lasso_gram(G, c, yy, 0.1, tol=1e-12, coef0=cold.coef)
        np.testing.assert_allclose(warm.coef, cold.coef, atol=1e-10)
        frozen = lasso_gram(G, c, yy, 0.05, tol=1e-12, skip=2)
        assert frozen.coef[2] == 0

    def test_rejects_bad_input(self):
        Z, y = instance(0)
        with pytest.raises(ValueError):
            lasso_cd(Z, y, 0.0)
        with pytest.raises(ValueError):
            lasso_cd(Z, y[:-1], 0.1)
        Z[0, 0] = np.nan
        with pytest.raises(ValueError):
            lasso_cd(Z, y, 0.1)

    def test_nonconvergence_warns(self):
        from deltafwer.lasso import ConvergenceWarning
        Z, y = instance(7, n=30, C=60)
        with pytest.warns(ConvergenceWarning):
            sol = lasso_cd(Z, y, 1e-4, tol=1e-14, max_iter=2)
        assert not sol.converged


class TestNodewiseKernel:
    @given(st.integers(0, 10_000), st.integers(3, 30))
    def test_matches_individual_solves(self, seed, C):
        rng = np.random.default_rng(seed)
        Z = rng.normal(size=(40, C)) + rng.normal(size=(40, 1))
        Z = (Z - Z.mean(0)) / Z.std(0)
        G = np.ascontiguousarray(Z.T @ Z / 40)
        lam = 0.2
        Gamma, tau_sq, resid_sq, gaps = nodewise_gram(G, lam, 1e-10, 10_000)
        for j in range(C):
            sol = lasso_gram(G, G[:, j], G[j, j], lam, tol=1e-10, skip=j)
            np.testing.assert_allclose(Gamma[j], sol.coef, atol=1e-6)
            r = Z[:, j] - Z @ Gamma[j]
            assert tau_sq[j] == pytest.approx(Z[:, j] @ r / 40, abs=1e-10)
            assert resid_sq[j] == pytest.approx(r @ r / 40, abs=1e-10)
            # KKT of the nodewise problem
            corr = Z.T @ r / 40
            corr[j] = 0
            act = Gamma[j] != 0
            assert np.all(np.abs(corr[~act]) <= lam + 1e-6)
            np.testing.assert_allclose(corr[act], lam * np.sign(Gamma[j][act]), atol=1e-6)


class TestLambdaAndNoise:
    def test_universal(self):
        Z1 = np.zeros((7, 1))
        assert lambda_universal(Z1) == 0.0
        Z = np.zeros((50, 20))
        assert lambda_universal(Z, 1.0, 2.0) == pytest.approx(2 * lambda_universal(Z))
        assert lambda_universal(Z, 3.0) == pytest.approx(3 * math.sqrt(2 * math.log(20) / 50))

    def test_reid_pure_noise(self):
        rng = np.random.default_rng(9)
        n, sigma = 1000, 1.7
        Z = rng.normal(size=(n, 5))
        est = []
        for _ in range(100):
            y = sigma * rng.normal(size=n)
            sol = lasso_cd(Z, y, 1e3)  # above lambda_max: coef = 0
            est.append(noise_std_reid(Z, y, sol))
        assert abs(np.mean(est) - sigma) <= 0.1 * sigma

    def test_reid_exact_fit(self):
        rng = np.random.default_rng(1)
        Z = rng.normal(size=(20, 3))
        b = np.array([1.0, -2.0, 0.5])
        from deltafwer.lasso import LassoSolution
        assert noise_std_reid(Z, Z @ b, LassoSolution(b, 1e-3, 1, 0.0)) == 0.0

    def test_reid_saturated(self):
        from deltafwer.lasso import LassoSolution
        Z = np.random.default_rng(0).normal(size=(4, 6))
        with pytest.raises(NoiseEstimationError):
            noise_std_reid(Z, np.ones(4), LassoSolution(np.ones(6), 0.1, 1, 0.0))
