import numpy as np
import pytest

from conftest import random_instance, random_instances
from mtdicl import theory as th
from mtdicl.core import ModelConfig, log_likelihood_gradient, make_rng, softmax
from mtdicl.errors import PreconditionError


class TestJacobians:
    def test_m2_entries(self):
        J = th.bayes_linearized_jacobian(2)
        assert np.allclose(J, [[1 / 12, -1 / 12], [-1 / 12, 1 / 12]], rtol=0, atol=1e-15)

    @pytest.mark.parametrize("m", range(1, 7))
    def test_md_equals_bayes(self, m):
        rep = th.jacobian_report(m)
        assert rep.max_abs_diff < 1e-12

    def test_other_eta_differs(self):
        assert th.jacobian_report(3, eta=0.5).max_abs_diff > 1e-3

    def test_row_sums_zero(self):
        for m in range(1, 7):
            assert np.allclose(th.bayes_linearized_jacobian(m).sum(axis=1), 0, atol=1e-15)

    def test_matches_dirichlet_covariance(self):
        m = 4
        lam = th.uniform_simplex(400000, m, make_rng(0))
        assert np.allclose(np.cov(lam.T), th.bayes_linearized_jacobian(m), atol=5e-4)

    def test_md_jacobian_is_softmax_derivative(self):
        for m in (2, 3, 5):
            J = th.finite_difference_jacobian(lambda g: softmax(g / (m + 1)), np.zeros(m), 1e-5)
            assert np.allclose(J, th.md_jacobian_at_zero(m, 1 / (m + 1)), atol=1e-10)

    def test_bad_order(self):
        with pytest.raises(PreconditionError):
            th.md_jacobian_at_zero(0, 0.5)
        with pytest.raises(PreconditionError):
            th.bayes_linearized_jacobian(0)

    def test_monte_carlo_small(self):
        J, se = th.monte_carlo_bayes_jacobian(3, 200000, make_rng(1))
        z = np.abs(J - th.bayes_linearized_jacobian(3)) / se
        assert z.max() < 4.5


class TestFiniteDifference:
    def test_linear_map_exact(self):
        A = make_rng(2).standard_normal((3, 4))
        J = th.finite_difference_jacobian(lambda x: A @ x, np.ones(4))
        assert np.allclose(J, A, atol=1e-9)

    def test_uniform_simplex_rows(self):
        lam = th.uniform_simplex(1000, 5, make_rng(3))
        assert np.allclose(lam.sum(axis=1), 1) and lam.min() > 0
        assert np.allclose(lam.mean(axis=0), 0.2, atol=0.02)


class TestRemainder:
    @pytest.mark.parametrize("m", [3, 4])
    def test_quadratic_ratio(self, m):
        dirs = th.random_directions(20, m, make_rng(4, m))
        ratios = np.concatenate([th.remainder_ratios(m, u) for u in dirs])
        assert np.all((ratios > 3.0) & (ratios < 5.3))

    def test_two_lags_is_cubic(self):
        # with two lags the remainder has no quadratic term
        dirs = th.random_directions(5, 2, make_rng(5))
        ratios = np.concatenate([th.remainder_ratios(2, u) for u in dirs])
        assert np.all(np.abs(ratios - 8) < 0.1)

    def test_remainder_shrinks(self):
        u = th.random_directions(1, 4, make_rng(6))[0]
        assert th.first_order_remainder(4, u, 1e-3) < th.first_order_remainder(4, u, 1e-2)


class TestHessian:
    def test_uniform_pi(self):
        q, m, T = 3, 4, 20
        pi = np.full((q, q), 1 / q)
        seq = make_rng(7).integers(0, q, T)
        H = th.hessian_loss(pi, np.full(m, 1 / m), seq)
        assert np.allclose(H, (T - m) * np.ones((m, m)), rtol=1e-12)
        assert th.power_iteration(H) == pytest.approx((T - m) * m, rel=1e-9)

    def test_psd_and_finite_difference(self):
        for s in range(20):
            cfg, pi, lam, seq = random_instance(s, 4, 3, 25)
            lam = 0.8 * lam + 0.2 / cfg.m
            H = th.hessian_loss(pi, lam, seq)
            assert np.linalg.eigvalsh(H).min() > -1e-9
            fd = -th.finite_difference_jacobian(lambda x: log_likelihood_gradient(pi, x, seq), lam, 1e-5)
            rel = np.max(np.abs(fd - H)) / np.max(np.abs(H))
            assert rel < 1e-5

    def test_power_iteration(self):
        rng = make_rng(8)
        for _ in range(20):
            A = rng.standard_normal((5, 5))
            M = A @ A.T
            assert th.power_iteration(M, iters=2000, tol=1e-14) == pytest.approx(np.linalg.eigvalsh(M)[-1], rel=1e-6)
        assert th.power_iteration(np.zeros((3, 3))) == 0.0


class TestSmoothness:
    def test_random_instances(self):
        for cfg, pi, _, seq in random_instances(100, 9, (2, 6), (1, 5), (6, 40)):
            rep = th.check_smoothness_bound(pi, seq, cfg.m)
            assert rep.holds and rep.global_holds

    def test_single_lag_equality(self):
        cfg, pi, _, seq = random_instance(10, 4, 1, 30)
        rep = th.check_smoothness_bound(pi, seq, 1)
        assert rep.opnorm_at_uniform == pytest.approx(rep.bound, rel=1e-12)

    def test_uniform_pi_attains_bound(self):
        m, T = 3, 15
        rep = th.check_smoothness_bound(np.full((2, 2), 0.5), make_rng(11).integers(0, 2, T), m)
        assert rep.opnorm_at_uniform == pytest.approx((T - m) * m, rel=1e-9)

    def test_too_short(self):
        with pytest.raises(PreconditionError):
            th.check_smoothness_bound(np.full((2, 2), 0.5), [0, 1], 2)


class TestScoreScaling:
    def test_uniform_pi_exact(self):
        q, m = 3, 2
        rep = th.check_score_scaling(np.full((q, q), 1 / q), [0.5, 0.5], [10, 20, 40], 5, make_rng(12))
        assert np.allclose(rep.mean_score, rep.n_obs[:, None] * np.ones(m), rtol=1e-12)
        assert np.allclose(rep.slope, 1) and np.allclose(rep.intercept, 0, atol=1e-9)

    def test_linear_growth(self):
        _, pi, lam, _ = random_instance(13, 5, 3, 10)
        rep = th.check_score_scaling(pi, lam, [64, 128, 256, 512, 1024], 200, make_rng(13))
        assert np.all(rep.r_squared > 0.999)
        assert rep.intercept_bounded
        assert np.all(rep.slope > 0)

    def test_rejects_short(self):
        with pytest.raises(PreconditionError):
            th.check_score_scaling(np.full((2, 2), 0.5), [0.5, 0.5], [2, 10], 3, make_rng(0))
