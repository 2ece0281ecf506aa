import itertools

import numpy as np
import pytest
from scipy import stats

from conftest import PI_2, random_instance, random_instances
from oracles import loglik_loop, sequence_probability
from mtdicl import core
from mtdicl.core import ModelConfig, make_rng
from mtdicl.errors import PreconditionError


class TestModelConfig:
    def test_valid(self):
        cfg = ModelConfig(5, 4, 64)
        assert cfg.n_obs == 60
        assert cfg.with_length(10).T == 10

    @pytest.mark.parametrize("q,m,T", [(1, 1, 5), (3, 0, 5), (3, 2, 2), (3, 4, 3)])
    def test_invalid(self, q, m, T):
        with pytest.raises(PreconditionError):
            ModelConfig(q, m, T)


class TestRng:
    def test_same_path_same_stream(self):
        assert np.array_equal(make_rng(3, 1, 2).random(5), make_rng(3, 1, 2).random(5))

    def test_distinct_paths_differ(self):
        a = make_rng(3, 1, 2).random(5)
        assert not np.array_equal(a, make_rng(3, 2, 1).random(5))
        assert not np.array_equal(a, make_rng(3).random(5))


class TestSampling:
    def test_degenerate_weights(self):
        assert np.array_equal(core.sample_mixture_weights(np.ones(1), make_rng(0)), [1.0])

    def test_dirichlet_mean(self):
        rng = make_rng(1)
        draws = np.array([core.sample_mixture_weights(np.ones(4), rng) for _ in range(100_000)])
        assert np.max(np.abs(draws.mean(axis=0) - 0.25)) < 0.01

    def test_two_component_simplex(self):
        rng = make_rng(2)
        for _ in range(200):
            lam = core.sample_mixture_weights(np.ones(2), rng)
            assert np.all((lam > 0) & (lam < 1))
            assert abs(lam.sum() - 1.0) < 1e-15

    def test_dirichlet_rejects_nonpositive(self):
        with pytest.raises(PreconditionError):
            core.dirichlet(np.array([1.0, 0.0]), make_rng(0))

    def test_transition_matrix_mean_and_floor(self):
        rng = make_rng(3)
        mats = np.array([core.sample_transition_matrix(5, rng) for _ in range(10_000)])
        assert np.max(np.abs(mats.mean(axis=0) - 0.2)) < 0.01
        assert mats.min() >= core.C_MIN - 1e-15
        assert np.max(np.abs(mats.sum(axis=2) - 1.0)) < 1e-12

    def test_q2_rows_uniform(self):
        rng = make_rng(4)
        p = np.array([core.sample_transition_matrix(2, rng)[0, 0] for _ in range(5000)])
        assert stats.kstest(p, "uniform").pvalue > 0.01

    def test_floor_rows_exact(self):
        pi = np.array([[1.0, 0.0, 0.0], [0.5, 0.5, 0.0]])
        out = core.floor_rows(pi, 1e-6)
        assert out.min() >= 1e-6
        assert np.max(np.abs(out.sum(axis=1) - 1.0)) < 1e-15

    def test_rejects_small_q(self):
        with pytest.raises(PreconditionError):
            core.sample_transition_matrix(1, make_rng(0))


class TestGenerateSequence:
    def test_determinism(self):
        a = random_instance(11, 4, 3, 50)[3]
        b = random_instance(11, 4, 3, 50)[3]
        assert np.array_equal(a, b)

    def test_identity_chain_is_constant(self):
        q = 4
        pi = core.floor_rows(np.eye(q))
        seq = core.generate_sequence(ModelConfig(q, 1, 2000), pi, np.ones(1), make_rng(5))
        assert np.count_nonzero(np.diff(seq)) <= 1

    def test_uniform_rows_give_uniform_tokens(self):
        q = 5
        pi = np.full((q, q), 1.0 / q)
        seq = core.generate_sequence(ModelConfig(q, 3, 100_000), pi, np.array([0.2, 0.3, 0.5]), make_rng(6))
        counts = np.bincount(seq, minlength=q)
        assert stats.chisquare(counts).pvalue > 0.01

    def test_first_lag_law_of_large_numbers(self):
        rng = make_rng(7)
        q, T = 3, 100_000
        pi = core.sample_transition_matrix(q, rng)
        seq = core.generate_sequence(ModelConfig(q, 3, T), pi, np.array([1.0, 0.0, 0.0]), rng)
        counts = np.zeros((q, q))
        np.add.at(counts, (seq[2:-1], seq[3:]), 1)
        emp = counts / counts.sum(axis=1, keepdims=True)
        assert np.max(np.abs(emp - pi)) < 0.02

    def _joint_check(self, seqs, lam):
        q, T = 2, 5
        keys = seqs @ (2 ** np.arange(T)[::-1])
        freq = np.bincount(keys, minlength=2**T) / seqs.shape[0]
        n = seqs.shape[0]
        for idx, outcome in enumerate(itertools.product(range(q), repeat=T)):
            p = sequence_probability(PI_2, lam, outcome, q)
            se = np.sqrt(p * (1 - p) / n)
            assert abs(freq[idx] - p) <= 3 * se + 1e-12, (outcome, freq[idx], p)

    def test_joint_law_batch(self):
        lam = np.array([0.3, 0.7])
        seqs = core.generate_batch(ModelConfig(2, 2, 5), PI_2, lam, 1_000_000, make_rng(8))
        self._joint_check(seqs, lam)

    def test_joint_law_single(self):
        lam = np.array([0.6, 0.4])
        cfg = ModelConfig(2, 2, 5)
        rng = make_rng(9)
        seqs = np.array([core.generate_sequence(cfg, PI_2, lam, rng) for _ in range(100_000)])
        self._joint_check(seqs, lam)

    def test_rejects_wrong_lengths(self):
        with pytest.raises(PreconditionError):
            core.generate_sequence(ModelConfig(2, 2, 5), PI_2, np.ones(3) / 3, make_rng(0))
        with pytest.raises(PreconditionError):
            core.generate_sequence(ModelConfig(3, 2, 5), PI_2, np.ones(2) / 2, make_rng(0))


class TestPredictive:
    def test_first_order(self):
        seq = np.array([0, 1, 1, 0])
        assert np.array_equal(core.predictive_distribution(PI_2, np.ones(1), seq), PI_2[0])

    def test_uniform_rows(self):
        pi = np.full((4, 4), 0.25)
        out = core.predictive_distribution(pi, np.array([0.1, 0.9]), np.array([0, 3, 2]))
        assert np.allclose(out, 0.25, rtol=0, atol=1e-15)

    def test_hand_example(self):
        # context ends (1, 2) in 1-based tokens
        out = core.predictive_distribution(PI_2, np.array([0.5, 0.5]), np.array([0, 1]))
        assert np.allclose(out, [0.55, 0.45], rtol=0, atol=1e-15)

    def test_short_context(self):
        with pytest.raises(PreconditionError):
            core.predictive_distribution(PI_2, np.array([0.5, 0.5]), np.array([1]))


class TestLikelihood:
    def test_uniform_rows(self):
        q, T, m = 3, 40, 2
        pi = np.full((q, q), 1.0 / q)
        seq = make_rng(0).integers(0, q, T)
        assert np.isclose(core.log_likelihood(pi, np.array([0.2, 0.8]), seq), (T - m) * np.log(1 / q), rtol=1e-13)

    def test_markov_chain(self):
        _, pi, _, seq = random_instance(1, 4, 1, 30)
        expected = np.sum(np.log(pi[seq[:-1], seq[1:]]))
        assert np.isclose(core.log_likelihood(pi, np.ones(1), seq), expected, rtol=1e-13)

    def test_matches_loop(self):
        for cfg, pi, lam, seq in random_instances(20, seed=1):
            assert np.isclose(core.log_likelihood(pi, lam, seq), loglik_loop(pi, lam, seq), rtol=1e-12)

    def test_gradient_uniform_rows(self):
        pi = np.full((3, 3), 1.0 / 3)
        seq = make_rng(1).integers(0, 3, 25)
        assert np.allclose(core.log_likelihood_gradient(pi, np.array([0.1, 0.3, 0.6]), seq), 22, rtol=0, atol=1e-12)

    def test_gradient_at_uniform_is_responsibility_sums(self):
        for cfg, pi, _, seq in random_instances(20, seed=2):
            u = np.full(cfg.m, 1.0 / cfg.m)
            g = core.log_likelihood_gradient(pi, u, seq)
            assert np.allclose(g, cfg.m * core.responsibilities(pi, u, seq).sum(axis=0), rtol=1e-12)

    def test_gradient_inner_product(self):
        for cfg, pi, lam, seq in random_instances(100, seed=3):
            lam = np.maximum(lam, 1e-3)
            lam /= lam.sum()
            assert abs(lam @ core.log_likelihood_gradient(pi, lam, seq) - cfg.n_obs) < 1e-9

    def test_gradient_finite_differences(self):
        h = 1e-5
        for cfg, pi, lam, seq in random_instances(30, seed=4):
            lam = 0.5 * lam + 0.5 / cfg.m
            g = core.log_likelihood_gradient(pi, lam, seq)
            for k in range(cfg.m):
                e = np.zeros(cfg.m)
                e[k] = h
                fd = (core.log_likelihood(pi, lam + e, seq) - core.log_likelihood(pi, lam - e, seq)) / (2 * h)
                assert abs(fd - g[k]) / abs(g[k]) < 1e-6


class TestResponsibilities:
    def test_uniform(self):
        pi = np.full((3, 3), 1.0 / 3)
        r = core.responsibilities(pi, np.full(4, 0.25), make_rng(0).integers(0, 3, 20))
        assert r.shape == (16, 4)
        assert np.allclose(r, 0.25, rtol=0, atol=1e-15)

    def test_single_lag(self):
        _, pi, _, seq = random_instance(0, 3, 1, 20)
        assert np.array_equal(core.responsibilities(pi, np.ones(1), seq), np.ones((19, 1)))

    def test_hand_example(self):
        # (y_{t-2}, y_{t-1}, y_t) = (1, 2, 2) in 1-based tokens
        r = core.responsibilities(PI_2, np.array([0.5, 0.5]), np.array([0, 1, 1]))
        assert np.allclose(r[0], [8 / 9, 1 / 9], rtol=0, atol=1e-15)

    def test_rows_stochastic(self):
        for cfg, pi, lam, seq in random_instances(50, seed=5):
            r = core.responsibilities(pi, lam, seq)
            assert np.max(np.abs(r.sum(axis=1) - 1.0)) < 1e-12
            assert r.min() >= 0 and r.max() <= 1

    def test_early_rows(self):
        _, pi, _, seq = random_instance(6, 4, 5, 30)
        rows = core.early_responsibilities(pi, seq, 5)
        assert [r.size for r in rows] == [1, 2, 3, 4]
        for r in rows:
            assert abs(r.sum() - 1.0) < 1e-12


class TestValidation:
    def test_transition_matrix(self):
        with pytest.raises(PreconditionError):
            core.check_transition_matrix(np.array([[0.5, 0.6], [0.5, 0.5]]))
        with pytest.raises(PreconditionError):
            core.check_transition_matrix(np.ones((2, 3)) / 3)
        with pytest.raises(PreconditionError):
            core.check_transition_matrix(np.array([[1.0, 0.0], [0.5, 0.5]]), floor=1e-6)

    def test_weights(self):
        with pytest.raises(PreconditionError):
            core.check_weights(np.array([0.5, 0.6]))
        with pytest.raises(PreconditionError):
            core.check_weights(np.array([1.0, 0.0]), interior=True)

    def test_sequence(self):
        with pytest.raises(PreconditionError):
            core.check_sequence(np.array([0, 3]), q=3)
        with pytest.raises(PreconditionError):
            core.check_sequence(np.array([0.5, 1.0]))


class TestSoftmax:
    def test_large_logits(self):
        out = core.softmax(np.array([1000.0, 999.0, -1000.0]))
        assert np.all(np.isfinite(out)) and abs(out.sum() - 1) < 1e-15

    def test_log_softmax_consistent(self):
        x = np.array([3.0, -2.0, 0.5])
        assert np.allclose(np.exp(core.log_softmax(x)), core.softmax(x), rtol=1e-14)
