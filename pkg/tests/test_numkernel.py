import numpy as np
import pytest
from scipy.integrate import quad

from switchclust import (
    DegenerateCovariance,
    RngStream,
    SpdMatrix,
    cholesky,
    mvn_logpdf,
    sample_beta,
    sample_chisq,
    sample_dirichlet,
    sample_inverse_wishart,
    sample_normal,
    sample_uniform_int,
)
from switchclust.numkernel import logsumexp, mvn_logpdf_rows


class TestCholesky:
    def test_identity(self):
        np.testing.assert_allclose(cholesky(np.eye(2)), np.eye(2))

    def test_two_by_two(self):
        L = cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
        np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, np.sqrt(2.0)]])
        np.testing.assert_allclose(L @ L.T, [[4.0, 2.0], [2.0, 3.0]],
                                   rtol=1e-10)

    def test_indefinite_raises(self):
        # eigenvalues 3 and -1
        with pytest.raises(DegenerateCovariance):
            cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_not_symmetric_raises(self):
        with pytest.raises(ValueError):
            cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_reconstruction_random(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = int(rng.integers(1, 7))
            a = rng.normal(size=(p, p))
            m = a @ a.T + 0.1 * np.eye(p)
            L = cholesky(m)
            err = np.max(np.abs(L @ L.T - m))
            assert err <= 1e-10 * np.max(np.abs(m))


class TestSpdMatrix:
    def test_jitter_recovers_singular_psd(self):
        s = SpdMatrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert s.jitter > 0.0
        assert np.all(np.diag(s.chol) > 0.0)
        np.testing.assert_allclose(s.chol @ s.chol.T, s.values, rtol=1e-10)

    def test_zero_matrix_fails_even_with_jitter(self):
        with pytest.raises(DegenerateCovariance):
            SpdMatrix(np.zeros((2, 2)))

    def test_solve_matches_inverse(self):
        m = np.array([[4.0, 2.0], [2.0, 3.0]])
        s = SpdMatrix(m)
        b = np.array([1.0, -1.0])
        np.testing.assert_allclose(s.solve(b), np.linalg.solve(m, b))


class TestMvnLogpdf:
    def test_standard_normal_at_mode(self):
        assert mvn_logpdf([0.0], [0.0], [[1.0]]) == pytest.approx(
            -0.9189385332046727, abs=1e-12)

    def test_identity_bivariate(self):
        assert mvn_logpdf([0.0, 0.0], [0.0, 0.0], np.eye(2)) == pytest.approx(
            -1.8378770664093453, abs=1e-12)

    def test_against_direct_formula(self):
        # independent evaluation with an explicit 2x2 inverse
        x = np.array([1.0, -1.0])
        cov = np.array([[4.0, 2.0], [2.0, 3.0]])
        det = 4.0 * 3.0 - 2.0 * 2.0
        inv = np.array([[3.0, -2.0], [-2.0, 4.0]]) / det
        expected = (-np.log(2.0 * np.pi) - 0.5 * np.log(det)
                    - 0.5 * x @ inv @ x)
        assert mvn_logpdf(x, np.zeros(2), cov) == pytest.approx(
            expected, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mvn_logpdf([0.0, 0.0], [0.0], [[1.0]])

    def test_integrates_to_one(self):
        mu, var = 0.7, 2.3
        sd = np.sqrt(var)
        total, _ = quad(
            lambda x: np.exp(mvn_logpdf([x], [mu], [[var]])),
            mu - 10 * sd, mu + 10 * sd)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_rows_match_scalar(self):
        rng = np.random.default_rng(3)
        cov = SpdMatrix(np.array([[2.0, 0.3], [0.3, 1.0]]))
        X = rng.normal(size=(6, 2))
        mean = np.array([0.5, -0.5])
        batch = mvn_logpdf_rows(X, mean, cov)
        for i in range(6):
            assert batch[i] == pytest.approx(mvn_logpdf(X[i], mean, cov),
                                             abs=1e-12)


class TestLogsumexp:
    def test_matches_scipy(self):
        from scipy.special import logsumexp as sp
        rng = np.random.default_rng(1)
        a = rng.normal(size=(4, 5)) * 100
        np.testing.assert_allclose(logsumexp(a, axis=1), sp(a, axis=1))

    def test_all_minus_inf(self):
        a = np.full((2, 3), -np.inf)
        out = logsumexp(a, axis=1)
        assert np.all(np.isneginf(out))


class TestSampling:
    def test_fixed_seed_bit_identical(self):
        a = RngStream(42)
        b = RngStream(42)
        draws_a = [a.gen.standard_normal(5) for _ in range(3)]
        draws_b = [b.gen.standard_normal(5) for _ in range(3)]
        for x, y in zip(draws_a, draws_b):
            assert np.array_equal(x, y)

    def test_split_deterministic_and_distinct(self):
        kids_a = RngStream(7).split(3)
        kids_b = RngStream(7).split(3)
        for x, y in zip(kids_a, kids_b):
            assert np.array_equal(x.gen.standard_normal(4),
                                  y.gen.standard_normal(4))
        assert not np.array_equal(kids_a[0].gen.standard_normal(4),
                                  kids_a[1].gen.standard_normal(4))

    def test_unknown_algorithm(self):
        with pytest.raises(ValueError):
            RngStream(0, algorithm="mt19937")

    def test_dirichlet_on_simplex(self):
        rng = RngStream(0)
        draw = sample_dirichlet(rng, np.full(5, 10.0))
        assert draw.shape == (5,)
        assert np.all(draw > 0)
        assert draw.sum() == pytest.approx(1.0, abs=1e-12)

    def test_beta_monte_carlo_mean(self):
        rng = RngStream(1)
        draws = np.array([sample_beta(rng, 10.0, 10.0)
                          for _ in range(100_000)])
        assert abs(draws.mean() - 0.5) < 0.01

    def test_chisq_mean(self):
        rng = RngStream(2)
        draws = np.array([sample_chisq(rng, 5.0) for _ in range(40_000)])
        assert abs(draws.mean() - 5.0) < 0.1

    def test_uniform_int_inclusive(self):
        rng = RngStream(3)
        draws = {sample_uniform_int(rng, 1, 4) for _ in range(2_000)}
        assert draws == {1, 2, 3, 4}

    def test_normal_mean_cov(self):
        rng = RngStream(4)
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        draws = np.vstack([sample_normal(rng, [1.0, -1.0], cov)
                           for _ in range(40_000)])
        np.testing.assert_allclose(draws.mean(axis=0), [1.0, -1.0], atol=0.05)
        np.testing.assert_allclose(np.cov(draws, rowvar=False), cov, atol=0.1)

    def test_inverse_wishart_monte_carlo_mean(self):
        # analytic mean is scale / (df - p - 1) = I_5 here
        rng = RngStream(5)
        p, df = 5, 9.0
        scale = 3.0 * np.eye(p)
        acc = np.zeros((p, p))
        ndraw = 10_000
        for _ in range(ndraw):
            acc += sample_inverse_wishart(rng, df, scale)
        mean = acc / ndraw
        assert np.max(np.abs(mean - np.eye(p))) < 0.05

    def test_inverse_wishart_df_validation(self):
        with pytest.raises(ValueError):
            sample_inverse_wishart(RngStream(0), 3.9, np.eye(5))

    def test_inverse_wishart_draw_is_spd(self):
        rng = RngStream(6)
        draw = sample_inverse_wishart(rng, 8.0, np.eye(3))
        assert np.all(np.linalg.eigvalsh(draw) > 0)
        np.testing.assert_allclose(draw, draw.T)
