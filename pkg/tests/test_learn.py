import logging

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from switchclust import (
    ClusterParams,
    DegenerateCluster,
    FitConfig,
    ModelParams,
    ObjectSeries,
    PanelDataset,
    Posterior,
    RegressedTransition,
    SeparationWarning,
    SpdMatrix,
    bfgs_maximize,
    fit,
    kmeans_init,
    logistic_objective_initial,
    logistic_objective_transition,
    posterior,
    q_function,
    simulate,
    SimConfig,
    update_alpha,
    update_beta,
    update_lambda,
    update_mu,
    update_sigma,
)
from switchclust.learn import _rebirth, q_function_from_posteriors
from switchclust.model import _path_log_weights
from switchclust.numkernel import RngStream, logsumexp

from helpers import central_diff_grad, random_params, random_series


def posteriors_for(ds, params):
    return [posterior(obj, params) for obj in ds.objects]


def small_dataset(rng, n=4, T_max=4, p=1, d=0):
    objects = [
        ObjectSeries(id=f"o{i}",
                     x=rng.normal(size=(int(rng.integers(1, T_max + 1)), p)))
        for i in range(n)
    ]
    if d > 0:
        objects = [ObjectSeries(id=o.id, x=o.x,
                                w=rng.normal(size=(o.T, d)))
                   for o in objects]
    return PanelDataset(objects)


def brute_force_q(theta, theta_hat, ds):
    """Path-enumeration oracle for the expected complete-data
    log-likelihood."""
    total = 0.0
    for obj in ds.objects:
        paths, log_w_hat = _path_log_weights(obj, theta_hat)
        probs = np.exp(log_w_hat - logsumexp(log_w_hat))
        _, log_w = _path_log_weights(obj, theta)
        total += float(probs @ log_w)
    return total


class TestQFunction:
    def test_single_cluster_equals_complete_loglik(self):
        rng = np.random.default_rng(0)
        params = random_params(rng, 1, 1)
        ds = small_dataset(rng, n=3)
        expected = sum(_path_log_weights(o, params)[1][0]
                       for o in ds.objects)
        assert q_function(params, params, ds) == pytest.approx(expected,
                                                               rel=1e-12)

    def test_matches_path_expectation(self):
        rng = np.random.default_rng(1)
        theta_hat = random_params(rng, 2, 1)
        theta = random_params(rng, 2, 1)
        objects = [random_series(rng, 3, 1, ident=f"o{i}") for i in range(2)]
        ds = PanelDataset(objects)
        q = q_function(theta, theta_hat, ds)
        oracle = brute_force_q(theta, theta_hat, ds)
        assert abs(q - oracle) <= 1e-10 * max(1.0, abs(oracle))

    def test_mstep_does_not_decrease_q(self):
        rng = np.random.default_rng(2)
        for regressed in (False, True):
            cfg = SimConfig(n=20, T_max=5, K=2, p=2, seed=9,
                            regressed=regressed)
            ds, truth = simulate(cfg)
            params = random_params(rng, 2, 2, d=ds.d, regressed=regressed)
            posts = posteriors_for(ds, params)
            from switchclust.learn import _mstep
            new_params = _mstep(ds, params, posts,
                                FitConfig(K=2, regressed=regressed))
            q_old = q_function_from_posteriors(params, posts, ds)
            q_new = q_function_from_posteriors(new_params, posts, ds)
            assert q_new >= q_old - 1e-8 * abs(q_old)


class TestUpdateAlpha:
    def test_all_mass_on_first_cluster(self):
        rng = np.random.default_rng(3)
        params = random_params(rng, 2, 1)
        objects = [ObjectSeries(id=f"o{i}", x=rng.normal(size=(2, 1)))
                   for i in range(3)]
        ds = PanelDataset(objects)
        posts = [
            Posterior(marginals=np.array([[1.0, 0.0], [0.5, 0.5]]),
                      conditionals=np.full((1, 2, 2), 0.5))
            for _ in range(3)
        ]
        np.testing.assert_allclose(update_alpha(posts, ds), [1.0, 0.0])

    def test_uniform_marginals(self):
        rng = np.random.default_rng(4)
        ds = small_dataset(rng, n=3, T_max=1)
        posts = [Posterior(marginals=np.full((1, 4), 0.25),
                           conditionals=np.zeros((0, 4, 4)))
                 for _ in range(3)]
        np.testing.assert_allclose(update_alpha(posts, ds), np.full(4, 0.25))

    def test_hand_sum(self):
        rng = np.random.default_rng(5)
        ds = small_dataset(rng, n=3, T_max=1)
        rows = [np.array([0.2, 0.8]), np.array([0.5, 0.5]),
                np.array([0.9, 0.1])]
        posts = [Posterior(marginals=r[None, :],
                           conditionals=np.zeros((0, 2, 2))) for r in rows]
        np.testing.assert_allclose(update_alpha(posts, ds),
                                   [(0.2 + 0.5 + 0.9) / 3,
                                    (0.8 + 0.5 + 0.1) / 3])


class TestUpdateBeta:
    def test_deterministic_path(self):
        # single object tracing 1 -> 2 -> 2
        rng = np.random.default_rng(6)
        ds = PanelDataset([ObjectSeries(id="o", x=rng.normal(size=(3, 1)))])
        marginals = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        cond = np.zeros((2, 2, 2))
        cond[0, 0] = [0.0, 1.0]
        cond[0, 1] = [0.5, 0.5]
        cond[1, 1] = [0.0, 1.0]
        cond[1, 0] = [0.5, 0.5]
        posts = [Posterior(marginals=marginals, conditionals=cond)]
        beta = update_beta(posts, ds)
        np.testing.assert_allclose(beta[0], [0.0, 1.0])
        np.testing.assert_allclose(beta[1], [0.0, 1.0])

    def test_uniform(self):
        rng = np.random.default_rng(7)
        ds = PanelDataset([ObjectSeries(id="o", x=rng.normal(size=(4, 1)))])
        posts = [Posterior(marginals=np.full((4, 2), 0.5),
                           conditionals=np.full((3, 2, 2), 0.5))]
        np.testing.assert_allclose(update_beta(posts, ds),
                                   np.full((2, 2), 0.5))

    def test_hand_arithmetic(self):
        rng = np.random.default_rng(8)
        ds = PanelDataset([ObjectSeries(id="o", x=rng.normal(size=(3, 1)))])
        m = np.array([[0.3, 0.7], [0.6, 0.4], [0.2, 0.8]])
        c = rng.dirichlet(np.ones(2), size=(2, 2))
        posts = [Posterior(marginals=m, conditionals=c)]
        num = np.zeros((2, 2))
        den = np.zeros(2)
        for t in range(2):
            for h in range(2):
                num[h] += m[t, h] * c[t, h]
                den[h] += m[t, h]
        expected = num / den[:, None]
        np.testing.assert_allclose(update_beta(posts, ds), expected,
                                   rtol=1e-12)

    def test_starved_row_keeps_previous(self):
        rng = np.random.default_rng(9)
        ds = PanelDataset([ObjectSeries(id="o", x=rng.normal(size=(2, 1)))])
        m = np.array([[1.0, 0.0], [1.0, 0.0]])
        c = np.full((1, 2, 2), 0.5)
        posts = [Posterior(marginals=m, conditionals=c)]
        prev = np.array([[0.4, 0.6], [0.9, 0.1]])
        beta = update_beta(posts, ds, prev=prev)
        np.testing.assert_allclose(beta[1], prev[1])


def dataset_and_posts(rng, K=2, p=1, n=6, T_max=4, lam=None):
    params = random_params(rng, K, p)
    if lam is not None:
        params = ModelParams(
            clusters=ClusterParams(params.clusters.mu,
                                   params.clusters.sigma, lam),
            transitions=params.transitions)
    objects = [random_series(rng, int(rng.integers(2, T_max + 1)), p,
                             ident=f"o{i}") for i in range(n)]
    ds = PanelDataset(objects)
    return ds, params, posteriors_for(ds, params)


class TestUpdateLambda:
    def test_scalar_hand_example(self):
        # p=1, T=2, K=1, mu=1, var=1, x=(0, 0.5):
        # ratio = (0.5-0)(1-0) / (1-0)^2 = 0.5
        ds = PanelDataset([ObjectSeries(id="o", x=[[0.0], [0.5]])])
        cp = ClusterParams(mu=[[1.0]], sigma=[SpdMatrix([[1.0]])], lam=0.3)
        posts = [Posterior(marginals=np.ones((2, 1)),
                           conditionals=np.ones((1, 1, 1)))]
        assert update_lambda(posts, ds, cp) == pytest.approx(0.5, abs=1e-12)

    def test_data_at_cluster_means_pushes_to_one(self):
        # x_t equal to mu at every step: ratio hits 1, clamp applies
        mu = np.array([2.0])
        x = np.array([[0.0], [2.0], [2.0]])
        ds = PanelDataset([ObjectSeries(id="o", x=x)])
        cp = ClusterParams(mu=[mu], sigma=[SpdMatrix([[1.0]])], lam=0.5)
        posts = [Posterior(marginals=np.ones((3, 1)),
                           conditionals=np.ones((2, 1, 1)))]
        assert update_lambda(posts, ds, cp) >= 0.999

    def test_matches_numeric_argmax(self):
        rng = np.random.default_rng(10)
        ds, params, posts = dataset_and_posts(rng)
        cp = params.clusters
        lam_star = update_lambda(posts, ds, cp)

        def neg_q(lam):
            trial = ModelParams(
                clusters=ClusterParams(cp.mu, cp.sigma, lam),
                transitions=params.transitions)
            return -q_function_from_posteriors(trial, posts, ds)

        res = minimize_scalar(neg_q, bounds=(1e-6, 1 - 1e-6),
                              method="bounded",
                              options={"xatol": 1e-10})
        assert lam_star == pytest.approx(res.x, abs=1e-6)

    def test_no_transitions_returns_current(self):
        rng = np.random.default_rng(11)
        ds = PanelDataset([ObjectSeries(id="o", x=rng.normal(size=(1, 1)))])
        cp = ClusterParams(mu=[[0.0]], sigma=[SpdMatrix([[1.0]])], lam=0.37)
        posts = [Posterior(marginals=np.ones((1, 1)),
                           conditionals=np.zeros((0, 1, 1)))]
        assert update_lambda(posts, ds, cp) == 0.37


class TestUpdateMu:
    def test_lambda_one_weighted_mean(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(4, 1))
        ds = PanelDataset([ObjectSeries(id="o", x=x)])
        posts = [Posterior(marginals=np.ones((4, 1)),
                           conditionals=np.ones((3, 1, 1)))]
        lam = 1.0 - 1e-12
        out = update_mu(posts, ds, 0, lam)
        assert out[0] == pytest.approx(x.mean(), rel=1e-9)

    def test_single_observation(self):
        ds = PanelDataset([ObjectSeries(id="o", x=[[3.25]])])
        posts = [Posterior(marginals=np.ones((1, 1)),
                           conditionals=np.zeros((0, 1, 1)))]
        assert update_mu(posts, ds, 0, 0.5)[0] == pytest.approx(3.25)

    def test_matches_numeric_argmax(self):
        rng = np.random.default_rng(13)
        ds, params, posts = dataset_and_posts(rng)
        cp = params.clusters
        lam = cp.lam
        for k in range(2):
            mu_star = update_mu(posts, ds, k, lam)

            def neg_q(val):
                mu = cp.mu.copy()
                mu[k] = val
                trial = ModelParams(
                    clusters=ClusterParams(mu, cp.sigma, lam),
                    transitions=params.transitions)
                return -q_function_from_posteriors(trial, posts, ds)

            res = minimize_scalar(neg_q, bounds=(mu_star[0] - 5,
                                                 mu_star[0] + 5),
                                  method="bounded",
                                  options={"xatol": 1e-10})
            assert mu_star[0] == pytest.approx(res.x, abs=1e-6)

    def test_starved_cluster_raises(self):
        rng = np.random.default_rng(14)
        ds = PanelDataset([ObjectSeries(id="o", x=rng.normal(size=(2, 1)))])
        m = np.array([[1.0, 0.0], [1.0, 0.0]])
        posts = [Posterior(marginals=m, conditionals=np.full((1, 2, 2), 0.5))]
        with pytest.raises(DegenerateCluster):
            update_mu(posts, ds, 1, 0.5)


class TestUpdateSigma:
    def test_zero_residuals_gives_small_spd(self):
        # all observations exactly at the stationary point
        x = np.array([[2.0], [2.0], [2.0]])
        ds = PanelDataset([ObjectSeries(id="o", x=x)])
        posts = [Posterior(marginals=np.ones((3, 1)),
                           conditionals=np.ones((2, 1, 1)))]
        out = update_sigma(posts, ds, 0, 0.5, np.array([2.0]))
        assert out.values[0, 0] > 0.0
        assert out.values[0, 0] < 1e-6

    def test_single_initial_observation(self):
        ds = PanelDataset([ObjectSeries(id="o", x=[[1.0, 2.0]])])
        posts = [Posterior(marginals=np.ones((1, 1)),
                           conditionals=np.zeros((0, 1, 1)))]
        mu = np.array([0.0, 0.0])
        out = update_sigma(posts, ds, 0, 0.5, mu)
        resid = np.array([1.0, 2.0])
        np.testing.assert_allclose(out.values, np.outer(resid, resid)
                                   + out.jitter * np.eye(2), rtol=1e-10)

    def test_matches_numeric_argmax(self):
        rng = np.random.default_rng(15)
        ds, params, posts = dataset_and_posts(rng)
        cp = params.clusters
        lam = cp.lam
        k = 0
        mu_k = cp.mu[k]
        sig_star = update_sigma(posts, ds, k, lam, mu_k).values[0, 0]

        def neg_q(v):
            sigma = list(cp.sigma)
            sigma[k] = SpdMatrix([[v]])
            trial = ModelParams(
                clusters=ClusterParams(cp.mu, sigma, lam),
                transitions=params.transitions)
            return -q_function_from_posteriors(trial, posts, ds)

        res = minimize_scalar(neg_q, bounds=(1e-4, 50.0), method="bounded",
                              options={"xatol": 1e-10})
        assert sig_star == pytest.approx(res.x, rel=1e-6)


def regressed_fixture(rng, K=3, d=2, n=8, T_max=4):
    cfg_d = d
    params = random_params(rng, K, 2, cfg_d, regressed=True)
    objects = [random_series(rng, int(rng.integers(1, T_max + 1)), 2, cfg_d,
                             ident=f"o{i}") for i in range(n)]
    ds = PanelDataset(objects)
    return ds, params, posteriors_for(ds, params)


class TestLogisticObjectives:
    def test_zero_coefficients_uniform_value(self):
        rng = np.random.default_rng(16)
        K, d, n = 3, 1, 5
        objects = [random_series(rng, 1, 1, d, ident=f"o{i}")
                   for i in range(n)]
        ds = PanelDataset(objects)
        posts = [Posterior(marginals=np.full((1, K), 1.0 / K),
                           conditionals=np.zeros((0, K, K)))
                 for _ in range(n)]
        coeffs = np.zeros((K - 1) * (1 + d))
        value, grad = logistic_objective_initial(coeffs, posts, ds)
        assert value == pytest.approx(n * np.log(1.0 / K), rel=1e-12)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_two_class_single_object_closed_form(self):
        rng = np.random.default_rng(17)
        w = 0.8
        m = 0.3
        ds = PanelDataset([ObjectSeries(id="o", x=[[0.0]], w=[[w]])])
        posts = [Posterior(marginals=np.array([[m, 1 - m]]),
                           conditionals=np.zeros((0, 2, 2)))]
        delta, gamma = 0.4, -1.1
        eta = delta + gamma * w
        p1 = 1.0 / (1.0 + np.exp(-eta))
        expected = m * np.log(p1) + (1 - m) * np.log(1 - p1)
        value, _ = logistic_objective_initial(
            np.array([delta, gamma]), posts, ds)
        assert value == pytest.approx(expected, rel=1e-12)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(18)
        ds, params, posts = regressed_fixture(rng)
        K, d = 3, 2
        npar = (K - 1) * (1 + d)
        for trial in range(50):
            coeffs = rng.normal(scale=0.8, size=npar)
            if trial % 2 == 0:
                value, grad = logistic_objective_initial(
                    coeffs, posts, ds, ridge=0.1 if trial % 4 == 0 else 0.0)
                f = lambda v: logistic_objective_initial(
                    v, posts, ds, ridge=0.1 if trial % 4 == 0 else 0.0)[0]
            else:
                h = trial % 3
                value, grad = logistic_objective_transition(
                    h, coeffs, posts, ds)
                f = lambda v: logistic_objective_transition(
                    h, v, posts, ds)[0]
            fd = central_diff_grad(f, coeffs, h=1e-5)
            scale = max(1.0, float(np.max(np.abs(fd))))
            assert np.max(np.abs(grad - fd)) / scale <= 1e-5


class TestBfgsMaximize:
    def test_concave_quadratic(self):
        out = bfgs_maximize(
            lambda x: (-(x[0] - 3.0) ** 2, np.array([-2.0 * (x[0] - 3.0)])),
            np.zeros(1), grad_tol=1e-10)
        assert out[0] == pytest.approx(3.0, abs=1e-8)

    def test_separable_data_warns(self):
        # hard initial assignments perfectly predicted by the covariate
        objects, posts = [], []
        for i in range(20):
            w = 1.0 if i % 2 == 0 else -1.0
            m = np.array([[1.0, 0.0]]) if w > 0 else np.array([[0.0, 1.0]])
            objects.append(ObjectSeries(id=f"o{i}", x=[[0.0]], w=[[w]]))
            posts.append(Posterior(marginals=m,
                                   conditionals=np.zeros((0, 2, 2))))
        ds = PanelDataset(objects)
        with pytest.warns(SeparationWarning):
            bfgs_maximize(
                lambda v: logistic_objective_initial(v, posts, ds),
                np.zeros(2), grad_tol=1e-12, max_iters=500)

    def test_matches_grid_search(self):
        rng = np.random.default_rng(19)
        objects, posts = [], []
        for i in range(12):
            w = rng.normal()
            m = rng.dirichlet(np.ones(2))
            objects.append(ObjectSeries(id=f"o{i}", x=[[0.0]], w=[[w]]))
            posts.append(Posterior(marginals=m[None, :],
                                   conditionals=np.zeros((0, 2, 2))))
        ds = PanelDataset(objects)

        def value(v):
            return logistic_objective_initial(v, posts, ds)[0]

        out = bfgs_maximize(
            lambda v: logistic_objective_initial(v, posts, ds),
            np.zeros(2), grad_tol=1e-12)
        center = np.zeros(2)
        width = 3.0
        for _ in range(5):
            grid = [center + np.array([a, b])
                    for a in np.linspace(-width, width, 41)
                    for b in np.linspace(-width, width, 41)]
            center = max(grid, key=value)
            width /= 10.0
        np.testing.assert_allclose(out, center, atol=1e-4)

    def test_never_worse_than_start(self):
        # a start already past the optimum must not regress
        def f(x):
            return (-(x[0] - 1.0) ** 2, np.array([-2.0 * (x[0] - 1.0)]))

        out = bfgs_maximize(f, np.array([1.0]), grad_tol=1e-10)
        assert f(out)[0] >= f(np.array([1.0]))[0]


class TestKmeansInit:
    def test_separated_blobs(self):
        rng = np.random.default_rng(20)
        a = rng.normal(0.0, 0.5, size=(40, 2))
        b = rng.normal(0.0, 0.5, size=(40, 2)) + np.array([10.0, 10.0])
        objects = [ObjectSeries(id=f"a{i}", x=row[None, :])
                   for i, row in enumerate(a)]
        objects += [ObjectSeries(id=f"b{i}", x=row[None, :])
                    for i, row in enumerate(b)]
        ds = PanelDataset(objects)
        params, labels = kmeans_init(ds, 2, restarts=5, seed=0)
        mu = params.clusters.mu[np.argsort(params.clusters.mu[:, 0])]
        np.testing.assert_allclose(mu[0], a.mean(axis=0), atol=0.1)
        np.testing.assert_allclose(mu[1], b.mean(axis=0), atol=0.1)
        assert params.clusters.lam == 0.5
        assert set(labels) == {1, 2}

    def test_single_cluster_grand_stats(self):
        rng = np.random.default_rng(21)
        x = rng.normal(size=(30, 2))
        ds = PanelDataset([ObjectSeries(id=f"o{i}", x=x[3 * i:3 * i + 3])
                           for i in range(10)])
        params, labels = kmeans_init(ds, 1, restarts=3, seed=1)
        np.testing.assert_allclose(params.clusters.mu[0], x.mean(axis=0),
                                   atol=1e-10)
        np.testing.assert_allclose(params.clusters.sigma[0].values,
                                   np.cov(x, rowvar=False), atol=1e-8)
        assert np.all(labels == 1)

    def test_deterministic(self):
        rng = np.random.default_rng(22)
        ds = PanelDataset([ObjectSeries(id=f"o{i}",
                                        x=rng.normal(size=(3, 2)))
                           for i in range(15)])
        p1, l1 = kmeans_init(ds, 3, restarts=4, seed=7)
        p2, l2 = kmeans_init(ds, 3, restarts=4, seed=7)
        assert np.array_equal(l1, l2)
        np.testing.assert_array_equal(p1.clusters.mu, p2.clusters.mu)
        np.testing.assert_array_equal(p1.transitions.beta,
                                      p2.transitions.beta)

    def test_regressed_intercepts_match_probabilities(self):
        rng = np.random.default_rng(23)
        ds = PanelDataset([
            ObjectSeries(id=f"o{i}", x=rng.normal(size=(4, 2)),
                         w=rng.normal(size=(4, 1)))
            for i in range(12)
        ])
        params, _ = kmeans_init(ds, 2, restarts=4, seed=3, regressed=True)
        tm = params.transitions
        assert isinstance(tm, RegressedTransition)
        np.testing.assert_array_equal(tm.gamma, 0.0)
        assert np.all(tm.delta[:, -1] == 0.0)


class TestFit:
    def test_single_cluster_converges_fast(self):
        cfg = SimConfig(n=30, T_max=6, K=1, p=2, seed=5)
        ds, truth = simulate(cfg)
        report = fit(ds, FitConfig(K=1, seed=0, coordinate_passes=30))
        assert report.converged
        assert report.iterations <= 3
        # at the fixed point another full update changes nothing
        posts = report.posteriors
        lam = report.params.clusters.lam
        mu = update_mu(posts, ds, 0, lam)
        np.testing.assert_allclose(mu, report.params.clusters.mu[0],
                                   rtol=1e-6)

    def test_trace_non_decreasing(self):
        for regressed in (False, True):
            for seed in (0, 1):
                cfg = SimConfig(n=40, T_max=6, K=2, p=2, seed=seed,
                                regressed=regressed)
                ds, _ = simulate(cfg)
                report = fit(ds, FitConfig(K=2, seed=seed,
                                           regressed=regressed))
                tr = np.array(report.loglik_trace)
                assert np.all(np.diff(tr) >= -1e-8 * np.abs(tr[:-1]))
                assert report.converged

    def test_hard_labels_are_argmax(self):
        cfg = SimConfig(n=20, T_max=5, K=2, p=2, seed=3)
        ds, _ = simulate(cfg)
        report = fit(ds, FitConfig(K=2, seed=3))
        for post, hard in zip(report.posteriors, report.hard_labels):
            np.testing.assert_array_equal(hard,
                                          post.marginals.argmax(axis=1) + 1)

    def test_regressed_requires_covariates(self):
        cfg = SimConfig(n=10, T_max=4, K=2, p=1, seed=0)
        ds, _ = simulate(cfg)
        with pytest.raises(ValueError):
            fit(ds, FitConfig(K=2, regressed=True))

    def test_frozen_slopes_match_fixed_trajectory(self):
        cfg = SimConfig(n=40, T_max=6, K=3, p=2, seed=11, regressed=True)
        ds, _ = simulate(cfg)
        init_fixed, _ = kmeans_init(ds, 3, restarts=5, seed=2)
        tm = init_fixed.transitions
        with np.errstate(divide="ignore"):
            la = np.log(np.maximum(tm.alpha, 1e-300))
            lb = np.log(np.maximum(tm.beta, 1e-300))
        delta = np.vstack([la - la[-1], lb - lb[:, -1][:, None]])
        delta[:, -1] = 0.0
        init_reg = ModelParams(
            clusters=init_fixed.clusters,
            transitions=RegressedTransition(
                delta=delta, gamma=np.zeros((4, 3, ds.d))))
        rep_fixed = fit(ds, FitConfig(K=3, seed=2), init_params=init_fixed)
        rep_reg = fit(ds, FitConfig(K=3, seed=2, regressed=True,
                                    freeze_gamma=True),
                      init_params=init_reg)
        n_iter = min(rep_fixed.iterations, rep_reg.iterations)
        for a, b in zip(rep_fixed.loglik_trace[:n_iter],
                        rep_reg.loglik_trace[:n_iter]):
            assert abs(a - b) <= 1e-9 * max(1.0, abs(a))

    def test_overfit_k_converges_with_bounded_rebirths(self, caplog):
        cfg = SimConfig(n=60, T_max=6, K=2, p=3, seed=21)
        ds, _ = simulate(cfg)
        with caplog.at_level(logging.WARNING, logger="switchclust.learn"):
            report = fit(ds, FitConfig(K=4, seed=21))
        assert report.converged
        tr = np.array(report.loglik_trace)
        assert np.all(np.isfinite(tr))

    def test_rebirth_gives_transition_mass(self):
        rng = np.random.default_rng(24)
        params = random_params(rng, 3, 2)
        resp = np.array([50.0, 30.0, 0.001])
        newp = _rebirth(params, [2], resp, RngStream(0), 2)
        assert newp.transitions.alpha[2] >= 1.0 / 12.0
        assert np.all(newp.transitions.beta[:, 2] >= 1.0 / 12.0)
        np.testing.assert_allclose(newp.transitions.alpha.sum(), 1.0)
        np.testing.assert_allclose(newp.transitions.beta.sum(axis=1), 1.0)
