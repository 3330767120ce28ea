"""Generalized EM estimation.

The E-step produces per-object smoothed posteriors; the M-step applies
closed-form updates for the initial/transition probabilities and one or
more coordinate-ascent sweeps over the blend weight, cluster means, and
covariances. With covariate-regressed transitions the probability
parameters are instead optimized row-by-row with BFGS on concave
expected log-likelihood objectives. Every partial update improves the
expected complete-data log-likelihood, so the data log-likelihood is
non-decreasing across iterations.
"""

from __future__ import annotations

import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateCluster, SeparationWarning
from .inference import (
    Posterior,
    _BatchLayout,
    _estep_batched,
    _posterior_from_tables,
    posterior,
)
from .model import (
    ClusterParams,
    FixedTransition,
    ModelParams,
    PanelDataset,
    RegressedTransition,
    _emission_log_table,
    _forward_from_tables,
    _log_transition_table,
    _softmax,
)
from .numkernel import RngStream, SpdMatrix

logger = logging.getLogger(__name__)

_LAM_FLOOR = 1e-6
_COEF_DIVERGENCE = 30.0


@dataclass
class FitConfig:
    """Controls for the generalized EM driver."""

    K: int
    max_iters: int = 500
    rel_tol: float = 1e-8
    kmeans_restarts: int = 15
    coordinate_passes: int = 1
    bfgs_grad_tol: float = 1e-6
    bfgs_max_iters: int = 200
    ridge: float = 0.0
    seed: int = 0
    regressed: bool = False
    freeze_gamma: bool = False
    n_threads: int = 1

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.kmeans_restarts < 1:
            raise ValueError("kmeans_restarts must be at least 1")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")


@dataclass
class FitReport:
    """Result of a fit: final parameters, per-iteration log-likelihoods,
    per-object posteriors, and 1-based hard assignments."""

    params: ModelParams
    loglik_trace: list[float]
    posteriors: list[Posterior]
    hard_labels: list[np.ndarray]
    converged: bool
    iterations: int
    wall_seconds: float

    def flat_labels(self) -> np.ndarray:
        """Hard labels stacked object-major, time-minor."""
        return np.concatenate(self.hard_labels)


def _xlogw(weights, logvals) -> float:
    """sum(w * logv) treating 0 * -inf as 0."""
    with np.errstate(invalid="ignore"):
        return float(np.sum(np.where(weights > 0.0,
                                     weights * logvals, 0.0)))


def q_function_from_posteriors(theta: ModelParams, posteriors, ds) -> float:
    """Expected complete-data log-likelihood of `theta` under given
    posteriors, using single sums over times and clusters."""
    total = 0.0
    for obj, post in zip(ds.objects, posteriors):
        loge = _emission_log_table(obj, theta.clusters)
        log_alpha, log_beta = _log_transition_table(theta, obj)
        m, c = post.marginals, post.conditionals
        total += _xlogw(m[0], log_alpha + loge[0])
        if obj.T > 1:
            pair = m[:-1, :, None] * c
            total += _xlogw(pair, log_beta[1:])
            total += _xlogw(m[1:], loge[1:])
    return total


def q_function(theta: ModelParams, theta_hat: ModelParams,
               ds: PanelDataset) -> float:
    """Expected complete-data log-likelihood of `theta`, expectations
    taken under the posteriors implied by `theta_hat`."""
    posts = [posterior(obj, theta_hat) for obj in ds.objects]
    return q_function_from_posteriors(theta, posts, ds)


# ---------------------------------------------------------------------------
# closed-form updates


def update_alpha(posteriors, ds) -> np.ndarray:
    """Average first-time-point marginal over objects."""
    if len(posteriors) != ds.n:
        raise ValueError("posterior count does not match dataset")
    m0 = np.vstack([post.marginals[0] for post in posteriors])
    return m0.mean(axis=0)


def update_beta(posteriors, ds, prev=None) -> np.ndarray:
    """Expected transition counts over expected occupancy.

    Rows whose expected occupancy is zero are left at their previous
    value (uniform if `prev` is not given) and logged.
    """
    K = posteriors[0].K
    st = _MStepStacks(posteriors, ds)
    num = np.einsum("th,thk->hk", st.m_prev, st.cond)
    den = st.m_prev.sum(axis=0)
    beta = np.empty((K, K))
    for h in range(K):
        if den[h] > 0.0:
            row = num[h] / den[h]
            beta[h] = row / row.sum()
        else:
            beta[h] = prev[h] if prev is not None else np.full(K, 1.0 / K)
            logger.warning("no expected visits to cluster %d; its "
                           "transition row was left unchanged", h)
    return beta


class _MStepStacks:
    """Row-stacked data and posterior weights shared by the closed-form
    updates: first-time rows (n of them) and transition rows (one per
    object-time with t >= 2), object-major and time-minor."""

    def __init__(self, posteriors, ds):
        self.first_x = np.vstack([obj.x[0] for obj in ds.objects])
        self.m_first = np.vstack([post.marginals[0] for post in posteriors])
        xs, prevs, ms, mprevs, conds = [], [], [], [], []
        for obj, post in zip(ds.objects, posteriors):
            if obj.T < 2:
                continue
            xs.append(obj.x[1:])
            prevs.append(obj.x[:-1])
            ms.append(post.marginals[1:])
            mprevs.append(post.marginals[:-1])
            conds.append(post.conditionals)
        K = self.m_first.shape[1]
        p = self.first_x.shape[1]
        if xs:
            self.trans_x = np.vstack(xs)
            self.trans_prev = np.vstack(prevs)
            self.m_trans = np.vstack(ms)
            self.m_prev = np.vstack(mprevs)
            self.cond = np.concatenate(conds, axis=0)
        else:
            self.trans_x = np.zeros((0, p))
            self.trans_prev = np.zeros((0, p))
            self.m_trans = np.zeros((0, K))
            self.m_prev = np.zeros((0, K))
            self.cond = np.zeros((0, K, K))


def _lambda_from_stacks(st: _MStepStacks, cp: ClusterParams) -> float:
    if st.trans_x.shape[0] == 0:
        return cp.lam
    num = 0.0
    den = 0.0
    diffs = st.trans_x - st.trans_prev
    for k in range(cp.K):
        dev = cp.mu[k][None, :] - st.trans_prev
        u = cp.sigma[k].solve(dev.T)
        num += float(np.sum(st.m_trans[:, k]
                            * np.einsum("tp,pt->t", diffs, u)))
        den += float(np.sum(st.m_trans[:, k]
                            * np.einsum("tp,pt->t", dev, u)))
    if den <= 0.0:
        return cp.lam
    return float(min(max(num / den, _LAM_FLOOR), 1.0 - _LAM_FLOOR))


def _mu_from_stacks(st: _MStepStacks, k: int, lam: float) -> np.ndarray:
    num = st.m_first[:, k] @ st.first_x
    den = float(st.m_first[:, k].sum())
    if st.trans_x.shape[0]:
        wts = st.m_trans[:, k]
        num = num + lam * (wts @ (st.trans_x
                                  - (1.0 - lam) * st.trans_prev))
        den += lam * lam * float(wts.sum())
    if den <= 1e-12:
        raise DegenerateCluster(f"cluster {k} has vanishing responsibility")
    return num / den


def _sigma_stats_from_stacks(st: _MStepStacks, k: int, lam: float, mu):
    mu = np.asarray(mu, dtype=float).ravel()
    a = st.first_x - mu
    w0 = st.m_first[:, k]
    s = (a * w0[:, None]).T @ a
    den = float(w0.sum())
    if st.trans_x.shape[0]:
        b = st.trans_x - lam * mu - (1.0 - lam) * st.trans_prev
        wt = st.m_trans[:, k]
        s = s + (b * wt[:, None]).T @ b
        den += float(wt.sum())
    return s, den


def update_lambda(posteriors, ds, cp: ClusterParams) -> float:
    """Exact blend-weight maximizer given the current means and
    covariances, clamped to [1e-6, 1 - 1e-6]."""
    return _lambda_from_stacks(_MStepStacks(posteriors, ds), cp)


def update_mu(posteriors, ds, k: int, lam: float) -> np.ndarray:
    """Exact mean maximizer for cluster k given the blend weight."""
    return _mu_from_stacks(_MStepStacks(posteriors, ds), k, lam)


def _sigma_stats(posteriors, ds, k: int, lam: float, mu):
    """Unnormalized weighted residual scatter and total weight for
    cluster k."""
    return _sigma_stats_from_stacks(_MStepStacks(posteriors, ds), k, lam, mu)


def _sigma_q_term(sigma: SpdMatrix, scatter, weight) -> float:
    """Covariance-dependent part of cluster k's expected log-likelihood:
    -0.5 * (weight * (p log 2pi + logdet) + tr(inv(sigma) @ scatter))."""
    p = sigma.dim
    quad = float(np.trace(sigma.solve(scatter)))
    return -0.5 * (weight * (p * np.log(2.0 * np.pi) + sigma.logdet) + quad)


def _sigma_from_scatter(s, den, p) -> SpdMatrix:
    if den <= 1e-12:
        raise DegenerateCluster("cluster has vanishing responsibility")
    s = s / den
    try:
        return SpdMatrix(s)
    except Exception:
        eps = 1e-8 * max(float(np.trace(s)) / p, 1.0)
        return SpdMatrix(s + eps * np.eye(p))


def update_sigma(posteriors, ds, k: int, lam: float, mu) -> SpdMatrix:
    """Weighted residual outer-product average for cluster k (jittered
    when not positive definite)."""
    s, den = _sigma_stats(posteriors, ds, k, lam, mu)
    return _sigma_from_scatter(s, den, ds.p)


# ---------------------------------------------------------------------------
# logistic coefficient objectives


def pack_row_coeffs(delta_row, gamma_row) -> np.ndarray:
    """Flatten one row's free coefficients: [d_1, g_1.., ..., d_{K-1}, ...]."""
    delta_row = np.asarray(delta_row, dtype=float)
    gamma_row = np.atleast_2d(np.asarray(gamma_row, dtype=float))
    k = delta_row.shape[0]
    return np.concatenate(
        [delta_row[: k - 1, None], gamma_row[: k - 1]], axis=1).ravel()


def unpack_row_coeffs(vec, K: int, d: int):
    """Inverse of :func:`pack_row_coeffs`; restores the pinned column."""
    arr = np.asarray(vec, dtype=float).reshape(K - 1, 1 + d)
    delta = np.concatenate([arr[:, 0], [0.0]])
    gamma = np.vstack([arr[:, 1:], np.zeros((1, d))])
    return delta, gamma


def _mnlogit_value_grad(vec, M, W, ridge):
    """Value and gradient of sum_i sum_k M[i,k] * log softmax_k(eta_i)
    with eta_i = delta + W[i] @ gamma and the K-th logit pinned at 0,
    minus ridge * ||vec||^2."""
    n, K = M.shape
    d = W.shape[1]
    arr = vec.reshape(K - 1, 1 + d)
    eta = np.concatenate(
        [W @ arr[:, 1:].T + arr[:, 0], np.zeros((n, 1))], axis=1)
    shift = eta.max(axis=1, keepdims=True)
    ex = np.exp(eta - shift)
    norm = ex.sum(axis=1, keepdims=True)
    logp = eta - shift - np.log(norm)
    value = float(np.sum(M * logp)) - ridge * float(vec @ vec)
    probs = ex / norm
    resid = M - M.sum(axis=1, keepdims=True) * probs
    grad = np.concatenate(
        [resid[:, : K - 1].sum(axis=0)[:, None],
         resid[:, : K - 1].T @ W], axis=1).ravel()
    grad -= 2.0 * ridge * vec
    return value, grad


def _stack_initial(posteriors, ds):
    M = np.vstack([post.marginals[0] for post in posteriors])
    W = np.vstack([obj.w[0] for obj in ds.objects])
    return M, W


def _stack_transition(h, posteriors, ds):
    m_rows, w_rows = [], []
    for obj, post in zip(ds.objects, posteriors):
        if obj.T < 2:
            continue
        m_rows.append(post.marginals[:-1, h][:, None]
                      * post.conditionals[:, h, :])
        w_rows.append(obj.w[1:])
    K = posteriors[0].K
    if not m_rows:
        return np.zeros((0, K)), np.zeros((0, ds.d))
    return np.vstack(m_rows), np.vstack(w_rows)


def logistic_objective_initial(coeffs, posteriors, ds, ridge=0.0):
    """Expected initial-assignment log-likelihood of the row-0
    coefficients and its analytic gradient."""
    M, W = _stack_initial(posteriors, ds)
    return _mnlogit_value_grad(np.asarray(coeffs, dtype=float), M, W, ridge)


def logistic_objective_transition(h, coeffs, posteriors, ds, ridge=0.0):
    """Expected transition log-likelihood for the coefficients of row h
    (transitions out of cluster h) and its analytic gradient."""
    M, W = _stack_transition(h, posteriors, ds)
    return _mnlogit_value_grad(np.asarray(coeffs, dtype=float), M, W, ridge)


def bfgs_maximize(fun_and_grad, start, grad_tol=1e-6, max_iters=200):
    """Maximize a concave objective with BFGS, warm-started at `start`.

    Returns coefficients no worse than the start point. Emits a
    SeparationWarning when any coefficient magnitude exceeds 30, the
    signature of diverging logistic MLEs.
    """
    start = np.asarray(start, dtype=float)

    def neg(x):
        v, g = fun_and_grad(x)
        return -v, -np.asarray(g, dtype=float)

    res = minimize(neg, start, jac=True, method="BFGS",
                   options={"gtol": grad_tol, "maxiter": max_iters})
    x = np.asarray(res.x, dtype=float)
    if not np.all(np.isfinite(x)) or res.fun > neg(start)[0]:
        x = start
    if x.size and float(np.max(np.abs(x))) > _COEF_DIVERGENCE:
        warnings.warn(
            "logistic coefficients exceed 30 in magnitude; the expected "
            "assignments look separable and the maximizer may diverge",
            SeparationWarning, stacklevel=2)
    return x


# ---------------------------------------------------------------------------
# k-means initialization


def _lloyd_single(X, K, rng, max_iters=100):
    n = X.shape[0]
    centers = X[rng.gen.choice(n, size=K, replace=False)].copy()
    labels = np.full(n, -1)
    for _ in range(max_iters):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        for k in range(K):
            if not np.any(new_labels == k):
                far = d2[np.arange(n), new_labels].argmax()
                new_labels[far] = k
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(K):
            centers[k] = X[labels == k].mean(axis=0)
    sse = float(((X - centers[labels]) ** 2).sum())
    return centers, labels, sse


def _safe_spd(s, p) -> SpdMatrix:
    try:
        return SpdMatrix(s)
    except Exception:
        eps = 1e-6 * max(float(np.trace(s)) / p, 1.0)
        return SpdMatrix(s + eps * np.eye(p))


def _log_odds(probs) -> np.ndarray:
    lp = np.log(np.maximum(np.asarray(probs, dtype=float), 1e-300))
    out = lp - lp[..., -1:]
    out[..., -1] = 0.0
    return out


def kmeans_init(ds: PanelDataset, K: int, restarts: int = 15, seed: int = 0,
                regressed: bool = False):
    """Initial parameters from pooled-row k-means.

    Runs Lloyd's algorithm `restarts` times from random starts on all
    (object, time) rows and keeps the lowest within-cluster SSE. The
    winning partition supplies cluster means and covariances, initial
    probabilities from the first-time-point label frequencies, and
    Laplace-smoothed transition probabilities from the hard label
    pairs. The blend weight starts at 0.5. In the regressed case the
    intercepts are the log-odds of those probabilities (smoothed) and
    the covariate coefficients start at zero.

    Returns
    -------
    (ModelParams, ndarray)
        The parameters plus the flat 1-based k-means labels, which also
        serve as the naive clustering baseline.
    """
    X = ds.pooled_x()
    n_rows, p = X.shape
    if n_rows < K:
        raise ValueError("fewer pooled rows than clusters")
    streams = RngStream(seed).split(restarts)
    best = None
    for st in streams:
        result = _lloyd_single(X, K, st)
        if best is None or result[2] < best[2]:
            best = result
    centers, labels, _ = best

    pooled_cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    sigma = []
    for k in range(K):
        rows = X[labels == k]
        s = (np.atleast_2d(np.cov(rows, rowvar=False, ddof=1))
             if rows.shape[0] >= 2 else pooled_cov)
        sigma.append(_safe_spd(s, p))
    cp = ClusterParams(mu=centers.copy(), sigma=sigma, lam=0.5)

    # split flat labels back into per-object runs
    offsets = np.cumsum([0] + [obj.T for obj in ds.objects])
    per_obj = [labels[offsets[i]:offsets[i + 1]] for i in range(ds.n)]
    first = np.array([lab[0] for lab in per_obj])
    counts1 = np.bincount(first, minlength=K).astype(float)
    alpha = counts1 / ds.n
    trans = np.zeros((K, K))
    for lab in per_obj:
        for a, b in zip(lab[:-1], lab[1:]):
            trans[a, b] += 1.0
    beta = (trans + 1.0) / (trans.sum(axis=1, keepdims=True) + K)

    if regressed:
        if ds.d == 0:
            raise ValueError("regressed initialization requires covariates")
        alpha_s = (counts1 + 1.0) / (ds.n + K)
        delta = np.vstack([_log_odds(alpha_s), _log_odds(beta)])
        gamma = np.zeros((K + 1, K, ds.d))
        tm = RegressedTransition(delta=delta, gamma=gamma)
    else:
        tm = FixedTransition(alpha=alpha, beta=beta)
    return ModelParams(clusters=cp, transitions=tm), labels + 1


# ---------------------------------------------------------------------------
# fit driver


def _estep(ds, params, n_threads=1, layout=None):
    """Per-object posteriors and total log-likelihood under `params`.

    Uses the padded batch evaluation when a layout is supplied or the
    dataset is single-threaded; with n_threads > 1 the objects are
    processed in parallel chunks instead.
    """
    if n_threads > 1:
        def one(obj):
            loge = _emission_log_table(obj, params.clusters)
            log_alpha, log_beta = _log_transition_table(params, obj)
            ll, _ = _forward_from_tables(loge, log_alpha, log_beta)
            return ll, _posterior_from_tables(loge, log_alpha, log_beta)

        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(one, ds.objects))
        total = float(sum(r[0] for r in results))
        return total, [r[1] for r in results]
    if layout is None:
        layout = _BatchLayout(ds)
    return _estep_batched(layout, params)


def _update_transitions(ds, tm, posteriors, config):
    if isinstance(tm, FixedTransition):
        return FixedTransition(
            alpha=update_alpha(posteriors, ds),
            beta=update_beta(posteriors, ds, prev=tm.beta))
    K, d = tm.K, tm.d
    if config.freeze_gamma:
        if np.any(tm.gamma != 0.0):
            raise ValueError("freeze_gamma requires all-zero coefficients")
        alpha = update_alpha(posteriors, ds)
        prev_beta = np.vstack([_softmax(tm.delta[h + 1]) for h in range(K)])
        beta = update_beta(posteriors, ds, prev=prev_beta)
        delta = np.vstack([_log_odds(alpha), _log_odds(beta)])
        return RegressedTransition(delta=delta, gamma=tm.gamma.copy())
    delta = np.zeros((K + 1, K))
    gamma = np.zeros((K + 1, K, d))
    for row in range(K + 1):
        if row == 0:
            M, W = _stack_initial(posteriors, ds)
        else:
            M, W = _stack_transition(row - 1, posteriors, ds)
        start = pack_row_coeffs(tm.delta[row], tm.gamma[row])
        if M.shape[0] == 0 or float(M.sum()) <= 0.0:
            coeffs = start
        else:
            coeffs = bfgs_maximize(
                lambda v: _mnlogit_value_grad(v, M, W, config.ridge),
                start, grad_tol=config.bfgs_grad_tol,
                max_iters=config.bfgs_max_iters)
        delta[row], gamma[row] = unpack_row_coeffs(coeffs, K, d)
    return RegressedTransition(delta=delta, gamma=gamma)


def _mstep(ds, params, posteriors, config, skip=()):
    """One M-step. Clusters listed in `skip` keep their current mean and
    covariance (used for starved clusters awaiting rebirth or left dead)."""
    K = params.K
    new_tm = _update_transitions(ds, params.transitions, posteriors, config)

    cp = params.clusters
    mu = cp.mu.copy()
    sigma = list(cp.sigma)
    lam = cp.lam
    stacks = _MStepStacks(posteriors, ds)
    for _ in range(config.coordinate_passes):
        lam = _lambda_from_stacks(stacks, ClusterParams(mu, sigma, lam))
        for k in range(K):
            if k in skip:
                continue
            mu[k] = _mu_from_stacks(stacks, k, lam)
        for k in range(K):
            if k in skip:
                continue
            # A rank-deficient scatter makes the jittered candidate leave
            # the argmax; accept it only if it does not lower this
            # cluster's expected log-likelihood (GEM needs improvement
            # only).
            scatter, weight = _sigma_stats_from_stacks(stacks, k, lam, mu[k])
            if weight <= 1e-12:
                raise DegenerateCluster(
                    f"cluster {k} has vanishing responsibility")
            candidate = _sigma_from_scatter(scatter, weight, ds.p)
            if (_sigma_q_term(candidate, scatter, weight)
                    >= _sigma_q_term(sigma[k], scatter, weight)):
                sigma[k] = candidate

    return ModelParams(clusters=ClusterParams(mu, sigma, lam),
                       transitions=new_tm)


def _rebirth(params, reborn, resp, rng, p):
    """Reinitialize starved clusters near the most occupied cluster and
    give them enough transition mass to survive the next E-step."""
    K = params.K
    donor = int(np.argmax(resp))
    cp = params.clusters
    mu = cp.mu.copy()
    sigma = list(cp.sigma)
    for k in reborn:
        mu[k] = mu[donor] + sigma[donor].chol @ rng.gen.standard_normal(p)
        sigma[k] = sigma[donor]
        logger.warning("cluster %d starved (responsibility %.3g); "
                       "reinitialized near cluster %d", k, resp[k], donor)
    tm = params.transitions
    if isinstance(tm, FixedTransition):
        eps = 1.0 / (2.0 * K)
        alpha = tm.alpha.copy()
        beta = tm.beta.copy()
        for k in reborn:
            alpha = (1.0 - eps) * alpha
            alpha[k] += eps
            beta = (1.0 - eps) * beta
            beta[:, k] += eps
        new_tm = FixedTransition(alpha=alpha / alpha.sum(),
                                 beta=beta / beta.sum(axis=1, keepdims=True))
    else:
        delta = tm.delta.copy()
        gamma = tm.gamma.copy()
        for k in reborn:
            if k == K - 1:
                continue  # pinned reference column already has unit odds
            delta[:, k] = delta.max(axis=1) - np.log(K)
            gamma[:, k, :] = 0.0
        new_tm = RegressedTransition(delta=delta, gamma=gamma)
    return ModelParams(clusters=ClusterParams(mu, sigma, cp.lam),
                       transitions=new_tm)


def fit(ds: PanelDataset, config: FitConfig,
        init_params: ModelParams | None = None) -> FitReport:
    """Fit the model by generalized EM from a k-means start.

    Iterates E-step posteriors and M-step updates until the relative
    log-likelihood change falls below ``config.rel_tol`` or
    ``config.max_iters`` is reached. The log-likelihood trace is
    recorded at every iteration and is non-decreasing up to round-off.
    A starved cluster is reinitialized near the most occupied cluster
    and the fit continues. `init_params` overrides the k-means start.
    """
    t0 = time.perf_counter()
    if config.regressed and ds.d == 0:
        raise ValueError("regressed fit requires covariates in the dataset")
    if init_params is not None:
        params = init_params
    else:
        params, _ = kmeans_init(ds, config.K, config.kmeans_restarts,
                                config.seed, regressed=config.regressed)
    perturb_rng = RngStream(config.seed ^ 0x9E3779B9)
    layout = _BatchLayout(ds) if config.n_threads == 1 else None
    threshold = 1e-3 * ds.total_obs / config.K
    rebirth_attempts = np.zeros(config.K, dtype=int)
    last_rebirth = np.full(config.K, -10)

    trace: list[float] = []
    posteriors: list[Posterior] = []
    converged = False
    for it in range(config.max_iters):
        ll, posteriors = _estep(ds, params, config.n_threads, layout)
        trace.append(ll)
        if it > 0 and abs(trace[-1] - trace[-2]) <= (
                config.rel_tol * max(1.0, abs(trace[-2]))):
            converged = True
            break
        if it == config.max_iters - 1:
            break
        resp = np.zeros(config.K)
        for post in posteriors:
            resp += post.marginals.sum(axis=0)
        starved = [k for k in range(config.K) if resp[k] < threshold]
        # rebirth only twice per cluster and only after the previous
        # attempt has seen an E-step; afterwards let the cluster die
        reborn = [k for k in starved
                  if rebirth_attempts[k] < 2 and it - last_rebirth[k] >= 2]
        params = _mstep(ds, params, posteriors, config, skip=set(starved))
        if reborn:
            for k in reborn:
                rebirth_attempts[k] += 1
                last_rebirth[k] = it
            params = _rebirth(params, reborn, resp, perturb_rng, ds.p)

    hard = [post.marginals.argmax(axis=1) + 1 for post in posteriors]
    return FitReport(
        params=params,
        loglik_trace=trace,
        posteriors=posteriors,
        hard_labels=hard,
        converged=converged,
        iterations=len(trace),
        wall_seconds=time.perf_counter() - t0,
    )
