"""Model types, emission densities, and likelihood recursions.

The observation model: at the first time point an object's p-vector is
normal around its cluster's mean; afterwards it is normal around a
convex blend of the current cluster's mean (weight `lam`) and the
object's previous value (weight ``1 - lam``), with the current cluster's
covariance. Cluster assignments follow a Markov chain whose initial and
transition probabilities are either fixed or multinomial-logistic
functions of per-time covariates.

Cluster indices are 0-based throughout the library. 1-based labels
appear only in files and hard-assignment vectors.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericalUnderflow
from .numkernel import SpdMatrix, logsumexp, mvn_logpdf, mvn_logpdf_rows

_SIMPLEX_ATOL = 1e-9
_MAX_PATHS = 10**6


@dataclass
class ObjectSeries:
    """One object's time series: responses `x` (T x p) and optional
    covariates `w` (T x d)."""

    id: str
    x: np.ndarray
    w: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if self.x.ndim != 2 or self.x.shape[0] < 1:
            raise ValueError(f"object {self.id!r}: responses must be T x p")
        if self.w is not None:
            self.w = np.atleast_2d(np.asarray(self.w, dtype=float))
            if self.w.shape[0] != self.x.shape[0]:
                raise ValueError(
                    f"object {self.id!r}: covariate rows ({self.w.shape[0]}) "
                    f"do not match response rows ({self.x.shape[0]})"
                )

    @property
    def T(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def d(self) -> int:
        return 0 if self.w is None else self.w.shape[1]


@dataclass
class PanelDataset:
    """A collection of ObjectSeries with consistent dimensions."""

    objects: list[ObjectSeries]

    def __post_init__(self):
        if not self.objects:
            raise ValueError("dataset must contain at least one object")
        p = self.objects[0].p
        d = self.objects[0].d
        for obj in self.objects:
            if obj.p != p:
                raise ValueError(
                    f"object {obj.id!r} has p={obj.p}, expected {p}")
            if obj.d != d:
                raise ValueError(
                    f"object {obj.id!r} has d={obj.d}, expected {d}")

    @property
    def n(self) -> int:
        return len(self.objects)

    @property
    def p(self) -> int:
        return self.objects[0].p

    @property
    def d(self) -> int:
        return self.objects[0].d

    @property
    def total_obs(self) -> int:
        return sum(obj.T for obj in self.objects)

    def pooled_x(self) -> np.ndarray:
        """All response rows stacked object-major, time-minor (N x p)."""
        return np.vstack([obj.x for obj in self.objects])

    def __iter__(self):
        return iter(self.objects)


@dataclass
class ClusterParams:
    """Per-cluster Gaussians plus the blend weight.

    mu : (K, p) cluster means
    sigma : list of K SpdMatrix covariances
    lam : blend weight in (0, 1); weight on the cluster mean in the
        transition emission mean.
    """

    mu: np.ndarray
    sigma: list[SpdMatrix]
    lam: float

    def __post_init__(self):
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        self.sigma = [
            s if isinstance(s, SpdMatrix) else SpdMatrix(s) for s in self.sigma
        ]
        if len(self.sigma) != self.mu.shape[0]:
            raise ValueError("mu and sigma disagree on the cluster count")
        for s in self.sigma:
            if s.dim != self.mu.shape[1]:
                raise ValueError("sigma dimension does not match mu")
        if not (0.0 < self.lam < 1.0):
            raise ValueError(f"lam must lie in (0, 1), got {self.lam}")

    @property
    def K(self) -> int:
        return self.mu.shape[0]

    @property
    def p(self) -> int:
        return self.mu.shape[1]


@dataclass
class FixedTransition:
    """Covariate-free initial probabilities and transition matrix."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).ravel()
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        k = self.alpha.shape[0]
        if self.beta.shape != (k, k):
            raise ValueError("beta must be K x K with K = len(alpha)")
        if np.any(self.alpha < 0) or np.any(self.beta < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(self.alpha.sum() - 1.0) > _SIMPLEX_ATOL:
            raise ValueError("alpha must sum to 1")
        if np.any(np.abs(self.beta.sum(axis=1) - 1.0) > _SIMPLEX_ATOL):
            raise ValueError("each beta row must sum to 1")

    @property
    def K(self) -> int:
        return self.alpha.shape[0]


@dataclass
class RegressedTransition:
    """Multinomial-logistic initial/transition probabilities.

    delta : (K+1, K) intercepts; row 0 drives the initial probabilities,
        row h (1-based h = 1..K) drives transitions out of cluster h-1.
    gamma : (K+1, K, d) covariate coefficients, same row layout.

    Column K-1 of both arrays is pinned to exactly zero for
    identifiability.
    """

    delta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.delta = np.atleast_2d(np.asarray(self.delta, dtype=float))
        self.gamma = np.asarray(self.gamma, dtype=float)
        k = self.delta.shape[1]
        if self.delta.shape[0] != k + 1:
            raise ValueError("delta must be (K+1) x K")
        if self.gamma.ndim != 3 or self.gamma.shape[:2] != (k + 1, k):
            raise ValueError("gamma must be (K+1) x K x d")
        if np.any(self.delta[:, k - 1] != 0.0):
            raise ValueError("delta column K must be exactly zero")
        if np.any(self.gamma[:, k - 1, :] != 0.0):
            raise ValueError("gamma column K must be exactly zero")

    @property
    def K(self) -> int:
        return self.delta.shape[1]

    @property
    def d(self) -> int:
        return self.gamma.shape[2]


TransitionModel = FixedTransition | RegressedTransition


@dataclass
class ModelParams:
    """Full parameter set: cluster Gaussians plus a transition model."""

    clusters: ClusterParams
    transitions: TransitionModel

    def __post_init__(self):
        if self.transitions.K != self.clusters.K:
            raise ValueError("transition model K does not match clusters")

    @property
    def K(self) -> int:
        return self.clusters.K

    @property
    def requires_covariates(self) -> bool:
        return isinstance(self.transitions, RegressedTransition)


def _softmax(logits):
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def eval_alpha(tm: TransitionModel, w=None) -> np.ndarray:
    """Initial cluster probabilities, optionally at covariate vector w."""
    if isinstance(tm, FixedTransition):
        return tm.alpha.copy()
    if w is None:
        raise ValueError("regressed transition model requires covariates")
    w = np.asarray(w, dtype=float).ravel()
    return _softmax(tm.delta[0] + tm.gamma[0] @ w)


def eval_beta_row(tm: TransitionModel, h: int, w=None) -> np.ndarray:
    """Transition probabilities out of cluster h (0-based)."""
    if isinstance(tm, FixedTransition):
        return tm.beta[h].copy()
    if w is None:
        raise ValueError("regressed transition model requires covariates")
    w = np.asarray(w, dtype=float).ravel()
    return _softmax(tm.delta[h + 1] + tm.gamma[h + 1] @ w)


def emission_initial_log(x1, k: int, cp: ClusterParams) -> float:
    """Log-density of the first observation under cluster k."""
    return mvn_logpdf(x1, cp.mu[k], cp.sigma[k])


def emission_transition_log(xt, xprev, k: int, cp: ClusterParams) -> float:
    """Log-density of a later observation under cluster k, given the
    previous observation: normal around lam*mu_k + (1-lam)*xprev."""
    xprev = np.asarray(xprev, dtype=float).ravel()
    mean = cp.lam * cp.mu[k] + (1.0 - cp.lam) * xprev
    return mvn_logpdf(xt, mean, cp.sigma[k])


def _emission_log_table(series: ObjectSeries, cp: ClusterParams) -> np.ndarray:
    """Log emission densities, shape (T, K): row 0 under the initial
    law, rows 1.. under the blended transition law."""
    T, K = series.T, cp.K
    if series.p != cp.p:
        raise ValueError(
            f"object {series.id!r} has p={series.p}, params have p={cp.p}")
    loge = np.empty((T, K))
    x = series.x
    for k in range(K):
        loge[0, k] = mvn_logpdf_rows(x[:1], cp.mu[k], cp.sigma[k])[0]
        if T > 1:
            means = cp.lam * cp.mu[k] + (1.0 - cp.lam) * x[:-1]
            loge[1:, k] = mvn_logpdf_rows(x[1:], means, cp.sigma[k])
    return loge


def _log_transition_table(params: ModelParams, series: ObjectSeries):
    """(log_alpha, log_beta) for one object.

    log_alpha : (K,) initial log-probabilities, using the covariates at
        the first time point when the model is regressed.
    log_beta : (T, K, K) where log_beta[t] governs the step into time t
        (t >= 1); entry [t, h, k] = log P(Z_t = k | Z_{t-1} = h). Row 0
        is unused and left at zero.
    """
    K, T = params.K, series.T
    tm = params.transitions
    with np.errstate(divide="ignore"):
        if isinstance(tm, FixedTransition):
            log_alpha = np.log(tm.alpha)
            log_beta = np.zeros((T, K, K))
            log_beta[1:] = np.log(tm.beta)[None, :, :]
            return log_alpha, log_beta
        if series.w is None:
            raise ValueError(
                f"object {series.id!r} lacks covariates required by the "
                "regressed transition model")
        if series.d != tm.d:
            raise ValueError(
                f"object {series.id!r} has d={series.d}, model has d={tm.d}")
        # logits[t, l, k] for all rows l at once: (T, K+1, K)
        logits = tm.delta[None, :, :] + np.einsum(
            "td,lkd->tlk", series.w, tm.gamma)
        logits -= logsumexp(logits, axis=2)[:, :, None]
        log_alpha = logits[0, 0, :]
        log_beta = np.zeros((T, K, K))
        log_beta[1:] = logits[1:, 1:, :]
        return log_alpha, log_beta


def _forward_from_tables(loge, log_alpha, log_beta):
    """Scaled forward recursion in the log domain.

    Returns (loglik, filt) where filt[t] is the filtering distribution
    of the cluster at time t given observations up to t.
    """
    T, K = loge.shape
    filt = np.empty((T, K))
    g = log_alpha + loge[0]
    c = logsumexp(g)
    if not np.isfinite(c):
        raise NumericalUnderflow("zero normalizer at the first time point")
    loglik = c
    g = g - c
    filt[0] = np.exp(g)
    for t in range(1, T):
        m = logsumexp(g[:, None] + log_beta[t], axis=0) + loge[t]
        c = logsumexp(m)
        if not np.isfinite(c):
            raise NumericalUnderflow(f"zero normalizer at time {t}")
        loglik += c
        g = m - c
        filt[t] = np.exp(g)
    return float(loglik), filt


def forward_filter(series: ObjectSeries, params: ModelParams):
    """Marginal log-likelihood of one object plus its filtering
    distributions.

    Returns
    -------
    loglik : float
    filt : ndarray, shape (T, K)
        Row t is P(Z_t | X_1..t); each row sums to 1.

    The recursion costs O(T K^2); the number of arithmetic terms grows
    linearly in T.
    """
    loge = _emission_log_table(series, params.clusters)
    log_alpha, log_beta = _log_transition_table(params, series)
    return _forward_from_tables(loge, log_alpha, log_beta)


def _path_log_weights(series: ObjectSeries, params: ModelParams):
    """Log-weight of every assignment path, by direct enumeration.

    Returns (paths, log_weights) with K**T entries. Guarded to at most
    10**6 paths.
    """
    K, T = params.K, series.T
    if K ** T > _MAX_PATHS:
        raise ValueError(f"instance too large to enumerate: K^T = {K}^{T}")
    loge = _emission_log_table(series, params.clusters)
    log_alpha, log_beta = _log_transition_table(params, series)
    paths = list(itertools.product(range(K), repeat=T))
    log_w = np.empty(len(paths))
    for i, z in enumerate(paths):
        lw = log_alpha[z[0]] + loge[0, z[0]]
        for t in range(1, T):
            lw += log_beta[t, z[t - 1], z[t]] + loge[t, z[t]]
        log_w[i] = lw
    return paths, log_w


def brute_force_loglik(series: ObjectSeries, params: ModelParams) -> float:
    """Marginal log-likelihood by summing all K**T assignment paths.

    Enumeration oracle for :func:`forward_filter`; test-scale only.
    """
    _, log_w = _path_log_weights(series, params)
    return float(logsumexp(log_w))


def dataset_loglik(ds: PanelDataset, params: ModelParams,
                   n_threads: int = 1) -> float:
    """Sum of per-object forward log-likelihoods (objects independent)."""
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            lls = list(pool.map(
                lambda obj: forward_filter(obj, params)[0], ds.objects))
    else:
        lls = [forward_filter(obj, params)[0] for obj in ds.objects]
    return float(sum(lls))


def permute_clusters(params: ModelParams, perm) -> ModelParams:
    """Relabel clusters: new cluster j is old cluster perm[j]."""
    perm = np.asarray(perm, dtype=int)
    cp = params.clusters
    new_cp = ClusterParams(
        mu=cp.mu[perm].copy(),
        sigma=[cp.sigma[j] for j in perm],
        lam=cp.lam,
    )
    tm = params.transitions
    if isinstance(tm, FixedTransition):
        new_tm = FixedTransition(
            alpha=tm.alpha[perm].copy(),
            beta=tm.beta[np.ix_(perm, perm)].copy(),
        )
    else:
        K = tm.K
        row_map = np.concatenate(([0], perm + 1))
        delta = tm.delta[row_map][:, perm]
        gamma = tm.gamma[row_map][:, perm, :]
        # re-pin the last column (softmax is shift-invariant per row)
        delta = delta - delta[:, K - 1][:, None]
        gamma = gamma - gamma[:, K - 1, :][:, None, :]
        delta[:, K - 1] = 0.0
        gamma[:, K - 1, :] = 0.0
        new_tm = RegressedTransition(delta=delta, gamma=gamma)
    return ModelParams(clusters=new_cp, transitions=new_tm)
