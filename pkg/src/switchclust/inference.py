"""Smoothed cluster posteriors via a backward q-recursion plus a
forward sweep, with enumeration oracles.

The backward pass builds, for each step, unnormalized conditional
weights q whose row-normalization gives P(Z_t | Z_{t-1}, full series).
A forward sweep then chains the smoothed marginals. Everything runs in
the log domain with per-step rescaling, so the cost is linear in T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    FixedTransition,
    ModelParams,
    ObjectSeries,
    _emission_log_table,
    _log_transition_table,
    _path_log_weights,
    eval_beta_row,
)
from .numkernel import logsumexp, mvn_logpdf_rows


@dataclass
class Posterior:
    """Smoothed posterior for one object.

    marginals : (T, K), row t is P(Z_t = k | full series).
    conditionals : (T-1, K, K), entry [t, h, k] is
        P(Z_{t+1} = k | Z_t = h, full series).
    """

    marginals: np.ndarray
    conditionals: np.ndarray

    @property
    def T(self) -> int:
        return self.marginals.shape[0]

    @property
    def K(self) -> int:
        return self.marginals.shape[1]


def _backward_log_q(loge, log_beta):
    """Backward recursion over the q-weights.

    Parameters
    ----------
    loge : (T, K) log emission table.
    log_beta : (T, K, K) log transition table (row 0 unused).

    Returns
    -------
    log_qsum : (T, K)
        log_qsum[t, h] = log sum_k q(Z_{t+1} = k | Z_t = h) for
        t < T-1; the last row is zero (empty continuation).
    log_q : (T-1, K, K)
        log_q[t, h, k] is the log q-weight for the step from time t
        into time t+1.
    """
    T, K = loge.shape
    log_qsum = np.zeros((T, K))
    log_q = np.empty((T - 1, K, K))
    for t in range(T - 2, -1, -1):
        log_q[t] = log_beta[t + 1] + (loge[t + 1] + log_qsum[t + 1])[None, :]
        log_qsum[t] = logsumexp(log_q[t], axis=1)
    return log_qsum, log_q


def backward_q(series: ObjectSeries, params: ModelParams):
    """Log q-weights and their per-row log-sums for one object.

    Returns (log_qsum, log_q) as described in :func:`_backward_log_q`.
    Normalizing each log_q[t, h, :] row yields the conditional
    distribution of the cluster at t+1 given cluster h at t and the
    whole series. For T = 1 the q-array is empty.
    """
    loge = _emission_log_table(series, params.clusters)
    _, log_beta = _log_transition_table(params, series)
    return _backward_log_q(loge, log_beta)


def _posterior_from_tables(loge, log_alpha, log_beta) -> Posterior:
    T, K = loge.shape
    log_qsum, log_q = _backward_log_q(loge, log_beta)
    marginals = np.empty((T, K))
    m0 = log_alpha + loge[0] + log_qsum[0]
    m0 = np.exp(m0 - logsumexp(m0))
    marginals[0] = m0 / m0.sum()
    conditionals = np.exp(log_q - log_qsum[:-1][:, :, None])
    for t in range(1, T):
        row = marginals[t - 1] @ conditionals[t - 1]
        marginals[t] = row / row.sum()
    return Posterior(marginals=marginals, conditionals=conditionals)


def posterior(series: ObjectSeries, params: ModelParams) -> Posterior:
    """Smoothed marginals and conditional transition posteriors.

    Marginals at the first time point are proportional to the initial
    probability times the initial emission times the summed q-mass of
    the second step; later marginals follow by chaining the normalized
    conditionals. Linear cost in T.
    """
    loge = _emission_log_table(series, params.clusters)
    log_alpha, log_beta = _log_transition_table(params, series)
    return _posterior_from_tables(loge, log_alpha, log_beta)


def brute_force_posterior(series: ObjectSeries,
                          params: ModelParams) -> Posterior:
    """Exact posteriors by normalizing the weights of all K**T paths.

    Enumeration oracle for :func:`posterior`; test-scale only.
    """
    K, T = params.K, series.T
    paths, log_w = _path_log_weights(series, params)
    probs = np.exp(log_w - logsumexp(log_w))
    probs = probs / probs.sum()
    marginals = np.zeros((T, K))
    joints = np.zeros((T - 1, K, K))
    for z, pr in zip(paths, probs):
        for t in range(T):
            marginals[t, z[t]] += pr
        for t in range(T - 1):
            joints[t, z[t], z[t + 1]] += pr
    conditionals = np.empty((T - 1, K, K))
    for t in range(T - 1):
        denom = joints[t].sum(axis=1)
        safe = np.where(denom > 0.0, denom, 1.0)
        conditionals[t] = joints[t] / safe[:, None]
        conditionals[t, denom == 0.0, :] = 1.0 / K
    return Posterior(marginals=marginals, conditionals=conditionals)


# ---------------------------------------------------------------------------
# batched evaluation
#
# All objects are stacked into padded (n, T_max) arrays. Steps after an
# object's last real time use an identity transition and a zero
# emission, which leave the forward pass, the q-recursion, and the
# marginal sweep unchanged, so the batch reproduces the per-object
# recursions exactly while cutting the Python overhead.


class _BatchLayout:
    """Precomputed index structure for padded batch evaluation."""

    def __init__(self, ds):
        self.n = ds.n
        self.p = ds.p
        self.d = ds.d
        self.lengths = np.array([obj.T for obj in ds.objects])
        self.T_max = int(self.lengths.max())
        self.first_x = np.vstack([obj.x[0] for obj in ds.objects])
        trans_x, trans_prev, trans_pos = [], [], []
        for i, obj in enumerate(ds.objects):
            if obj.T > 1:
                trans_x.append(obj.x[1:])
                trans_prev.append(obj.x[:-1])
                trans_pos.append(i * self.T_max + np.arange(1, obj.T))
        if trans_x:
            self.trans_x = np.vstack(trans_x)
            self.trans_prev = np.vstack(trans_prev)
            self.trans_pos = np.concatenate(trans_pos)
        else:
            self.trans_x = np.zeros((0, self.p))
            self.trans_prev = np.zeros((0, self.p))
            self.trans_pos = np.zeros(0, dtype=int)
        self.first_pos = np.arange(self.n) * self.T_max
        if self.d > 0:
            self.w_first = np.vstack([obj.w[0] for obj in ds.objects])
            self.w_trans = (np.vstack([obj.w[1:] for obj in ds.objects
                                       if obj.T > 1])
                            if self.trans_pos.size else
                            np.zeros((0, self.d)))
        else:
            self.w_first = None
            self.w_trans = None


def _batch_log_tables(layout, params):
    """Emission and transition log tables on the padded grid."""
    cp = params.clusters
    K = params.K
    n, T_max = layout.n, layout.T_max
    loge_flat = np.zeros((n * T_max, K))
    for k in range(K):
        loge_flat[layout.first_pos, k] = mvn_logpdf_rows(
            layout.first_x, cp.mu[k], cp.sigma[k])
        if layout.trans_pos.size:
            means = cp.lam * cp.mu[k] + (1.0 - cp.lam) * layout.trans_prev
            loge_flat[layout.trans_pos, k] = mvn_logpdf_rows(
                layout.trans_x, means, cp.sigma[k])
    loge = loge_flat.reshape(n, T_max, K)

    tm = params.transitions
    identity = np.full((K, K), -np.inf)
    np.fill_diagonal(identity, 0.0)
    log_beta = np.broadcast_to(
        identity, (n, T_max, K, K)).copy()
    with np.errstate(divide="ignore"):
        if isinstance(tm, FixedTransition):
            log_alpha = np.broadcast_to(np.log(tm.alpha), (n, K))
            if layout.trans_pos.size:
                log_beta.reshape(n * T_max, K, K)[layout.trans_pos] = (
                    np.log(tm.beta))
        else:
            if layout.w_first is None:
                raise ValueError("regressed model requires covariates")
            eta0 = tm.delta[0] + layout.w_first @ tm.gamma[0].T
            log_alpha = eta0 - logsumexp(eta0, axis=1)[:, None]
            if layout.trans_pos.size:
                eta = tm.delta[1:][None, :, :] + np.einsum(
                    "nd,hkd->nhk", layout.w_trans, tm.gamma[1:])
                eta -= logsumexp(eta, axis=2)[:, :, None]
                log_beta.reshape(n * T_max, K, K)[layout.trans_pos] = eta
    return loge, log_alpha, log_beta


def _estep_batched(layout, params):
    """Total log-likelihood plus per-object posteriors, padded batch."""
    loge, log_alpha, log_beta = _batch_log_tables(layout, params)
    n, T_max, K = loge.shape

    # forward
    g = log_alpha + loge[:, 0]
    c = logsumexp(g, axis=1)
    loglik = c.sum()
    g = g - c[:, None]
    for t in range(1, T_max):
        m = logsumexp(g[:, :, None] + log_beta[:, t], axis=1) + loge[:, t]
        c = logsumexp(m, axis=1)
        loglik += c.sum()
        g = m - c[:, None]

    # backward q
    log_qsum = np.zeros((n, T_max, K))
    marginals = np.empty((n, T_max, K))
    if T_max > 1:
        log_q = np.empty((n, T_max - 1, K, K))
        for t in range(T_max - 2, -1, -1):
            log_q[:, t] = log_beta[:, t + 1] + (
                loge[:, t + 1] + log_qsum[:, t + 1])[:, None, :]
            log_qsum[:, t] = logsumexp(log_q[:, t], axis=2)
        conditionals = np.exp(log_q - log_qsum[:, :T_max - 1][:, :, :, None])
    else:
        conditionals = np.zeros((n, 0, K, K))

    m0 = log_alpha + loge[:, 0] + log_qsum[:, 0]
    m0 = np.exp(m0 - logsumexp(m0, axis=1)[:, None])
    marginals[:, 0] = m0 / m0.sum(axis=1)[:, None]
    for t in range(1, T_max):
        row = np.einsum("bh,bhk->bk", marginals[:, t - 1],
                        conditionals[:, t - 1])
        marginals[:, t] = row / row.sum(axis=1)[:, None]

    posts = [
        Posterior(marginals=marginals[i, :T].copy(),
                  conditionals=conditionals[i, :T - 1].copy())
        for i, T in enumerate(layout.lengths)
    ]
    return float(loglik), posts


def transition_memorylessness_gap(prefix, params: ModelParams,
                                  w=None) -> float:
    """Max deviation between the next-step transition law conditioned on
    the observed past and the bare transition probabilities.

    Enumerates P(Z_t = k | Z_{t-1} = h, X_1..X_{t-1}) over all paths for
    the prefix of t-1 observations and compares it with beta_{hk}. For a
    well-formed model this deviation is zero: the past observations
    carry no extra information once the previous cluster is known.

    Parameters
    ----------
    prefix : ndarray, shape (t-1, p)
        Observed responses up to time t-1.
    params : ModelParams
    w : ndarray, shape (t, d), optional
        Covariate rows for times 1..t; required for regressed models.

    Returns
    -------
    float
        Maximum absolute deviation over all (h, k) pairs.
    """
    prefix = np.atleast_2d(np.asarray(prefix, dtype=float))
    t_prev = prefix.shape[0]
    K = params.K
    if K ** (t_prev + 1) > 10**6:
        raise ValueError("prefix too long to enumerate")
    if w is not None:
        w = np.atleast_2d(np.asarray(w, dtype=float))
        if w.shape[0] != t_prev + 1:
            raise ValueError("need covariate rows for times 1..t")
        series = ObjectSeries(id="prefix", x=prefix, w=w[:t_prev])
        w_t = w[t_prev]
    else:
        series = ObjectSeries(id="prefix", x=prefix)
        w_t = None
    # Enumerate full length-t paths; each weight carries the emissions of
    # the observed prefix plus all chain factors including the final step.
    paths, log_w = _path_log_weights(series, params)
    log_beta_rows = np.log(np.vstack(
        [eval_beta_row(params.transitions, h, w_t) for h in range(K)]))
    log_joint = np.full((K, K), -np.inf)
    for z, lw in zip(paths, log_w):
        h = z[t_prev - 1]
        for k in range(K):
            log_joint[h, k] = np.logaddexp(
                log_joint[h, k], lw + log_beta_rows[h, k])
    gap = 0.0
    for h in range(K):
        if not np.any(np.isfinite(log_joint[h])):
            continue
        row = np.exp(log_joint[h] - logsumexp(log_joint[h]))
        cond = row / row.sum()
        gap = max(gap, float(np.max(np.abs(
            cond - np.exp(log_beta_rows[h])))))
    return gap
