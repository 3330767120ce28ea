"""Synthetic data generators with ground-truth labels.

Two regimes are provided. In the plain regime the initial probabilities
are Dirichlet draws and each transition row favors staying put, with
jump probabilities decaying in the distance between cluster means. In
the covariate regime the probabilities are logistic in a scalar
positive covariate that tilts membership toward cluster 1: the tilt is
zero when the covariate sits at its mean of 5, positive above, negative
below, with the same inherent self-stay preference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    ClusterParams,
    FixedTransition,
    ModelParams,
    ObjectSeries,
    PanelDataset,
    RegressedTransition,
    eval_alpha,
    eval_beta_row,
)
from .numkernel import (
    RngStream,
    SpdMatrix,
    sample_beta,
    sample_chisq,
    sample_dirichlet,
    sample_inverse_wishart,
    sample_normal,
    sample_uniform_int,
)


@dataclass
class SimConfig:
    """Size knobs plus the generator hyperparameters (defaults fixed)."""

    n: int = 100
    T_max: int = 10
    K: int = 5
    p: int = 5
    regressed: bool = False
    seed: int = 0
    beta_a: float = 10.0
    beta_b: float = 10.0
    dirichlet_conc: float = 10.0
    mu_var: float = 20.0
    iw_dof_extra: float = 4.0
    iw_scale_diag: float = 3.0
    self_weight: float = 15.0
    covariate_df: float = 5.0
    walk_sd: float = 0.5
    gamma_unit: float = field(default_factory=lambda: math.log(1.5))
    delta_unit: float = field(default_factory=lambda: -5.0 * math.log(1.5))
    self_logit: float = field(default_factory=lambda: math.log(15.0))

    def __post_init__(self):
        if self.n < 1 or self.T_max < 1 or self.K < 1 or self.p < 1:
            raise ValueError("n, T_max, K, p must all be positive")
        for name in ("beta_a", "beta_b", "dirichlet_conc", "mu_var",
                     "iw_scale_diag", "self_weight", "covariate_df",
                     "walk_sd"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SimTruth:
    """True parameters and 1-based true labels for a simulated panel."""

    params: ModelParams
    z: list[np.ndarray]

    def flat_labels(self) -> np.ndarray:
        return np.concatenate(self.z)


def build_beta_row(h: int, mus, self_weight: float) -> np.ndarray:
    """One transition row: off-diagonal mass proportional to inverse
    distance between cluster means, self mass `self_weight` times the
    largest off-diagonal weight, then normalized."""
    mus = np.atleast_2d(np.asarray(mus, dtype=float))
    K = mus.shape[0]
    if K == 1:
        return np.array([1.0])
    dists = np.linalg.norm(mus - mus[h], axis=1)
    others = [k for k in range(K) if k != h]
    if np.any(dists[others] == 0.0):
        raise ValueError(f"cluster means coincide with cluster {h}")
    row = np.zeros(K)
    row[others] = 1.0 / dists[others]
    row[h] = self_weight * row[others].max()
    return row / row.sum()


def build_regressed_coeffs(K: int, gamma_unit: float, delta_unit: float,
                           self_logit: float):
    """Logistic coefficient arrays for the covariate regime (d = 1).

    Cluster 1 gets slope `gamma_unit` and intercept `delta_unit` in
    every row; `self_logit` is added to each diagonal intercept of the
    transition rows except the last, and subtracted from the last row's
    intercepts for target clusters below K-1.
    """
    delta = np.zeros((K + 1, K))
    gamma = np.zeros((K + 1, K, 1))
    delta[:, 0] += delta_unit
    gamma[:, 0, 0] = gamma_unit
    for h in range(1, K):
        delta[h, h - 1] += self_logit
    if K >= 3:
        delta[K, : K - 2] -= self_logit
    if K >= 1:
        delta[:, K - 1] = 0.0
        gamma[:, K - 1, :] = 0.0
    return delta, gamma


def _draw_shared(cfg: SimConfig, rng: RngStream):
    lam = sample_beta(rng, cfg.beta_a, cfg.beta_b)
    mus = np.vstack([
        sample_normal(rng, np.zeros(cfg.p), cfg.mu_var * np.eye(cfg.p))
        for _ in range(cfg.K)
    ])
    iw_df = cfg.p + cfg.iw_dof_extra
    sigmas = [
        SpdMatrix(sample_inverse_wishart(
            rng, iw_df, cfg.iw_scale_diag * np.eye(cfg.p)))
        for _ in range(cfg.K)
    ]
    return ClusterParams(mu=mus, sigma=sigmas, lam=lam)


def _categorical(rng: RngStream, probs) -> int:
    u = rng.gen.random()
    return int(min(np.searchsorted(np.cumsum(probs), u), len(probs) - 1))


def _generate_objects(cfg: SimConfig, params: ModelParams, streams):
    cp = params.clusters
    objects = []
    labels = []
    for i, st in enumerate(streams):
        T = sample_uniform_int(st, 1, cfg.T_max)
        if cfg.regressed:
            w = np.empty((T, 1))
            w[0, 0] = sample_chisq(st, cfg.covariate_df)
            for t in range(1, T):
                w[t, 0] = w[t - 1, 0] + cfg.walk_sd * st.gen.standard_normal()
        else:
            w = None
        z = np.empty(T, dtype=int)
        x = np.empty((T, cfg.p))
        z[0] = _categorical(
            st, eval_alpha(params.transitions, w[0] if w is not None else None))
        x[0] = sample_normal(st, cp.mu[z[0]], cp.sigma[z[0]])
        for t in range(1, T):
            row = eval_beta_row(params.transitions, z[t - 1],
                                w[t] if w is not None else None)
            z[t] = _categorical(st, row)
            mean = cp.lam * cp.mu[z[t]] + (1.0 - cp.lam) * x[t - 1]
            x[t] = sample_normal(st, mean, cp.sigma[z[t]])
        objects.append(ObjectSeries(id=f"obj{i + 1:04d}", x=x, w=w))
        labels.append(z + 1)
    return objects, labels


def simulate_nonregressed(cfg: SimConfig):
    """Generate a panel under the plain (covariate-free) regime.

    Returns (PanelDataset, SimTruth); fixed seed gives fixed output.
    """
    if cfg.regressed:
        raise ValueError("config has regressed=True")
    root = RngStream(cfg.seed)
    param_rng, *obj_rngs = root.split(cfg.n + 1)
    cp = _draw_shared(cfg, param_rng)
    alpha = sample_dirichlet(param_rng, np.full(cfg.K, cfg.dirichlet_conc))
    beta = np.vstack([
        build_beta_row(h, cp.mu, cfg.self_weight) for h in range(cfg.K)
    ])
    params = ModelParams(clusters=cp,
                         transitions=FixedTransition(alpha=alpha, beta=beta))
    objects, labels = _generate_objects(cfg, params, obj_rngs)
    return PanelDataset(objects), SimTruth(params=params, z=labels)


def simulate_regressed(cfg: SimConfig):
    """Generate a panel under the covariate regime (d = 1).

    Returns (PanelDataset, SimTruth); fixed seed gives fixed output.
    """
    if not cfg.regressed:
        raise ValueError("config has regressed=False")
    root = RngStream(cfg.seed)
    param_rng, *obj_rngs = root.split(cfg.n + 1)
    cp = _draw_shared(cfg, param_rng)
    delta, gamma = build_regressed_coeffs(
        cfg.K, cfg.gamma_unit, cfg.delta_unit, cfg.self_logit)
    params = ModelParams(
        clusters=cp,
        transitions=RegressedTransition(delta=delta, gamma=gamma))
    objects, labels = _generate_objects(cfg, params, obj_rngs)
    return PanelDataset(objects), SimTruth(params=params, z=labels)


def simulate(cfg: SimConfig):
    """Dispatch on ``cfg.regressed``."""
    return simulate_regressed(cfg) if cfg.regressed else simulate_nonregressed(cfg)
