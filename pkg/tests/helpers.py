"""Shared fixtures and random-instance builders for the test suite."""

import numpy as np

from switchclust import (
    ClusterParams,
    FixedTransition,
    ModelParams,
    ObjectSeries,
    PanelDataset,
    RegressedTransition,
    SpdMatrix,
)


def random_spd(rng, p, scale=1.0):
    a = rng.normal(size=(p, p))
    return scale * (a @ a.T + 0.5 * np.eye(p))


def random_cluster_params(rng, K, p, spread=2.0):
    mu = rng.normal(0.0, spread, size=(K, p))
    sigma = [SpdMatrix(random_spd(rng, p)) for _ in range(K)]
    return ClusterParams(mu=mu, sigma=sigma, lam=float(rng.uniform(0.2, 0.8)))


def random_fixed_transition(rng, K):
    return FixedTransition(
        alpha=rng.dirichlet(np.ones(K)),
        beta=rng.dirichlet(np.ones(K), size=K),
    )


def random_regressed_transition(rng, K, d):
    delta = rng.normal(size=(K + 1, K))
    gamma = rng.normal(size=(K + 1, K, d))
    delta[:, K - 1] = 0.0
    gamma[:, K - 1, :] = 0.0
    return RegressedTransition(delta=delta, gamma=gamma)


def random_params(rng, K, p, d=0, regressed=False):
    cp = random_cluster_params(rng, K, p)
    tm = (random_regressed_transition(rng, K, d) if regressed
          else random_fixed_transition(rng, K))
    return ModelParams(clusters=cp, transitions=tm)


def random_series(rng, T, p, d=0, ident="obj"):
    x = rng.normal(0.0, 2.0, size=(T, p))
    w = rng.normal(0.0, 1.0, size=(T, d)) if d > 0 else None
    return ObjectSeries(id=ident, x=x, w=w)


def random_instance(rng, K=None, T=None, p=None, regressed=None):
    """A random (series, params) pair small enough to enumerate."""
    K = K if K is not None else int(rng.integers(1, 4))
    T = T if T is not None else int(rng.integers(1, 7))
    p = p if p is not None else int(rng.integers(1, 3))
    regressed = (bool(rng.integers(0, 2)) if regressed is None else regressed)
    d = int(rng.integers(1, 3)) if regressed else 0
    params = random_params(rng, K, p, d, regressed)
    series = random_series(rng, T, p, d)
    return series, params


def random_dataset(rng, n, T_max, p, d=0):
    objects = [
        random_series(rng, int(rng.integers(1, T_max + 1)), p, d,
                      ident=f"o{i}")
        for i in range(n)
    ]
    return PanelDataset(objects)


def central_diff_grad(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2.0 * h)
    return g
