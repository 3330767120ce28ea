"""Clustering-quality measures: variation of information, corrected
Rand index, and the average silhouette used to pick the cluster count.

Labelings are flat 1-based integer vectors over all (object, time)
pairs in object-major, time-minor order; only the induced partitions
matter, so any relabeling gives identical values.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import SingleClusterError
from .model import PanelDataset


def _as_labels(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("labels must be a nonempty 1-D vector")
    if not np.issubdtype(a.dtype, np.integer):
        ai = a.astype(int)
        if np.any(ai != a):
            raise ValueError("labels must be integers")
        a = ai
    if a.min() < 1:
        raise ValueError("labels must be >= 1")
    return a


def _contingency(a, b):
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ua.size, ub.size))
    np.add.at(table, (ia, ib), 1.0)
    return table


def variation_of_information(a, b) -> float:
    """Entropy-based distance between two partitions (natural logs).

    Zero iff the partitions are identical; symmetric; satisfies the
    triangle inequality.
    """
    a, b = _as_labels(a), _as_labels(b)
    if a.size != b.size:
        raise ValueError("labelings differ in length")
    n = a.size
    joint = _contingency(a, b) / n
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    # VI = sum_ij p_ij * (log p_i + log p_j - 2 log p_ij); each cell's
    # term is invariant under transposition (fp addition commutes) and
    # exactly zero on the diagonal of an identical pairing, and summing
    # in sorted order makes VI(a, b) == VI(b, a) bit for bit
    mask = joint > 0
    cells = joint[mask]
    logsum = (np.log(pa)[:, None] + np.log(pb)[None, :])[mask]
    terms = cells * (logsum - 2.0 * np.log(cells))
    return max(float(np.sum(np.sort(terms))), 0.0)


def corrected_rand(a, b) -> float:
    """Pair-counting partition agreement, chance-corrected: 1 for
    identical partitions, expectation 0 under random labelings."""
    a, b = _as_labels(a), _as_labels(b)
    if a.size != b.size:
        raise ValueError("labelings differ in length")
    table = _contingency(a, b)
    n = a.size

    def comb2(x):
        return x * (x - 1.0) / 2.0

    index = float(comb2(table).sum())
    row_sum = float(comb2(table.sum(axis=1)).sum())
    col_sum = float(comb2(table.sum(axis=0)).sum())
    total = comb2(float(n))
    expected = row_sum * col_sum / total
    max_index = 0.5 * (row_sum + col_sum)
    if max_index == expected:
        return 1.0
    return (index - expected) / (max_index - expected)


def average_silhouette(ds, labels) -> float:
    """Mean silhouette over pooled rows with Euclidean distance.

    `ds` may be a PanelDataset or an (N, p) array. Points in singleton
    clusters score 0. Raises SingleClusterError when fewer than two
    clusters are present.
    """
    X = ds.pooled_x() if isinstance(ds, PanelDataset) else np.atleast_2d(
        np.asarray(ds, dtype=float))
    labels = _as_labels(labels)
    if labels.size != X.shape[0]:
        raise ValueError("labels do not match the pooled row count")
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise SingleClusterError(
            "silhouette needs at least two clusters")
    # full pairwise distances; pooled panels are small
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    dist = np.sqrt(d2)
    n = X.shape[0]
    members = {int(c): np.flatnonzero(labels == c) for c in uniq}
    sil = np.zeros(n)
    mean_to = np.empty((n, uniq.size))
    sizes = np.empty(uniq.size)
    for j, c in enumerate(uniq):
        idx = members[int(c)]
        mean_to[:, j] = dist[:, idx].sum(axis=1)
        sizes[j] = idx.size
    for j, c in enumerate(uniq):
        idx = members[int(c)]
        if idx.size == 1:
            sil[idx] = 0.0
            continue
        a = mean_to[idx, j] / (sizes[j] - 1.0)
        others = [jj for jj in range(uniq.size) if jj != j]
        b = np.min(mean_to[np.ix_(idx, others)] / sizes[others], axis=1)
        denom = np.maximum(a, b)
        sil[idx] = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(sil.mean())


def silhouette_scan(ds: PanelDataset, k_range, config):
    """Fit each K in `k_range` and report the silhouette of its hard
    labels.

    `config` is a FitConfig template whose K field is replaced per
    entry. Entries must be >= 2. A fit whose hard labels collapse to a
    single cluster records NaN. Returns a list of (K, value) pairs;
    selection is left to the caller.
    """
    from .learn import fit  # deferred to avoid an import cycle

    results = []
    for k in k_range:
        if k < 2:
            raise SingleClusterError(
                f"silhouette is undefined for K={k}; use K >= 2")
        report = fit(ds, dataclasses.replace(config, K=int(k)))
        try:
            value = average_silhouette(ds, report.flat_labels())
        except SingleClusterError:
            value = math.nan
        results.append((int(k), value))
    return results
