"""Temporal clustering of well time series under normalized DTW."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .._validation import check_positive_int, check_rng
from .dtw import dtw_matrix


def normalize_series(series):
    """Scale every series by the largest absolute value over all of them
    (per channel), so costs are comparable across fields."""
    arrs = [np.asarray(s, dtype=float) for s in series]
    stacked = np.concatenate([a.reshape(len(a), -1) for a in arrs], axis=0)
    scale = np.max(np.abs(stacked), axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return [(a.reshape(len(a), -1) / scale).reshape(a.shape) for a in arrs]


def resample(times, values, grid):
    """Linear interpolation of one irregular series onto ``grid``."""
    return np.interp(grid, np.asarray(times, dtype=float), np.asarray(values, dtype=float))


def _medoid(dist, members):
    sub = dist[np.ix_(members, members)]
    return int(members[np.argmin(sub.sum(axis=1))])


def _kmedoids_pp(dist, k, rng):
    n = dist.shape[0]
    medoids = [int(rng.integers(n))]
    for _ in range(1, k):
        d = np.min(dist[:, medoids], axis=1) ** 2
        d[medoids] = 0.0
        total = d.sum()
        if total > 0:
            medoids.append(int(rng.choice(n, p=d / total)))
        else:
            medoids.append(next(i for i in range(n) if i not in medoids))
    return medoids


class TemporalKMeans(ClusterMixin, BaseEstimator):
    """k-means style clustering with medoid centers on a DTW distance.

    Parameters
    ----------
    n_clusters : int
    weights : (w_h, w_v, w_d)
        DTW step weights.
    metric : {"sqeuclidean", "manhattan"}
    max_iter : int
    init : sequence of int or None
        Explicit initial medoid indices; otherwise k-means++ style seeding.
    random_state : int, Generator or None
    """

    def __init__(self, n_clusters=2, weights=(1.0, 1.0, 1.0), metric="sqeuclidean", max_iter=50,
                 init=None, random_state=None):
        self.n_clusters = n_clusters
        self.weights = weights
        self.metric = metric
        self.max_iter = max_iter
        self.init = init
        self.random_state = random_state

    def fit(self, X, y=None):
        """``X`` is a list of sequences (1-D or (length, channels))."""
        if len(X) == 0:
            raise ValueError("no series to cluster")
        dist = dtw_matrix(list(X), self.weights, self.metric, normalized=True)
        return self.fit_distances(dist)

    def fit_distances(self, dist):
        """Fit on a precomputed symmetric distance matrix."""
        dist = np.asarray(dist, dtype=float)
        n = dist.shape[0]
        k = check_positive_int(self.n_clusters, "n_clusters")
        max_iter = check_positive_int(self.max_iter, "max_iter")
        if dist.shape != (n, n):
            raise ValueError("distance matrix must be square")
        if k > n:
            raise ValueError(f"n_clusters={k} exceeds the number of series ({n})")
        if self.init is not None:
            medoids = [int(i) for i in self.init]
            if len(medoids) != k or len(set(medoids)) != k or not all(0 <= i < n for i in medoids):
                raise ValueError("init must list n_clusters distinct series indices")
        else:
            medoids = _kmedoids_pp(dist, k, check_rng(self.random_state))

        history = []
        labels = None
        for it in range(1, max_iter + 1):
            labels = np.argmin(dist[:, medoids], axis=1)
            labels[medoids] = np.arange(k)
            history.append(float(dist[np.arange(n), np.asarray(medoids)[labels]].sum()))
            new = [_medoid(dist, np.flatnonzero(labels == c)) for c in range(k)]
            if new == medoids:
                break
            medoids = new
        labels = np.argmin(dist[:, medoids], axis=1)
        labels[medoids] = np.arange(k)
        cost = float(dist[np.arange(n), np.asarray(medoids)[labels]].sum())
        if cost < history[-1]:
            history.append(cost)

        self.labels_ = labels
        self.medoid_indices_ = np.array(medoids)
        self.cost_ = cost
        self.cost_history_ = history
        self.n_iter_ = it
        self.distances_ = dist
        return self


def internal_variation(dist, members):
    """Mean pairwise distance among ``members`` (0 for a single member)."""
    members = np.asarray(members)
    if members.size < 2:
        return 0.0
    sub = dist[np.ix_(members, members)]
    return float(sub[np.triu_indices(members.size, 1)].mean())


def adaptive_split(dist, labels, threshold=0.15, max_depth=4, random_state=None):
    """Recursively split clusters whose internal variation exceeds
    ``threshold`` into two, up to ``max_depth`` levels.

    Returns new labels numbered consecutively, original clusters first in
    label order; when nothing splits the labels come back unchanged.
    """
    dist = np.asarray(dist, dtype=float)
    labels = np.asarray(labels, dtype=int)
    rng = check_rng(random_state)

    def split(members, depth):
        if depth >= max_depth or members.size < 2 or internal_variation(dist, members) <= threshold:
            return [members]
        sub = TemporalKMeans(2, random_state=rng).fit_distances(dist[np.ix_(members, members)])
        groups = []
        for c in range(2):
            groups.extend(split(members[sub.labels_ == c], depth + 1))
        return groups

    out = np.empty_like(labels)
    next_label = 0
    for c in np.unique(labels):
        for group in split(np.flatnonzero(labels == c), 0):
            out[group] = next_label
            next_label += 1
    return out
