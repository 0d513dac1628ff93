"""k-prototypes clustering of mixed numeric/categorical records.

Distance between a record and a prototype is the squared Euclidean distance
on the numeric part plus ``gamma`` times the number of categorical
mismatches.  Prototypes are updated online: after every (re)allocation the
affected numeric means and categorical frequency tables are adjusted, so
the prototype is always the mean/mode of its current members.
"""

from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .._validation import check_mixed, check_positive_int, check_rng, encode_categories

log = logging.getLogger(__name__)


def kprototypes_distance(num, cat, proto_num, proto_cat, gamma):
    """``sum((num - proto_num)**2) + gamma * sum(cat != proto_cat)``."""
    num = np.asarray(num, dtype=float)
    proto_num = np.asarray(proto_num, dtype=float)
    cat = np.asarray(cat, dtype=object)
    proto_cat = np.asarray(proto_cat, dtype=object)
    if num.shape != proto_num.shape or cat.shape != proto_cat.shape:
        raise ValueError("record and prototype dimensions differ")
    return float(np.sum((num - proto_num) ** 2) + gamma * np.sum(cat != proto_cat))


class _Prototypes:
    """Running sums and category counts for k clusters."""

    def __init__(self, x_num, x_cat, n_levels, seeds):
        k = len(seeds)
        self.x_num = x_num
        self.x_cat = x_cat
        self.sums = np.zeros((k, x_num.shape[1]))
        self.counts = np.zeros(k, dtype=int)
        self.freq = [np.zeros((k, n), dtype=int) for n in n_levels]
        self.num = x_num[seeds].copy()
        self.cat = x_cat[seeds].copy()

    def add(self, row, c):
        self.counts[c] += 1
        self.sums[c] += self.x_num[row]
        self.num[c] = self.sums[c] / self.counts[c]
        for t, f in enumerate(self.freq):
            f[c, self.x_cat[row, t]] += 1
            self._mode(c, t)

    def remove(self, row, c):
        self.counts[c] -= 1
        self.sums[c] -= self.x_num[row]
        if self.counts[c] > 0:
            self.num[c] = self.sums[c] / self.counts[c]
        for t, f in enumerate(self.freq):
            f[c, self.x_cat[row, t]] -= 1
            if self.counts[c] > 0:
                self._mode(c, t)

    def _mode(self, c, t):
        f = self.freq[t][c]
        current = self.cat[c, t]
        # keep the current mode on ties; otherwise the lowest code wins
        if f[current] < f.max():
            self.cat[c, t] = int(np.argmax(f))

    def reset(self, c, row):
        self.sums[c] = 0.0
        self.counts[c] = 0
        for f in self.freq:
            f[c] = 0
        self.num[c] = self.x_num[row]
        self.cat[c] = self.x_cat[row]

    def refresh_means(self, labels):
        # recompute from members to stop running sums drifting
        for c in range(len(self.counts)):
            members = labels == c
            if members.any():
                self.sums[c] = self.x_num[members].sum(axis=0)
                self.num[c] = self.sums[c] / self.counts[c]

    def distances(self, row, gamma):
        d_num = np.sum((self.num - self.x_num[row]) ** 2, axis=1)
        d_cat = np.sum(self.cat != self.x_cat[row], axis=1)
        return d_num + gamma * d_cat


def _total_cost(x_num, x_cat, labels, proto_num, proto_cat, gamma):
    d_num = np.sum((x_num - proto_num[labels]) ** 2)
    d_cat = np.sum(x_cat != proto_cat[labels])
    return float(d_num + gamma * d_cat)


def _seed(x_num, x_cat, k, gamma, rng):
    """k-means++ style seeding on the mixed distance."""
    n = x_num.shape[0]
    first = int(rng.integers(n))
    seeds = [first]
    d = np.full(n, np.inf)
    for _ in range(1, k):
        last = seeds[-1]
        d_new = np.sum((x_num - x_num[last]) ** 2, axis=1) + gamma * np.sum(x_cat != x_cat[last], axis=1)
        d = np.minimum(d, d_new)
        total = d.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d / total))
        else:
            # all remaining points coincide with a seed: take the lowest unused index
            nxt = next(i for i in range(n) if i not in seeds)
        seeds.append(nxt)
    return seeds


def _fit_once(x_num, x_cat, n_levels, k, gamma, max_sweeps, rng):
    n = x_num.shape[0]
    seeds = _seed(x_num, x_cat, k, gamma, rng)
    protos = _Prototypes(x_num, x_cat, n_levels, seeds)
    labels = np.empty(n, dtype=int)
    # step 2: allocate every record, updating the winner immediately
    for row in range(n):
        c = int(np.argmin(protos.distances(row, gamma)))
        labels[row] = c
        protos.add(row, c)
    history = [_total_cost(x_num, x_cat, labels, protos.num, protos.cat, gamma)]
    reseeds = []
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        moved = 0
        # step 3: retest each record and move it if another prototype is nearer
        for row in range(n):
            old = labels[row]
            d = protos.distances(row, gamma)
            new = int(np.argmin(d))
            if new != old and d[new] < d[old]:
                protos.remove(row, old)
                protos.add(row, new)
                labels[row] = new
                moved += 1
        for c in np.flatnonzero(protos.counts == 0):
            own = np.sum((x_num - protos.num[labels]) ** 2, axis=1) + gamma * np.sum(
                x_cat != protos.cat[labels], axis=1)
            donors = protos.counts[labels] > 1
            if not donors.any():
                break
            row = int(np.argmax(np.where(donors, own, -np.inf)))
            protos.remove(row, labels[row])
            protos.reset(c, row)
            protos.add(row, c)
            labels[row] = c
            reseeds.append((sweeps, int(c), row))
            log.info("sweep %d: empty cluster %d re-seeded from record %d", sweeps, c, row)
            moved += 1
        protos.refresh_means(labels)
        history.append(_total_cost(x_num, x_cat, labels, protos.num, protos.cat, gamma))
        # step 4: stop after a full cycle without changes
        if moved == 0:
            break
    return labels, protos.num, protos.cat, history, sweeps, reseeds


class KPrototypes(ClusterMixin, BaseEstimator):
    """Mixed-type clustering with online prototype updates.

    Parameters
    ----------
    n_clusters : int
    gamma : float or None
        Weight of categorical mismatches.  ``None`` uses half the mean
        standard deviation of the numeric columns (1.0 without numeric
        columns).
    categorical : sequence of int
        Column positions holding categorical values.
    max_sweeps : int
        Cap on reallocation sweeps per run.
    n_init : int
        Independent seedings; the lowest final cost is kept.
    random_state : int, Generator or None
    """

    def __init__(self, n_clusters=2, gamma=None, categorical=(), max_sweeps=100, n_init=5,
                 random_state=None):
        self.n_clusters = n_clusters
        self.gamma = gamma
        self.categorical = categorical
        self.max_sweeps = max_sweeps
        self.n_init = n_init
        self.random_state = random_state

    def fit(self, X, y=None):
        k = check_positive_int(self.n_clusters, "n_clusters")
        max_sweeps = check_positive_int(self.max_sweeps, "max_sweeps")
        n_init = check_positive_int(self.n_init, "n_init")
        x_num, x_cat_raw, num_cols, cat_cols = check_mixed(X, self.categorical)
        n = x_num.shape[0]
        if k > n:
            raise ValueError(f"n_clusters={k} exceeds the number of records ({n})")
        x_cat, vocabs = encode_categories(x_cat_raw)
        if self.gamma is None:
            gamma = 0.5 * float(np.mean(np.std(x_num, axis=0))) if x_num.shape[1] else 1.0
        else:
            gamma = float(self.gamma)
            if gamma < 0:
                raise ValueError("gamma must be non-negative")
        rng = check_rng(self.random_state)
        n_levels = [len(v) for v in vocabs]

        best = None
        for _ in range(n_init):
            run = _fit_once(x_num, x_cat, n_levels, k, gamma, max_sweeps, rng)
            if best is None or run[3][-1] < best[3][-1]:
                best = run
        labels, proto_num, proto_cat, history, sweeps, reseeds = best

        self.labels_ = labels
        self.gamma_ = gamma
        self.cluster_centroids_ = proto_num
        self._proto_codes = proto_cat
        self.cluster_modes_ = np.array(
            [[vocabs[t][code] for t, code in enumerate(row)] for row in proto_cat], dtype=object
        ).reshape(k, len(vocabs))
        self.cost_ = history[-1]
        self.cost_history_ = history
        self.n_iter_ = sweeps
        self.reseeds_ = reseeds
        self._vocabs = vocabs
        self._num_cols = num_cols
        self._cat_cols = cat_cols
        return self

    def predict(self, X):
        x_num, x_cat_raw, _, _ = check_mixed(X, self.categorical)
        x_cat, _ = encode_categories(x_cat_raw, self._vocabs)
        d = np.sum((x_num[:, None, :] - self.cluster_centroids_[None]) ** 2, axis=2)
        d = d + self.gamma_ * np.sum(x_cat[:, None, :] != self._proto_codes[None], axis=2)
        return np.argmin(d, axis=1)

    def cost(self, X, labels):
        """Total distance of records ``X`` to the prototypes of ``labels``."""
        x_num, x_cat_raw, _, _ = check_mixed(X, self.categorical)
        x_cat, _ = encode_categories(x_cat_raw, self._vocabs)
        labels = np.asarray(labels, dtype=int)
        return _total_cost(x_num, x_cat, labels, self.cluster_centroids_, self._proto_codes, self.gamma_)


def mixed_cost(X, labels, categorical=(), gamma=1.0):
    """Cost of a fixed assignment with prototypes set to member means/modes.

    Modes are taken per column by highest count; ties do not change the
    cost.  Used as an exhaustive-search oracle and by the elbow curve.
    """
    x_num, x_cat_raw, _, _ = check_mixed(X, categorical)
    x_cat, _ = encode_categories(x_cat_raw)
    labels = np.asarray(labels, dtype=int)
    total = 0.0
    for c in np.unique(labels):
        members = labels == c
        xn = x_num[members]
        total += float(np.sum((xn - xn.mean(axis=0)) ** 2))
        for t in range(x_cat.shape[1]):
            counts = np.bincount(x_cat[members, t])
            total += gamma * float(members.sum() - counts.max())
    return total
