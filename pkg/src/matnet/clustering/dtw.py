"""Weighted dynamic time warping.

``DTW(i, j)`` is the cheapest alignment of ``x[:i]`` with ``y[:j]``::

    DTW(i, j) = min(DTW(i-1, j)   + w_h C(i, j),
                    DTW(i, j-1)   + w_v C(i, j),
                    DTW(i-1, j-1) + w_d C(i, j))

with ``DTW(0, 0) = 0`` and ``DTW(i, 0) = DTW(0, j) = inf`` otherwise, so
every path starts by paying ``w_d C(1, 1)``.
"""

from __future__ import annotations

import numpy as np

METRICS = ("sqeuclidean", "manhattan")


def _as_sequence(x, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 1-D or (length, channels)")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    return arr


def local_cost(x, y, metric="sqeuclidean"):
    """Pairwise element cost matrix ``C`` of shape (len(x), len(y))."""
    x = _as_sequence(x, "x")
    y = _as_sequence(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ValueError("sequences must have the same number of channels")
    diff = x[:, None, :] - y[None, :, :]
    if metric == "sqeuclidean":
        return np.sum(diff * diff, axis=2)
    if metric == "manhattan":
        return np.sum(np.abs(diff), axis=2)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def accumulated_cost(cost, weights=(1.0, 1.0, 1.0)):
    """Accumulated cost table of shape (N+1, M+1) including the boundary row
    and column.  Filled one anti-diagonal at a time."""
    w_h, w_v, w_d = (float(w) for w in weights)
    if min(w_h, w_v, w_d) < 0:
        raise ValueError("DTW weights must be non-negative")
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for s in range(2, n + m + 1):
        i = np.arange(max(1, s - m), min(n, s - 1) + 1)
        j = s - i
        c = cost[i - 1, j - 1]
        acc[i, j] = np.minimum(
            np.minimum(acc[i - 1, j - 1] + w_d * c, acc[i, j - 1] + w_v * c),
            acc[i - 1, j] + w_h * c,
        )
    return acc


def _backtrack(acc, cost, weights):
    w_h, w_v, w_d = (float(w) for w in weights)
    i, j = acc.shape[0] - 1, acc.shape[1] - 1
    path = [(i - 1, j - 1)]
    while (i, j) != (1, 1):
        c = cost[i - 1, j - 1]
        # order encodes the tie-break: diagonal, vertical, horizontal
        options = (
            (acc[i - 1, j - 1] + w_d * c, i - 1, j - 1),
            (acc[i, j - 1] + w_v * c, i, j - 1),
            (acc[i - 1, j] + w_h * c, i - 1, j),
        )
        best = min(range(3), key=lambda k: (options[k][0], k))
        _, i, j = options[best]
        path.append((i - 1, j - 1))
    return path[::-1]


def dtw(x, y, weights=(1.0, 1.0, 1.0), metric="sqeuclidean", return_path=True):
    """DTW cost between ``x`` and ``y`` and one optimal warping path.

    The path is a list of zero-based index pairs from ``(0, 0)`` to
    ``(N-1, M-1)``.  Among equally cheap predecessors the diagonal move is
    preferred, then the vertical one ``(i, j-1)``.
    """
    cost = local_cost(x, y, metric)
    acc = accumulated_cost(cost, weights)
    total = float(acc[-1, -1])
    if not return_path:
        return total
    return total, _backtrack(acc, cost, weights)


def dtw_normalized(x, y, weights=(1.0, 1.0, 1.0), metric="sqeuclidean"):
    """DTW cost divided by ``len(x) + len(y)``."""
    cost = local_cost(x, y, metric)
    n, m = cost.shape
    return float(accumulated_cost(cost, weights)[-1, -1]) / (n + m)


def dtw_matrix(series, weights=(1.0, 1.0, 1.0), metric="sqeuclidean", normalized=True):
    """Symmetric matrix of pairwise (normalized) DTW costs.

    Entry ``(a, b)`` is computed once as ``dtw(series[a], series[b])`` for
    ``a < b`` and mirrored, so the matrix is exactly symmetric even when
    ``w_h != w_v``.
    """
    n = len(series)
    out = np.zeros((n, n))
    fn = dtw_normalized if normalized else (lambda a, b, w, m: dtw(a, b, w, m, return_path=False))
    for a in range(n):
        for b in range(a + 1, n):
            out[a, b] = out[b, a] = fn(series[a], series[b], weights, metric)
    return out
