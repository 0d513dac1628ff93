"""Model-order selection at the knee of a cost curve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ElbowResult:
    k: int
    ks: np.ndarray
    costs: np.ndarray
    distances: np.ndarray
    degenerate: bool


def elbow_from_costs(ks, costs, rtol=1e-9):
    """Pick the ``k`` farthest from the chord joining the curve's end points.

    The argmax does not depend on how either axis is scaled.  Ties go to
    the smaller ``k``; a curve with no point off the chord (for example a
    straight line) returns ``ks[0]`` with ``degenerate=True``.
    """
    ks = np.asarray(ks, dtype=float)
    costs = np.asarray(costs, dtype=float)
    if ks.size != costs.size or ks.size == 0:
        raise ValueError("ks and costs must be non-empty and of equal length")
    if np.any(np.diff(ks) <= 0):
        raise ValueError("ks must be increasing")
    if ks.size < 3:
        return ElbowResult(int(ks[0]), ks, costs, np.zeros_like(ks), True)
    dx, dy = ks[-1] - ks[0], costs[-1] - costs[0]
    cross = np.abs(dy * (ks - ks[0]) - dx * (costs - costs[0]))
    dist = cross / np.hypot(dx, dy) if (dx or dy) else cross
    scale = np.max(np.abs(costs)) * dx
    top = dist.max()
    if top <= rtol * max(scale, 1e-300):
        return ElbowResult(int(ks[0]), ks, costs, dist, True)
    best = int(np.flatnonzero(dist >= top * (1 - rtol))[0])
    return ElbowResult(int(ks[best]), ks, costs, dist, False)


def elbow_select(X, k_range, fit):
    """Fit every ``k`` in ``k_range`` with ``fit(X, k) -> cost`` and select
    the knee of the resulting curve."""
    ks = list(k_range)
    costs = [float(fit(X, k)) for k in ks]
    return elbow_from_costs(ks, costs)
