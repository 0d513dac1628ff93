"""Piecewise-linear lookup tables with analytic slopes.

Shared by the PVT and relative-permeability tables.  Outside the tabulated
range values are clamped to the end values and the slope is zero; at a node
the slope is the mean of the two adjacent segment slopes (the clamped region
counts as a zero-slope segment).
"""

from __future__ import annotations

import numpy as np


class LinearTable:
    """Several columns tabulated against one strictly increasing abscissa.

    Parameters
    ----------
    x : array_like, shape (n,)
        Abscissa nodes, strictly increasing, ``n >= 2``.
    columns : array_like, shape (m, n)
        One row per tabulated quantity.
    """

    def __init__(self, x, columns):
        x = np.asarray(x, dtype=float)
        columns = np.atleast_2d(np.asarray(columns, dtype=float))
        if x.ndim != 1 or x.size < 2:
            raise ValueError("table needs at least two nodes")
        if not np.all(np.isfinite(x)) or np.any(np.diff(x) <= 0):
            raise ValueError("table nodes must be finite and strictly increasing")
        if columns.shape[1] != x.size:
            raise ValueError(
                f"column length {columns.shape[1]} does not match {x.size} nodes"
            )
        if not np.all(np.isfinite(columns)):
            raise ValueError("table values must be finite")
        self.x = x
        self.columns = columns
        self._seg_slope = np.diff(columns, axis=1) / np.diff(x)
        # node slopes: mean of neighbours, zero-slope segments padded at both ends
        padded = np.pad(self._seg_slope, ((0, 0), (1, 1)))
        self._node_slope = 0.5 * (padded[:, :-1] + padded[:, 1:])
        x.setflags(write=False)
        columns.setflags(write=False)

    def evaluate(self, xq):
        """Return ``(values, slopes)``, each of shape ``(m,) + np.shape(xq)``."""
        xq = np.asarray(xq, dtype=float)
        x = self.x
        n = x.size
        seg = np.clip(np.searchsorted(x, xq, side="right") - 1, 0, n - 2)
        xc = np.clip(xq, x[0], x[-1])
        slope = self._seg_slope[:, seg]
        values = self.columns[:, seg] + slope * (xc - x[seg])
        slopes = np.where((xq < x[0]) | (xq > x[-1]), 0.0, slope)

        node = np.searchsorted(x, xq, side="left")
        node_c = np.minimum(node, n - 1)
        on_node = x[node_c] == xq
        if np.any(on_node):
            slopes = np.where(on_node, self._node_slope[:, node_c], slopes)
            values = np.where(on_node, self.columns[:, node_c], values)
        return values, slopes
