"""Tabulated relative-permeability curves."""

from __future__ import annotations

import numpy as np
import pandas as pd

from ._tables import LinearTable


class RelPermCurves:
    """Two-phase style curves on a shared saturation axis.

    ``kro`` is tabulated against oil saturation, ``krw`` against water
    saturation and ``krg`` against gas saturation.  No three-phase mixing
    rule is applied.
    """

    def __init__(self, saturation, kro, krw, krg):
        saturation = np.asarray(saturation, dtype=float)
        cols = np.vstack([np.asarray(c, dtype=float) for c in (kro, krw, krg)])
        if np.any(saturation < 0) or np.any(saturation > 1):
            raise ValueError("relative-permeability saturations must lie in [0, 1]")
        self._table = LinearTable(saturation, cols)
        if np.any(cols < 0) or np.any(cols > 1):
            raise ValueError("relative permeabilities must lie in [0, 1]")

    @property
    def saturation_nodes(self):
        return self._table.x

    @property
    def kro(self):
        return self._table.columns[0]

    @property
    def krw(self):
        return self._table.columns[1]

    @property
    def krg(self):
        return self._table.columns[2]

    def evaluate(self, s_o, s_w, s_g):
        """Return ``(kr, dkr)`` with rows ordered (oil, gas, water).

        ``dkr[k]`` is the derivative of each curve with respect to its own
        phase saturation.
        """
        v_o, d_o = self._table.evaluate(s_o)
        v_w, d_w = self._table.evaluate(s_w)
        v_g, d_g = self._table.evaluate(s_g)
        kr = np.stack([v_o[0], v_g[2], v_w[1]])
        dkr = np.stack([d_o[0], d_g[2], d_w[1]])
        return kr, dkr

    @classmethod
    def from_csv(cls, path):
        frame = pd.read_csv(path)
        frame.columns = [c.strip().lower() for c in frame.columns]
        expected = ["s", "kro", "krw", "krg"]
        if list(frame.columns) != expected:
            raise ValueError(f"{path}: relperm header must be {','.join(expected)}")
        return cls(*(frame[c].to_numpy(float) for c in expected))

    def to_csv(self, path):
        pd.DataFrame(
            {"s": self.saturation_nodes, "kro": self.kro, "krw": self.krw, "krg": self.krg}
        ).to_csv(path, index=False, float_format="%.12g")
