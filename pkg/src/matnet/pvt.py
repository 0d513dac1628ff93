"""Tabulated black-oil PVT properties and their pressure derivatives."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from ._tables import LinearTable

PROPERTIES = ("bo", "bg", "bw", "rs", "rv", "muo", "mug", "muw", "rhoo", "rhog", "rhow")
_POSITIVE = ("bo", "bg", "bw", "muo", "mug", "muw", "rhoo", "rhog", "rhow")
_INDEX = {name: k for k, name in enumerate(PROPERTIES)}


class SingularPvtError(ValueError):
    """Raised when ``1 - Rs*Rv`` is not positive."""


class PvtProps:
    """Property values and pressure derivatives at one or more pressures.

    Values are exposed as attributes (``props.bo``) and derivatives with a
    ``d`` prefix (``props.dbo``).
    """

    __slots__ = ("_values", "_slopes")

    def __init__(self, values, slopes):
        self._values = values
        self._slopes = slopes

    def __getattr__(self, name):
        if name.startswith("d") and name[1:] in _INDEX:
            return self._slopes[_INDEX[name[1:]]]
        if name in _INDEX:
            return self._values[_INDEX[name]]
        raise AttributeError(name)


class PvtTable:
    """Pressure-indexed fluid properties, linearly interpolated.

    Units follow field conventions: pressure in psia, ``bo``/``bw`` in RB/STB,
    ``bg`` in RB/scf, ``rs`` in scf/STB, ``rv`` in STB/scf, viscosities in cP
    and densities in lbm/ft3.  Pressures outside the table are clamped to the
    end values with zero derivative.
    """

    def __init__(self, pressure, **props):
        missing = [name for name in PROPERTIES if name not in props]
        if missing:
            raise ValueError(f"missing PVT columns: {', '.join(missing)}")
        extra = set(props) - set(PROPERTIES)
        if extra:
            raise ValueError(f"unknown PVT columns: {', '.join(sorted(extra))}")
        pressure = np.asarray(pressure, dtype=float)
        cols = np.vstack([np.asarray(props[name], dtype=float) for name in PROPERTIES])
        self._table = LinearTable(pressure, cols)

        for name in _POSITIVE:
            if np.any(cols[_INDEX[name]] <= 0):
                raise ValueError(f"PVT column {name!r} must be strictly positive")
        for name in ("rs", "rv"):
            if np.any(cols[_INDEX[name]] < 0):
                raise ValueError(f"PVT column {name!r} must be non-negative")
        denom = 1.0 - cols[_INDEX["rs"]] * cols[_INDEX["rv"]]
        if np.any(denom <= 0):
            raise SingularPvtError("1 - Rs*Rv must be positive at every node")

    @property
    def pressure_nodes(self):
        return self._table.x

    def column(self, name):
        return self._table.columns[_index(name)]

    def __getattr__(self, name):
        if name in _INDEX:
            return self._table.columns[_INDEX[name]]
        raise AttributeError(name)

    def eval(self, prop, p):
        """Interpolated value of ``prop`` at pressure ``p``."""
        values, _ = self._table.evaluate(p)
        return values[_index(prop)]

    def eval_dp(self, prop, p):
        """Pressure derivative of ``prop`` at ``p`` (zero outside the table)."""
        _, slopes = self._table.evaluate(p)
        return slopes[_index(prop)]

    def at(self, p):
        """Evaluate every property and derivative at ``p`` in one pass."""
        values, slopes = self._table.evaluate(p)
        return PvtProps(values, slopes)

    @classmethod
    def from_csv(cls, path):
        frame = pd.read_csv(path)
        frame.columns = [c.strip().lower() for c in frame.columns]
        expected = ["p", *PROPERTIES]
        if list(frame.columns) != expected:
            raise ValueError(
                f"{path}: PVT header must be {','.join(expected)}, got {','.join(frame.columns)}"
            )
        if frame.empty:
            raise ValueError(f"{path}: PVT table has no rows")
        return cls(frame["p"].to_numpy(float), **{n: frame[n].to_numpy(float) for n in PROPERTIES})

    def to_csv(self, path):
        frame = pd.DataFrame({"p": self.pressure_nodes})
        for name in PROPERTIES:
            frame[name] = self.column(name)
        frame.to_csv(Path(path), index=False, float_format="%.12g")


def _index(prop):
    try:
        return _INDEX[prop]
    except KeyError:
        raise KeyError(f"unknown PVT property {prop!r}; expected one of {PROPERTIES}") from None
