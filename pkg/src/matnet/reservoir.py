"""Compartment network: blocks, connections, schedules and phase bookkeeping.

Phase arrays are ordered (oil, gas, water) throughout the package.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .aquifer import AquiferParams
from .pvt import PvtProps, PvtTable, SingularPvtError
from .relperm import RelPermCurves

PHASES = ("o", "g", "w")


class DegenerateBlockError(ValueError):
    """A block has no fluid volume or no pressure sensitivity."""


@dataclass
class Block:
    """One compartment treated as a single pressure node.

    Volumes: ``n_foi`` in STB, ``g_fgi`` in scf; compressibilities in 1/psi;
    ``p_init`` in psia and datum depth ``z`` in ft.
    """

    id: int
    n_foi: float
    g_fgi: float
    s_wi: float
    c_f: float
    c_w: float
    p_init: float
    z: float
    pvt: PvtTable
    relperm: RelPermCurves
    aquifer: AquiferParams | None = None

    def __post_init__(self):
        if self.n_foi < 0 or self.g_fgi < 0:
            raise ValueError(f"block {self.id}: initial volumes must be non-negative")
        if self.n_foi == 0 and self.g_fgi == 0:
            raise DegenerateBlockError(f"block {self.id}: no hydrocarbons in place")
        if not 0 <= self.s_wi < 1:
            raise ValueError(f"block {self.id}: s_wi must be in [0, 1)")
        if self.c_f < 0 or self.c_w < 0:
            raise ValueError(f"block {self.id}: compressibilities must be non-negative")
        if not self.p_init > 0:
            raise ValueError(f"block {self.id}: p_init must be positive")
        if self.aquifer is not None and self.aquifer.p_init != self.p_init:
            raise ValueError(f"block {self.id}: aquifer p_init must equal block p_init")

    @property
    def initial_props(self):
        return self.pvt.at(self.p_init)

    @property
    def pore_volume(self):
        """Initial pore volume ``(N_foi B_oi + G_fgi B_gi) / (1 - S_wi)`` in RB."""
        ini = self.initial_props
        return float((self.n_foi * ini.bo + self.g_fgi * ini.bg) / (1.0 - self.s_wi))

    @property
    def ooip(self):
        """Total oil component in place, ``N = N_foi + G_fgi R_vi`` (STB)."""
        return float(self.n_foi + self.g_fgi * self.initial_props.rv)

    @property
    def ogip(self):
        """Total gas component in place, ``G = G_fgi + N_foi R_si`` (scf)."""
        return float(self.g_fgi + self.n_foi * self.initial_props.rs)


class ReservoirNetwork:
    """Blocks plus a symmetric transmissibility matrix (mD ft).

    ``transmissibility`` is either an ``(N, N)`` numpy array or an iterable
    of ``(i, j, t_ij)`` triples over block indices.
    """

    def __init__(self, blocks, transmissibility, t_max=None):
        self.blocks = list(blocks)
        n = len(self.blocks)
        if n == 0:
            raise ValueError("network needs at least one block")
        ids = [b.id for b in self.blocks]
        if len(set(ids)) != n:
            raise ValueError("block ids must be unique")
        if isinstance(transmissibility, np.ndarray):
            trans = np.array(transmissibility, dtype=float)
        else:
            trans = np.zeros((n, n))
            for i, j, t in transmissibility:
                trans[i, j] = trans[j, i] = float(t)
        if trans.shape != (n, n):
            raise ValueError("transmissibility must be N x N")
        if np.any(np.diag(trans) != 0):
            raise ValueError("transmissibility diagonal must be zero (no self-loops)")
        if not np.array_equal(trans, trans.T):
            raise ValueError("transmissibility must be symmetric")
        if np.any(trans < 0) or not np.all(np.isfinite(trans)):
            raise ValueError("transmissibility must be finite and non-negative")
        if t_max is None:
            t_max = float(trans.max()) if trans.size else 0.0
        if np.any(trans > t_max):
            raise ValueError("transmissibility exceeds t_max")
        self.transmissibility = trans
        self.t_max = float(t_max)
        for block in self.blocks:
            _check_compressible(block)

    def __len__(self):
        return len(self.blocks)

    @property
    def ids(self):
        return [b.id for b in self.blocks]

    def index_of(self, block_id):
        return self.ids.index(block_id)

    def connections(self):
        """Connected pairs ``(i, j, t_ij)`` with ``i < j`` (block indices)."""
        i, j = np.nonzero(np.triu(self.transmissibility, 1))
        return [(int(a), int(b), float(self.transmissibility[a, b])) for a, b in zip(i, j)]

    def transmissibility_between(self, i, j):
        return float(self.transmissibility[i, j])

    def with_blocks(self, blocks):
        return ReservoirNetwork(blocks, self.transmissibility, self.t_max)

    def with_transmissibility(self, transmissibility, t_max=None):
        return ReservoirNetwork(self.blocks, transmissibility, self.t_max if t_max is None else t_max)

    def tanks(self):
        return TankArrays(self.blocks)


def _check_compressible(block):
    """Reject blocks whose local balance has no pressure dependence."""
    if block.aquifer is not None and block.aquifer.j > 0:
        return
    if block.c_f + block.c_w * block.s_wi > 0:
        return
    pvt = block.pvt
    varying = any(np.ptp(pvt.column(name)) > 0 for name in ("bo", "bg", "bw", "rs", "rv"))
    if not varying:
        raise DegenerateBlockError(
            f"block {block.id}: incompressible rock, water and fluids give a singular Jacobian"
        )


@dataclass
class HistorySchedule:
    """Cumulative volumes per block, arrays of shape ``(n_times, n_blocks)``.

    ``np``/``wp``/``winj`` in STB, ``gp``/``ginj`` in scf; ``pobs`` holds
    observed average pressures (NaN where missing) or is ``None``.
    """

    times: np.ndarray
    np: np.ndarray
    gp: np.ndarray
    wp: np.ndarray
    ginj: np.ndarray
    winj: np.ndarray
    pobs: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        k = self.times.size
        if k == 0:
            raise ValueError("schedule has no times")
        if self.times[0] < 0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("schedule times must be non-negative and increasing")
        for name in ("np", "gp", "wp", "ginj", "winj"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if arr.shape[0] != k:
                raise ValueError(f"schedule column {name!r} length does not match times")
            if np.any(np.diff(arr, axis=0) < 0):
                raise ValueError(f"cumulative column {name!r} must be non-decreasing")
            if np.any(arr < 0):
                raise ValueError(f"cumulative column {name!r} must be non-negative")
            setattr(self, name, arr)
        if self.pobs is not None:
            self.pobs = np.atleast_2d(np.asarray(self.pobs, dtype=float))

    @property
    def n_blocks(self):
        return self.np.shape[1]

    def truncate(self, n_times):
        pobs = None if self.pobs is None else self.pobs[:n_times]
        return HistorySchedule(
            self.times[:n_times], self.np[:n_times], self.gp[:n_times], self.wp[:n_times],
            self.ginj[:n_times], self.winj[:n_times], pobs,
        )

    @classmethod
    def empty(cls, times, n_blocks):
        z = np.zeros((len(times), n_blocks))
        return cls(times, z, z.copy(), z.copy(), z.copy(), z.copy())


@dataclass
class ForecastSchedule:
    """Operating constraints per block, arrays of shape ``(n_times, n_blocks)``.

    ``pwf`` in psia, ``qlmax`` in STB/day per producer, ``nproducers`` a
    count; ``ginj``/``winj`` are cumulative injected volumes.
    """

    times: np.ndarray
    pwf: np.ndarray
    qlmax: np.ndarray
    nproducers: np.ndarray
    ginj: np.ndarray
    winj: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        k = self.times.size
        if k == 0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("forecast times must be increasing")
        for name in ("pwf", "qlmax", "nproducers", "ginj", "winj"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if arr.shape[0] != k:
                raise ValueError(f"forecast column {name!r} length does not match times")
            setattr(self, name, arr)
        if np.any(self.pwf < 0):
            raise ValueError("pwf must be non-negative")
        if np.any(self.nproducers < 0) or np.any(self.nproducers != np.round(self.nproducers)):
            raise ValueError("nproducers must be a non-negative integer")
        if np.any((self.nproducers > 0) & ~(self.qlmax > 0)):
            raise ValueError("qlmax must be positive where producers are active")
        for name in ("ginj", "winj"):
            if np.any(np.diff(getattr(self, name), axis=0) < 0):
                raise ValueError(f"cumulative column {name!r} must be non-decreasing")

    def slice(self, start, stop=None):
        sl = slice(start, stop)
        return ForecastSchedule(
            self.times[sl], self.pwf[sl], self.qlmax[sl], self.nproducers[sl],
            self.ginj[sl], self.winj[sl],
        )


# --------------------------------------------------------------------------
# single-block bookkeeping


def free_phase_components(block, p, n_p=0.0, g_p=0.0):
    """Gas component in the gas phase and oil component in the oil phase.

    Solves the two remaining-in-place balances simultaneously.  Returns
    ``(g_fg, n_fo)``; negative values are possible for Newton iterates.
    """
    props = block.pvt.at(p)
    ini = block.initial_props
    denom = 1.0 - props.rs * props.rv
    if np.any(denom <= 0):
        raise SingularPvtError(f"1 - Rs*Rv = {denom} at p = {p}")
    rem_g = block.g_fgi + block.n_foi * ini.rs - g_p
    rem_o = block.n_foi + block.g_fgi * ini.rv - n_p
    g_fg = (rem_g - rem_o * props.rs) / denom
    n_fo = (rem_o - rem_g * props.rv) / denom
    return g_fg, n_fo


def phase_volumes(block, p, n_p=0.0, g_p=0.0, w_p=0.0, g_inj=0.0, w_inj=0.0, w_e=0.0,
                  influx=(0.0, 0.0, 0.0)):
    """Current oil, gas and water volumes at reservoir conditions (RB).

    ``influx`` adds the cumulative net volume of each phase received from
    connected blocks.
    """
    props = block.pvt.at(p)
    ini = block.initial_props
    g_fg, n_fo = free_phase_components(block, p, n_p, g_p)
    dp = block.p_init - p
    v_o = props.bo * (block.n_foi + block.g_fgi * ini.rv - g_fg * props.rv - n_p)
    v_g = props.bg * (block.g_fgi + block.n_foi * ini.rs - n_fo * props.rs - g_p) + g_inj * props.bg
    v_w = (w_e - props.bw * w_p + props.bw * w_inj
           + block.pore_volume * block.s_wi * (1.0 + block.c_w * dp))
    return v_o + influx[0], v_g + influx[1], v_w + influx[2]


def saturations(v_o, v_g, v_w, return_flag=False):
    """Normalize phase volumes to saturations ``(s_o, s_g, s_w)``.

    Negative volumes are clamped to zero (with a warning).
    """
    vols = np.array([v_o, v_g, v_w], dtype=float)
    clamped = bool(np.any(vols < 0))
    if clamped:
        warnings.warn("negative phase volume clamped to zero", RuntimeWarning, stacklevel=2)
        vols = np.maximum(vols, 0.0)
    total = vols.sum(axis=0)
    if np.any(total <= 0):
        raise DegenerateBlockError("all phase volumes are zero")
    sat = vols / total
    out = (sat[0], sat[1], sat[2])
    return (out, clamped) if return_flag else out


# --------------------------------------------------------------------------
# vectorized per-block view used by the solvers


@dataclass
class VolumeTerms:
    """Phase volumes (3, N) and their derivatives with respect to block
    pressure and the three cumulative productions."""

    v: np.ndarray
    dv_dp: np.ndarray
    dv_dnp: np.ndarray
    dv_dgp: np.ndarray
    dv_dwp: np.ndarray


class TankArrays:
    """Per-block parameters gathered into arrays for vectorized evaluation."""

    def __init__(self, blocks):
        blocks = list(blocks)
        self.blocks = blocks
        self.n = len(blocks)
        self.n_foi = np.array([b.n_foi for b in blocks], dtype=float)
        self.g_fgi = np.array([b.g_fgi for b in blocks], dtype=float)
        self.s_wi = np.array([b.s_wi for b in blocks], dtype=float)
        self.c_f = np.array([b.c_f for b in blocks], dtype=float)
        self.c_w = np.array([b.c_w for b in blocks], dtype=float)
        self.p_init = np.array([b.p_init for b in blocks], dtype=float)
        self.z = np.array([b.z for b in blocks], dtype=float)
        self._pvt_groups = _group([b.pvt for b in blocks])
        self._kr_groups = _group([b.relperm for b in blocks])
        self.init = self.pvt(self.p_init)
        self.v_hc = self.n_foi * self.init.bo + self.g_fgi * self.init.bg
        self.pore_volume = self.v_hc / (1.0 - self.s_wi)
        self.c_e = (self.c_f + self.c_w * self.s_wi) / (1.0 - self.s_wi)
        self.a_o = self.n_foi + self.g_fgi * self.init.rv
        self.a_g = self.g_fgi + self.n_foi * self.init.rs
        self.has_aquifer = np.array([b.aquifer is not None for b in blocks])
        self.wei = np.array([b.aquifer.wei if b.aquifer else 1.0 for b in blocks])
        self.j_aq = np.array([b.aquifer.j if b.aquifer else 0.0 for b in blocks])

    def pvt(self, p):
        p = np.asarray(p, dtype=float)
        values = np.empty((11, self.n))
        slopes = np.empty((11, self.n))
        for table, idx in self._pvt_groups:
            v, s = table._table.evaluate(p[idx])
            values[:, idx] = v
            slopes[:, idx] = s
        return PvtProps(values, slopes)

    def relperm(self, sat):
        """``(kr, dkr)`` of shape (3, N) for saturations ``sat`` (3, N)."""
        kr = np.empty((3, self.n))
        dkr = np.empty((3, self.n))
        for curves, idx in self._kr_groups:
            k, d = curves.evaluate(sat[0, idx], sat[2, idx], sat[1, idx])
            kr[:, idx] = k
            dkr[:, idx] = d
        return kr, dkr

    def initial_saturations(self):
        v = np.vstack([self.n_foi * self.init.bo, self.g_fgi * self.init.bg,
                       self.pore_volume * self.s_wi])
        return v / v.sum(axis=0)

    def volumes(self, props, p, n_p, g_p, w_p, g_inj, w_inj, w_e, dwe_dp, influx):
        """Phase volumes and derivatives for every block at once."""
        rs, rv = props.rs, props.rv
        drs, drv = props.drs, props.drv
        denom = 1.0 - rs * rv
        if np.any(denom <= 0):
            raise SingularPvtError("1 - Rs*Rv must be positive")
        ddenom = -(rs * drv + rv * drs)
        rem_o = self.a_o - n_p
        rem_g = self.a_g - g_p
        n_fo = (rem_o - rem_g * rv) / denom
        g_fg = (rem_g - rem_o * rs) / denom
        dn_fo = (-rem_g * drv - n_fo * ddenom) / denom
        dg_fg = (-rem_o * drs - g_fg * ddenom) / denom

        oil_left = rem_o - g_fg * rv
        gas_left = rem_g - n_fo * rs
        v_o = props.bo * oil_left
        v_g = props.bg * gas_left + g_inj * props.bg
        swi_pv = self.pore_volume * self.s_wi
        v_w = w_e - props.bw * w_p + props.bw * w_inj + swi_pv * (1.0 + self.c_w * (self.p_init - p))

        dvo_dp = props.dbo * oil_left + props.bo * (-dg_fg * rv - g_fg * drv)
        dvg_dp = props.dbg * (gas_left + g_inj) + props.bg * (-dn_fo * rs - n_fo * drs)
        dvw_dp = dwe_dp - props.dbw * w_p + props.dbw * w_inj - swi_pv * self.c_w

        zero = np.zeros(self.n)
        v = np.vstack([v_o, v_g, v_w]) + influx
        return VolumeTerms(
            v=v,
            dv_dp=np.vstack([dvo_dp, dvg_dp, dvw_dp]),
            dv_dnp=np.vstack([-props.bo / denom, props.bg * rs / denom, zero]),
            dv_dgp=np.vstack([props.bo * rv / denom, -props.bg / denom, zero]),
            dv_dwp=np.vstack([zero, zero, -props.bw]),
        )


def _group(objects):
    groups = {}
    order = []
    for k, obj in enumerate(objects):
        key = id(obj)
        if key not in groups:
            groups[key] = (obj, [])
            order.append(key)
        groups[key][1].append(k)
    return [(groups[key][0], np.array(groups[key][1])) for key in order]
