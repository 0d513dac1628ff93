"""Forecast mode: pressures and cumulative productions as joint unknowns.

Per block the unknowns are ``(p, N_p, G_p, W_p)`` stored block-contiguously,
so the Jacobian has dense 4 x 4 diagonal blocks plus pressure couplings from
each block's material-balance row to its connected neighbours.  The four
equations per block are the material balance (R1, the history residual with
the cumulatives free), a Vogel inflow relation (R2), a water/oil ratio
closure (R3) and a gas/oil ratio closure (R4).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ._newton import LinearSolveError, NonConvergenceError, newton
from .history import Cumulatives, HistoryProblem, HistoryState, SolverConfig, local_residual_terms
from .pvt import SingularPvtError

log = logging.getLogger(__name__)

KRO_FLOOR = 1e-6
N_UNKNOWNS = 4

__all__ = [
    "ForecastRow", "ForecastProblem", "ForecastResult", "ForecastFailure",
    "vogel_fraction", "run_forecast", "pack", "unpack",
]


class ForecastFailure(RuntimeError):
    """Forecast step failed even at the smallest allowed time step."""

    def __init__(self, step, time, cause):
        super().__init__(f"forecast step {step} (t = {time:g}) failed: {cause}")
        self.step = step
        self.time = time
        self.cause = cause


@dataclass
class ForecastRow:
    """Constraints held over one step; ``ginj``/``winj`` are cumulative
    volumes at the end of the step."""

    pwf: np.ndarray
    qlmax: np.ndarray
    nproducers: np.ndarray
    ginj: np.ndarray
    winj: np.ndarray

    @classmethod
    def from_schedule(cls, schedule, k):
        return cls(schedule.pwf[k], schedule.qlmax[k], schedule.nproducers[k],
                   schedule.ginj[k], schedule.winj[k])


def vogel_fraction(p, pwf):
    """Vogel bracket ``1 - 0.2 x - 0.8 x^2`` with ``x = pwf / p`` and its
    derivative with respect to ``p``.  Clamped at zero once ``p <= pwf``
    (producers do not take in fluid)."""
    p = np.asarray(p, dtype=float)
    x = pwf / p
    frac = 1.0 - 0.2 * x - 0.8 * x**2
    dfrac = (0.2 + 1.6 * x) * pwf / p**2
    dead = frac <= 0
    return np.where(dead, 0.0, frac), np.where(dead, 0.0, dfrac)


def pack(p, n_p, g_p, w_p):
    """Interleave per-block arrays into the block-ordered unknown vector."""
    return np.column_stack([p, n_p, g_p, w_p]).ravel()


def unpack(x):
    q = np.asarray(x, dtype=float).reshape(-1, N_UNKNOWNS)
    return q[:, 0], q[:, 1], q[:, 2], q[:, 3]


@dataclass
class ForecastResult:
    times: np.ndarray
    pressures: np.ndarray
    np: np.ndarray
    gp: np.ndarray
    wp: np.ndarray
    saturations: np.ndarray
    final_state: HistoryState
    substeps: list
    block_ids: list


class ForecastProblem:
    """Residual and Jacobian assembly for the 4N forecast system."""

    def __init__(self, network, config=None):
        self.history = HistoryProblem(network, config)
        self.network = network
        self.config = self.history.config
        self.tanks = self.history.tanks
        self.conns = self.history.conns
        self.n = self.history.n

    def initial_state(self):
        return self.history.initial_state()

    def _cumulatives(self, row, n_p, g_p, w_p):
        return Cumulatives(n_p, g_p, w_p, np.asarray(row.ginj, float), np.asarray(row.winj, float))

    def evaluate(self, state, row, t_next, x, kr_lag=None):
        """Residual (4N,) and dense Jacobian (4N, 4N) at iterate ``x``."""
        t = self.tanks
        n = self.n
        p, n_p, g_p, w_p = unpack(x)
        dt = t_next - state.time
        cum = self._cumulatives(row, n_p, g_p, w_p)
        props = t.pvt(p)
        w_e, dwe = state.aquifer.influx(t_next, dt, p)

        # R1: material balance
        r_loc, dloc_dp, dloc_dnp, dloc_dgp, dloc_dwp = local_residual_terms(t, props, p, cum, w_e, dwe)
        if kr_lag is None:
            kr_lag, _ = t.relperm(state.saturations)
        fl = self.conns.step_fluxes(t, props, p, kr_lag, dt, self.config)
        r1 = r_loc + state.influx.sum(axis=0) + self.conns.net_into_blocks(fl.flux.sum(axis=0), n)

        d_n = n_p - state.cumulatives.np
        d_g = g_p - state.cumulatives.gp
        d_w = w_p - state.cumulatives.wp

        # R2: Vogel inflow
        qmax = dt * np.asarray(row.qlmax, float) * np.asarray(row.nproducers, float)
        frac, dfrac = vogel_fraction(p, np.asarray(row.pwf, float))
        r2 = d_w + d_n - frac * qmax

        # saturations at the iterate, non-local part lagged
        vols = t.volumes(props, p, n_p, g_p, w_p, cum.ginj, cum.winj, w_e, dwe, state.influx)
        sat, dsat = _saturation_derivatives(vols)
        kr, dkr_ds = t.relperm(sat)
        # dkr[a] / dy for y in (p, np, gp, wp): shape (3, 4, N)
        dkr = dkr_ds[:, None, :] * dsat

        kro = kr[0]
        floored = kro < KRO_FLOOR
        kro_e = np.where(floored, KRO_FLOOR, kro)
        dkro_e = np.where(floored, 0.0, dkr[0])

        mob_w = props.muo * props.bo / (props.muw * props.bw)
        mob_g = props.muo * props.bo / (props.mug * props.bg)
        dlog_o = props.dmuo / props.muo + props.dbo / props.bo
        dmob_w = mob_w * (dlog_o - props.dmuw / props.muw - props.dbw / props.bw)
        dmob_g = mob_g * (dlog_o - props.dmug / props.mug - props.dbg / props.bg)

        # R3: water/oil ratio
        ratio_w = kr[2] / kro_e
        dratio_w = (dkr[2] * kro_e - kr[2] * dkro_e) / kro_e**2
        wor = ratio_w * mob_w
        dwor = dratio_w * mob_w
        dwor[0] += ratio_w * dmob_w
        r3 = wor * d_n - d_w

        # R4: gas/oil ratio
        ratio_g = kr[1] / kro_e
        dratio_g = (dkr[1] * kro_e - kr[1] * dkro_e) / kro_e**2
        gor = props.rs + ratio_g * mob_g
        dgor = dratio_g * mob_g
        dgor[0] += props.drs + ratio_g * dmob_g
        r4 = gor * d_n - d_g

        res = np.column_stack([r1, r2, r3, r4]).ravel()

        blocks = np.zeros((n, 4, 4))
        blocks[:, 0, :] = np.column_stack([dloc_dp, dloc_dnp, dloc_dgp, np.broadcast_to(dloc_dwp, (n,))])
        blocks[:, 1, :] = np.column_stack([-dfrac * qmax, np.ones(n), np.zeros(n), np.ones(n)])
        blocks[:, 2, :] = (dwor * d_n).T
        blocks[:, 2, 1] += wor
        blocks[:, 2, 3] -= 1.0
        blocks[:, 3, :] = (dgor * d_n).T
        blocks[:, 3, 1] += gor
        blocks[:, 3, 2] -= 1.0

        jac = np.zeros((4 * n, 4 * n))
        for b in range(n):
            jac[4 * b:4 * b + 4, 4 * b:4 * b + 4] = blocks[b]
        # non-local couplings enter R1 rows through pressure columns only
        ci, cj = 4 * self.conns.i, 4 * self.conns.j
        di = fl.d_dpi.sum(axis=0)
        dj = fl.d_dpj.sum(axis=0)
        np.add.at(jac, (ci, ci), di)
        np.add.at(jac, (ci, cj), dj)
        np.add.at(jac, (cj, ci), -di)
        np.add.at(jac, (cj, cj), -dj)
        return res, jac, (props, w_e, fl, sat)

    def residual(self, state, row, t_next, x):
        return self.evaluate(state, row, t_next, x)[0]

    def pattern(self):
        """Structural non-zero pattern as sorted ``(row, col)`` pairs."""
        n = self.n
        pairs = set()
        for b in range(n):
            for r in range(4):
                for c in range(4):
                    pairs.add((4 * b + r, 4 * b + c))
        for i, j in zip(self.conns.i, self.conns.j):
            pairs.add((4 * i, 4 * j))
            pairs.add((4 * j, 4 * i))
        return sorted(pairs)

    def sparse_jacobian(self, state, row, t_next, x):
        """Jacobian as CSR with every structural entry stored explicitly."""
        _, jac, _ = self.evaluate(state, row, t_next, x)
        rows, cols = np.array(self.pattern()).T
        return sparse.csr_matrix((jac[rows, cols], (rows, cols)), shape=jac.shape)

    def initial_guess(self, state):
        c = state.cumulatives
        return pack(state.pressures, c.np, c.gp, c.wp)

    def solve_step(self, state, row, t_next):
        """Advance one step; returns ``(new_state, iterations)``."""
        cfg = self.config
        n = self.n
        cache = {}
        kr_lag, _ = self.tanks.relperm(state.saturations)

        def assemble(x):
            r, jac, pieces = self.evaluate(state, row, t_next, x, kr_lag)
            cache["pieces"] = pieces
            return r, jac

        max_step = pack(np.full(n, cfg.max_pressure_change), *(np.full(n, np.inf) for _ in range(3)))
        lower = pack(np.zeros(n), *(np.full(n, -np.inf) for _ in range(3)))
        x, iters, _ = newton(
            assemble, self.initial_guess(state), cfg.newton_tol_residual, cfg.newton_tol_update,
            cfg.max_newton_iters, cfg.damping, max_step, lower,
        )
        p, n_p, g_p, w_p = unpack(x)
        cum = self._cumulatives(row, n_p.copy(), g_p.copy(), w_p.copy())
        props, w_e, fl, _ = cache["pieces"]
        new, _ = self.history.accept(state, cum, t_next, p, (props, w_e, fl))
        return new, iters


def _saturation_derivatives(vols):
    """Saturations (3, N) and derivatives (3, 4, N) with respect to
    ``(p, N_p, G_p, W_p)``; clamped negative volumes contribute nothing."""
    pos = vols.v > 0
    v = np.where(pos, vols.v, 0.0)
    dv = np.stack([vols.dv_dp, vols.dv_dnp, vols.dv_dgp, vols.dv_dwp], axis=1)
    dv = np.where(pos[:, None, :], dv, 0.0)
    total = v.sum(axis=0)
    if np.any(total <= 0):
        raise SingularPvtError("all phase volumes vanished in a block")
    dtotal = dv.sum(axis=0)
    sat = v / total
    dsat = (dv * total - v[:, None, :] * dtotal[None]) / total**2
    return sat, dsat


def _monotone(old, new, tol=1e-9):
    c0, c1 = old.cumulatives, new.cumulatives
    scale = 1.0 + np.maximum.reduce([np.abs(c1.np), np.abs(c1.gp), np.abs(c1.wp)])
    for a, b in ((c0.np, c1.np), (c0.gp, c1.gp), (c0.wp, c1.wp)):
        if np.any(b - a < -tol * scale):
            return False
    return True


def _interp_row(row, prev_inj, frac):
    """Constraint row for a sub-step ending at fraction ``frac`` of the step."""
    ginj0, winj0 = prev_inj
    return ForecastRow(
        row.pwf, row.qlmax, row.nproducers,
        ginj0 + frac * (np.asarray(row.ginj, float) - ginj0),
        winj0 + frac * (np.asarray(row.winj, float) - winj0),
    )


def run_forecast(network, schedule, state=None, config=None, min_dt_fraction=1.0 / 64):
    """March the forecast schedule from ``state`` (default: initial state).

    Each schedule row is one step ending at ``schedule.times[k]``.  A step
    that fails to converge, or that would reduce a cumulative, is retried
    with halved sub-steps down to ``min_dt_fraction`` of the row's step.
    """
    prob = ForecastProblem(network, config)
    state = prob.initial_state() if state is None else state
    k_total = schedule.times.size
    n = prob.n
    out_p = np.empty((k_total, n))
    out_np = np.empty((k_total, n))
    out_gp = np.empty((k_total, n))
    out_wp = np.empty((k_total, n))
    out_s = np.empty((k_total, 3, n))
    substeps = []
    for k in range(k_total):
        row = ForecastRow.from_schedule(schedule, k)
        t_end = float(schedule.times[k])
        if t_end <= state.time:
            raise ValueError("forecast times must start after the initial state time")
        state, used = _advance(prob, state, row, t_end, min_dt_fraction, k)
        substeps.append(used)
        out_p[k] = state.pressures
        out_np[k] = state.cumulatives.np
        out_gp[k] = state.cumulatives.gp
        out_wp[k] = state.cumulatives.wp
        out_s[k] = state.saturations
    return ForecastResult(
        times=schedule.times.copy(), pressures=out_p, np=out_np, gp=out_gp, wp=out_wp,
        saturations=out_s, final_state=state, substeps=substeps, block_ids=network.ids,
    )


def _advance(prob, state, row, t_end, min_dt_fraction, k):
    t0 = state.time
    span = t_end - t0
    prev_inj = (np.asarray(state.cumulatives.ginj, float), np.asarray(state.cumulatives.winj, float))
    n_sub = 1
    while True:
        current = state
        try:
            for s in range(1, n_sub + 1):
                t_next = t_end if s == n_sub else t0 + span * s / n_sub
                sub_row = _interp_row(row, prev_inj, s / n_sub)
                new, _ = prob.solve_step(current, sub_row, t_next)
                if not _monotone(current, new):
                    raise NonConvergenceError("cumulative production decreased")
                current = new
            return current, n_sub
        except (NonConvergenceError, LinearSolveError, SingularPvtError) as exc:
            if 1.0 / (2 * n_sub) < min_dt_fraction:
                raise ForecastFailure(k, t_end, exc) from exc
            n_sub *= 2
            log.info("forecast step %d: retrying with %d sub-steps (%s)", k, n_sub, exc)
