"""History-mode multi-tank material balance.

Each block carries one unknown, its average pressure.  Cumulative
production and injection come from the schedule; the residual of block
``i`` is the general material balance (local expansion, withdrawal,
injection and aquifer terms) plus the time-integrated non-local fluxes from
connected blocks.  The non-local integral is discretized with backward
Euler: pressures, viscosities and densities at the new level, relative
permeabilities lagged at the previous converged saturations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from ._newton import LinearSolveError, NonConvergenceError, newton
from .aquifer import AquiferBank
from .pvt import SingularPvtError
from .reservoir import TankArrays

log = logging.getLogger(__name__)

# psi per (lbm/ft3 * ft)
GRAVITY = 1.0 / 144.0

__all__ = [
    "SolverConfig", "HistoryState", "HistoryResult", "Cumulatives", "HistoryProblem",
    "residual_local", "residual_nonlocal", "jacobian", "solve_step", "run_history",
    "initial_state", "NonConvergenceError", "LinearSolveError", "StepFailure",
]


@dataclass
class SolverConfig:
    """Newton controls.  ``flux_unit_constant`` converts mD ft / cP psi day
    to RB; it is a calibration value, not a fitted one."""

    newton_tol_residual: float = 1e-3
    newton_tol_update: float = 1e-4
    max_newton_iters: int = 30
    damping: float = 1.0
    max_pressure_change: float = 500.0
    gravity_enabled: bool = True
    flux_unit_constant: float = 1.127e-3

    def __post_init__(self):
        if not (self.newton_tol_residual > 0 and self.newton_tol_update > 0):
            raise ValueError("Newton tolerances must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be at least 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must be in (0, 1]")
        if not self.max_pressure_change > 0:
            raise ValueError("max_pressure_change must be positive")

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown solver settings: {', '.join(sorted(unknown))}")
        return cls(**data)


class StepFailure(RuntimeError):
    """A time step failed; ``step`` is the zero-based schedule row."""

    def __init__(self, step, cause):
        super().__init__(f"step {step} failed: {cause}")
        self.step = step
        self.cause = cause


@dataclass
class Cumulatives:
    """Cumulative volumes at the end of a step, one entry per block."""

    np: np.ndarray
    gp: np.ndarray
    wp: np.ndarray
    ginj: np.ndarray
    winj: np.ndarray

    @classmethod
    def zeros(cls, n):
        return cls(*(np.zeros(n) for _ in range(5)))

    @classmethod
    def from_schedule(cls, schedule, k):
        return cls(schedule.np[k], schedule.gp[k], schedule.wp[k], schedule.ginj[k],
                   schedule.winj[k])


@dataclass
class HistoryState:
    """Converged state after ``step`` steps (step 0 is the initial state).

    ``saturations`` and ``influx`` have shape (3, N) in (oil, gas, water)
    order; ``influx`` is the cumulative net volume received through
    connections (RB).
    """

    step: int
    time: float
    pressures: np.ndarray
    saturations: np.ndarray
    w_e: np.ndarray
    influx: np.ndarray
    aquifer: AquiferBank
    cumulatives: Cumulatives


@dataclass
class StepFluxes:
    """Per-connection phase volumes (3, M) moved into block ``i`` from ``j``
    over one step, with pressure derivatives."""

    flux: np.ndarray
    d_dpi: np.ndarray
    d_dpj: np.ndarray


@dataclass
class HistoryResult:
    times: np.ndarray
    pressures: np.ndarray
    saturations: np.ndarray
    w_e: np.ndarray
    connections: list
    fluxes: np.ndarray
    iterations: list
    residual_norms: list
    final_state: HistoryState
    block_ids: list = field(default_factory=list)

    def flux_records(self):
        """Rows ``(time, i, j, phase, flux_rb)``; each connection appears in
        both directions with opposite sign."""
        rows = []
        phases = ("o", "g", "w")
        for k, t in enumerate(self.times):
            for c, (i, j, _) in enumerate(self.connections):
                for a, name in enumerate(phases):
                    f = self.fluxes[k, a, c]
                    rows.append((t, self.block_ids[i], self.block_ids[j], name, f))
                    rows.append((t, self.block_ids[j], self.block_ids[i], name, -f))
        return rows


def local_residual_terms(tanks, props, p, cum, w_e, dwe_dp):
    """Local material balance residual (RB) and its derivatives with respect
    to pressure and the cumulative productions, for every block."""
    bo, bg, bw, rs, rv = props.bo, props.bg, props.bw, props.rs, props.rv
    dbo, dbg, dbw, drs, drv = props.dbo, props.dbg, props.dbw, props.drs, props.drv
    ini = tanks.init
    boi, bgi, rsi, rvi = ini.bo, ini.bg, ini.rs, ini.rv
    denom = 1.0 - rs * rv
    if np.any(denom <= 0):
        raise SingularPvtError("1 - Rs*Rv must be positive")
    ddenom_neg = rs * drv + rv * drs  # = -d(denom)/dp
    dp = tanks.p_init - p

    num_n = bo - boi + bg * (rsi - rs) + rv * (boi * rs - bo * rsi)
    num_g = bg - bgi + bo * (rvi - rv) + rs * (bgi * rv - bg * rvi)
    f_np = (bo - rs * bg) / denom
    f_gp = (bg - rv * bo) / denom

    r = (
        tanks.n_foi * num_n / denom
        - cum.np * f_np
        - cum.gp * f_gp
        + tanks.g_fgi * num_g / denom
        - cum.wp * bw
        + cum.winj * bw
        + cum.ginj * bg
        + tanks.v_hc * tanks.c_e * dp
        + w_e
    )

    dnum_n = dbo * (1 - rv * rsi) + dbg * (rsi - rs) + drs * (rv * boi - bg) + drv * (boi * rs - bo * rsi)
    dnum_g = dbg * (1 - rs * rvi) + dbo * (rvi - rv) + drv * (rs * bgi - bo) + drs * (bgi * rv - bg * rvi)
    dterm_n = dnum_n / denom + ddenom_neg * num_n / denom**2
    dterm_g = dnum_g / denom + ddenom_neg * num_g / denom**2
    df_np = ((dbo - rs * dbg - bg * drs) * denom + ddenom_neg * (bo - rs * bg)) / denom**2
    df_gp = ((dbg - rv * dbo - bo * drv) * denom + ddenom_neg * (bg - rv * bo)) / denom**2

    dr_dp = (
        tanks.n_foi * dterm_n
        + tanks.g_fgi * dterm_g
        - cum.np * df_np
        - cum.gp * df_gp
        - cum.wp * dbw
        + cum.winj * dbw
        + cum.ginj * dbg
        - tanks.v_hc * tanks.c_e
        + dwe_dp
    )
    return r, dr_dp, -f_np, -f_gp, -bw


class Connections:
    """Connected block pairs of a network as index arrays (``i < j``)."""

    def __init__(self, network):
        conns = network.connections()
        self.pairs = conns
        self.i = np.array([c[0] for c in conns], dtype=int)
        self.j = np.array([c[1] for c in conns], dtype=int)
        self.t = np.array([c[2] for c in conns], dtype=float)

    def __len__(self):
        return self.i.size

    def step_fluxes(self, tanks, props, p, kr_lag, dt, config):
        """Phase volumes moved into ``i`` from ``j`` during a step of length
        ``dt``; mobility taken from the upstream block of each phase."""
        i, j = self.i, self.j
        mu = np.vstack([props.muo, props.mug, props.muw])
        dmu = np.vstack([props.dmuo, props.dmug, props.dmuw])
        rho = np.vstack([props.rhoo, props.rhog, props.rhow])
        drho = np.vstack([props.drhoo, props.drhog, props.drhow])
        g = GRAVITY if config.gravity_enabled else 0.0
        gdz = g * (tanks.z[j] - tanks.z[i])

        rho_bar = 0.5 * (rho[:, i] + rho[:, j])
        phi = p[j] - p[i] - rho_bar * gdz
        dphi_dpi = -1.0 - 0.5 * gdz * drho[:, i]
        dphi_dpj = 1.0 - 0.5 * gdz * drho[:, j]

        from_j = phi > 0
        up = np.where(from_j, j, i)
        rows = np.arange(3)[:, None]
        kr_up = kr_lag[rows, up]
        mu_up = mu[rows, up]
        lam = kr_up / mu_up
        dlam = -kr_up * dmu[rows, up] / mu_up**2

        coef = config.flux_unit_constant * self.t * dt
        flux = coef * lam * phi
        d_dpi = coef * (lam * dphi_dpi + np.where(from_j, 0.0, dlam * phi))
        d_dpj = coef * (lam * dphi_dpj + np.where(from_j, dlam * phi, 0.0))
        return StepFluxes(flux, d_dpi, d_dpj)

    def net_into_blocks(self, values, n):
        """Sum per-connection values (…, M) into per-block totals (…, N)."""
        out = np.zeros(values.shape[:-1] + (n,))
        np.add.at(out, (..., self.i), values)
        np.add.at(out, (..., self.j), -values)
        return out


class HistoryProblem:
    """Residual and Jacobian assembly for one network and solver config."""

    def __init__(self, network, config=None):
        self.network = network
        self.config = config or SolverConfig()
        self.tanks = TankArrays(network.blocks)
        self.conns = Connections(network)
        self.n = len(network.blocks)

    def initial_state(self):
        t = self.tanks
        return HistoryState(
            step=0,
            time=0.0,
            pressures=t.p_init.copy(),
            saturations=t.initial_saturations(),
            w_e=np.zeros(self.n),
            influx=np.zeros((3, self.n)),
            aquifer=AquiferBank.for_blocks(self.network.blocks),
            cumulatives=Cumulatives.zeros(self.n),
        )

    def evaluate(self, state, cum, t_next, p, kr_lag=None):
        """Residual vector and dense Jacobian at pressures ``p``.

        Also returns the pieces needed to accept the step.
        """
        dt = t_next - state.time
        props = self.tanks.pvt(p)
        w_e, dwe = state.aquifer.influx(t_next, dt, p)
        r_loc, dloc, _, _, _ = local_residual_terms(self.tanks, props, p, cum, w_e, dwe)
        if kr_lag is None:
            kr_lag, _ = self.tanks.relperm(state.saturations)
        fl = self.conns.step_fluxes(self.tanks, props, p, kr_lag, dt, self.config)

        r = r_loc + state.influx.sum(axis=0) + self.conns.net_into_blocks(fl.flux.sum(axis=0), self.n)
        jac = self._assemble(dloc, fl)
        return r, jac, (props, w_e, fl)

    def _assemble(self, diag, fl):
        n = self.n
        jac = np.diag(diag)
        ci, cj = self.conns.i, self.conns.j
        di = fl.d_dpi.sum(axis=0)
        dj = fl.d_dpj.sum(axis=0)
        np.add.at(jac, (ci, ci), di)
        np.add.at(jac, (ci, cj), dj)
        np.add.at(jac, (cj, ci), -di)
        np.add.at(jac, (cj, cj), -dj)
        return jac

    def sparse_jacobian(self, state, cum, t_next, p):
        """Jacobian with the structural pattern (diagonal plus connections)
        stored explicitly, even where an entry happens to be zero."""
        _, jac, _ = self.evaluate(state, cum, t_next, p)
        rows = list(range(self.n)) + list(self.conns.i) + list(self.conns.j)
        cols = list(range(self.n)) + list(self.conns.j) + list(self.conns.i)
        vals = [jac[r, c] for r, c in zip(rows, cols)]
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def accept(self, state, cum, t_next, p, pieces):
        props, w_e, fl = pieces
        dt = t_next - state.time
        influx = state.influx + self.conns.net_into_blocks(fl.flux, self.n)
        vols = self.tanks.volumes(props, p, cum.np, cum.gp, cum.wp, cum.ginj, cum.winj,
                                  w_e, 0.0, influx)
        v = np.maximum(vols.v, 0.0)
        total = v.sum(axis=0)
        sat = np.where(total > 0, v / np.where(total > 0, total, 1.0), state.saturations)
        new = HistoryState(
            step=state.step + 1,
            time=t_next,
            pressures=np.array(p, dtype=float),
            saturations=sat,
            w_e=w_e,
            influx=influx,
            aquifer=state.aquifer.appended(t_next, dt, p),
            cumulatives=cum,
        )
        return new, fl.flux

    def solve_step(self, state, cum, t_next):
        """Advance ``state`` to ``t_next``; returns ``(state, fluxes, iters, norms)``."""
        cfg = self.config
        cache = {}
        kr_lag, _ = self.tanks.relperm(state.saturations)

        def assemble(p):
            r, jac, pieces = self.evaluate(state, cum, t_next, p, kr_lag)
            cache["pieces"] = pieces
            return r, jac

        p, iters, norms = newton(
            assemble, state.pressures, cfg.newton_tol_residual, cfg.newton_tol_update,
            cfg.max_newton_iters, cfg.damping, cfg.max_pressure_change, lower=0.0,
        )
        new, flux = self.accept(state, cum, t_next, p, cache["pieces"])
        return new, flux, iters, norms


def initial_state(network, config=None):
    return HistoryProblem(network, config).initial_state()


def solve_step(network, state, cum, t_next, config=None):
    """Advance one schedule row; returns the new :class:`HistoryState`."""
    return HistoryProblem(network, config).solve_step(state, cum, t_next)[0]


def jacobian(network, state, cum, t_next, p=None, config=None):
    """Sparse N x N Jacobian of the history residual at pressures ``p``
    (defaults to the state's pressures)."""
    prob = HistoryProblem(network, config)
    p = state.pressures if p is None else np.asarray(p, dtype=float)
    return prob.sparse_jacobian(state, cum, t_next, p)


def residual_local(block, p, n_p=0.0, g_p=0.0, w_p=0.0, g_inj=0.0, w_inj=0.0, w_e=0.0):
    """Local residual of a single block (RB)."""
    tanks = TankArrays([block])
    cum = Cumulatives(*(np.atleast_1d(float(v)) for v in (n_p, g_p, w_p, g_inj, w_inj)))
    pa = np.atleast_1d(float(p))
    r, *_ = local_residual_terms(tanks, tanks.pvt(pa), pa, cum, np.atleast_1d(float(w_e)), 0.0)
    return float(r[0])


def residual_nonlocal(network, i, p_history, s_history, dt_history, config=None):
    """Cumulative non-local volume received by block ``i`` (RB).

    ``p_history[m]`` are the block pressures at the end of step ``m + 1``
    and ``s_history[m]`` (3, N) the saturations lagged into that step.
    """
    config = config or SolverConfig()
    tanks = TankArrays(network.blocks)
    conns = Connections(network)
    total = 0.0
    for p, sat, dt in zip(p_history, s_history, dt_history):
        p = np.asarray(p, dtype=float)
        kr, _ = tanks.relperm(np.asarray(sat, dtype=float))
        fl = conns.step_fluxes(tanks, tanks.pvt(p), p, kr, dt, config)
        total += conns.net_into_blocks(fl.flux.sum(axis=0), len(network.blocks))[i]
    return float(total)


def run_history(network, schedule, config=None, state=None):
    """March through every schedule row and collect per-step results."""
    prob = HistoryProblem(network, config)
    state = prob.initial_state() if state is None else state
    k_total = schedule.times.size
    n = prob.n
    pressures = np.empty((k_total, n))
    sats = np.empty((k_total, 3, n))
    w_e = np.empty((k_total, n))
    fluxes = np.empty((k_total, 3, len(prob.conns)))
    iterations, norms = [], []
    for k in range(k_total):
        cum = Cumulatives.from_schedule(schedule, k)
        try:
            state, flux, it, nr = prob.solve_step(state, cum, float(schedule.times[k]))
        except (NonConvergenceError, LinearSolveError, SingularPvtError) as exc:
            raise StepFailure(k, exc) from exc
        pressures[k] = state.pressures
        sats[k] = state.saturations
        w_e[k] = state.w_e
        fluxes[k] = flux
        iterations.append(it)
        norms.append(nr)
    log.debug("history run: %d steps, %d Newton iterations", k_total, sum(iterations))
    return HistoryResult(
        times=schedule.times.copy(), pressures=pressures, saturations=sats, w_e=w_e,
        connections=prob.conns.pairs, fluxes=fluxes, iterations=iterations,
        residual_norms=norms, final_state=state, block_ids=network.ids,
    )
