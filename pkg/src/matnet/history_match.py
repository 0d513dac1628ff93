"""Ensemble smoother with Levenberg-Marquardt damping and Cauchy
reweighting of the observation errors.

Parameters are handled in a transformed space (log for positive scale
parameters) where the prior is uniform or truncated normal.  Each outer
iteration perturbs the observations, forms sample cross-covariances between
parameters and predictions, and moves every member by

    m + C_MD (C_DD + alpha C_D)^-1 (d_perturbed - g(m)).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, stats
from sklearn.base import BaseEstimator

from .aquifer import AquiferParams
from .history import SolverConfig, StepFailure, run_history

log = logging.getLogger(__name__)

__all__ = [
    "Parameter", "ParameterSpace", "ObservationSet", "PressureForward", "cauchy_weights",
    "es_rlm_update", "EnsembleSmootherMatcher", "UpdateFailure", "apply_parameters",
]


class UpdateFailure(RuntimeError):
    """The damped data-covariance system could not be factorized."""


@dataclass
class Parameter:
    name: str
    lower: float
    upper: float
    transform: str = "log"
    prior: str = "uniform"
    mean: float | None = None
    std: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)) or self.lower >= self.upper:
            raise ValueError(f"parameter {self.name}: bounds must be finite with lower < upper")
        if self.transform not in ("log", "linear"):
            raise ValueError(f"parameter {self.name}: transform must be 'log' or 'linear'")
        if self.transform == "log" and self.lower <= 0:
            raise ValueError(f"parameter {self.name}: log transform needs positive bounds")
        if self.prior not in ("uniform", "truncnormal"):
            raise ValueError(f"parameter {self.name}: prior must be 'uniform' or 'truncnormal'")
        if self.prior == "truncnormal" and (self.mean is None or self.std is None or self.std <= 0):
            raise ValueError(f"parameter {self.name}: truncnormal prior needs mean and positive std")

    def forward(self, x):
        return np.log(x) if self.transform == "log" else np.asarray(x, dtype=float)

    def inverse(self, u):
        return np.exp(u) if self.transform == "log" else np.asarray(u, dtype=float)


class ParameterSpace:
    """Ordered parameters; vectors are laid out in declaration order."""

    def __init__(self, parameters):
        self.parameters = list(parameters)
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        if not names:
            raise ValueError("parameter space is empty")
        self.lower = np.array([p.forward(p.lower) for p in self.parameters], dtype=float)
        self.upper = np.array([p.forward(p.upper) for p in self.parameters], dtype=float)

    @property
    def names(self):
        return [p.name for p in self.parameters]

    def __len__(self):
        return len(self.parameters)

    def to_internal(self, m):
        m = np.atleast_2d(np.asarray(m, dtype=float))
        return np.column_stack([p.forward(m[:, k]) for k, p in enumerate(self.parameters)])

    def to_physical(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.column_stack([p.inverse(u[:, k]) for k, p in enumerate(self.parameters)])

    def clip(self, u):
        return np.clip(u, self.lower, self.upper)

    def sample(self, n, rng):
        """``n`` draws from the prior, returned in internal coordinates."""
        out = np.empty((n, len(self)))
        for k, p in enumerate(self.parameters):
            lo, hi = self.lower[k], self.upper[k]
            if p.prior == "uniform":
                out[:, k] = rng.uniform(lo, hi, size=n)
            else:
                mu, sd = p.forward(p.mean), p.std
                a, b = (lo - mu) / sd, (hi - mu) / sd
                out[:, k] = stats.truncnorm.rvs(a, b, loc=mu, scale=sd, size=n, random_state=rng)
        return out


def apply_parameters(network, names, values):
    """Network with the named parameters substituted.

    Names: ``ooip:<id>`` (scales the block's initial oil and gas
    proportionally), ``wei:<id>``, ``j:<id>``, ``t:<id>-<id>`` and ``tmax``;
    transmissibilities are clipped to ``[0, tmax]``.
    """
    blocks = list(network.blocks)
    trans = network.transmissibility.copy()
    t_max = network.t_max
    ids = network.ids
    for name, value in zip(names, values):
        value = float(value)
        kind, _, target = name.partition(":")
        if kind == "tmax":
            t_max = value
        elif kind == "t":
            a, _, b = target.partition("-")
            i, j = ids.index(int(a)), ids.index(int(b))
            trans[i, j] = trans[j, i] = value
        elif kind in ("ooip", "wei", "j"):
            k = ids.index(int(target))
            blk = blocks[k]
            if kind == "ooip":
                scale = value / blk.ooip
                blocks[k] = replace(blk, n_foi=blk.n_foi * scale, g_fgi=blk.g_fgi * scale)
            else:
                if blk.aquifer is None:
                    raise ValueError(f"{name}: block {target} has no aquifer")
                aq = AquiferParams(value, blk.aquifer.j, blk.aquifer.p_init) if kind == "wei" \
                    else AquiferParams(blk.aquifer.wei, value, blk.aquifer.p_init)
                blocks[k] = replace(blk, aquifer=aq)
        else:
            raise ValueError(f"unknown parameter name {name!r}")
    trans = np.clip(trans, 0.0, t_max)
    return type(network)(blocks, trans, t_max)


@dataclass
class ObservationSet:
    """Observed block pressures with base error standard deviations."""

    times: np.ndarray
    blocks: np.ndarray
    values: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.blocks = np.asarray(self.blocks, dtype=int)
        self.values = np.asarray(self.values, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        n = self.values.size
        if not (self.times.size == self.blocks.size == self.std.size == n) or n == 0:
            raise ValueError("observation arrays must be non-empty and of equal length")
        if np.any(self.std <= 0):
            raise ValueError("observation error std must be positive")

    def __len__(self):
        return self.values.size

    @classmethod
    def from_rows(cls, rows, floor_fraction=0.01, floor=0.0):
        """Rows ``(time, block, pobs, std)``; the base std is raised to
        ``max(floor_fraction * max|pobs|, floor)`` where smaller."""
        rows = np.asarray(rows, dtype=float)
        values = rows[:, 2]
        base = max(floor_fraction * float(np.max(np.abs(values))), floor)
        return cls(rows[:, 0], rows[:, 1].astype(int), values, np.maximum(rows[:, 3], base))


class PressureForward:
    """Maps a physical parameter vector to predicted block pressures at the
    observation times by running the history solver."""

    def __init__(self, network, schedule, observations, names, config=None):
        self.network = network
        self.schedule = schedule
        self.names = list(names)
        self.config = config or SolverConfig()
        times = schedule.times
        step = np.searchsorted(times, observations.times)
        bad = (step >= times.size) | (times[np.minimum(step, times.size - 1)] != observations.times)
        if np.any(bad):
            raise ValueError("observation times must coincide with schedule times")
        self._step = step
        self._col = np.array([network.index_of(b) for b in observations.blocks])
        self._last = int(step.max()) + 1

    def __call__(self, m):
        net = apply_parameters(self.network, self.names, m)
        res = run_history(net, self.schedule.truncate(self._last), self.config)
        return res.pressures[self._step, self._col]


def cauchy_weights(r):
    """``1 / (1 + r^2)`` elementwise."""
    r = np.asarray(r, dtype=float)
    return 1.0 / (1.0 + r * r)


def robust_scale(residual, floor):
    """Normalized median absolute deviation, not below ``floor``."""
    med = np.median(residual)
    mad = 1.4826 * np.median(np.abs(residual - med))
    return max(mad, floor)


def _solve_spd(a, b, jitter=1e-10, attempts=8):
    scale = np.trace(a) / a.shape[0] if a.shape[0] else 1.0
    scale = scale if scale > 0 else 1.0
    eps = 0.0
    for _ in range(attempts):
        try:
            factor = linalg.cho_factor(a + eps * scale * np.eye(a.shape[0]), lower=True)
            return linalg.cho_solve(factor, b)
        except linalg.LinAlgError:
            eps = jitter if eps == 0 else eps * 100
    raise UpdateFailure("C_DD + alpha C_D is singular even with diagonal jitter")


def es_rlm_update(m, g, d_target, c_d, alpha):
    """One ES-rLM step.

    Parameters
    ----------
    m : (Ne, Nm) member parameters (internal coordinates)
    g : (Ne, Nd) predictions of each member
    d_target : (Ne, Nd) perturbed observations per member
    c_d : (Nd,) diagonal of the observation error covariance
    alpha : damping factor
    """
    m = np.asarray(m, dtype=float)
    g = np.asarray(g, dtype=float)
    n_e = m.shape[0]
    if n_e < 2:
        raise ValueError("ensemble update needs at least two members")
    dm = m - m.mean(axis=0)
    dg = g - g.mean(axis=0)
    c_md = dm.T @ dg / (n_e - 1)
    c_dd = dg.T @ dg / (n_e - 1)
    innov = (np.asarray(d_target, dtype=float) - g).T
    x = _solve_spd(c_dd + alpha * np.diag(c_d), innov)
    return m + (c_md @ x).T


def boxplot_stats(values):
    """Per-column (min, q1, median, q3, max)."""
    q = np.percentile(values, [0, 25, 50, 75, 100], axis=0)
    return q.T


@dataclass
class IterationRecord:
    iteration: int
    alpha: float
    objective: float
    n_active: int
    retries: int
    boxplot: np.ndarray = field(repr=False)
    ensemble: np.ndarray = field(repr=False, default=None)


class EnsembleSmootherMatcher(BaseEstimator):
    """Iterative ES-rLM history matching.

    Parameters
    ----------
    n_ensemble : int
        Members, at least 2.
    max_iter : int
        Outer iterations.
    alpha_init : float or None
        Initial damping; ``None`` uses ``tr(C_DD) / tr(C_D)``.
    tol_objective, tol_params : float
        Stop when the relative objective change and the largest change of
        the parameter means (as a fraction of each bound range) both fall
        below these values.
    max_retries : int
        Damping increases allowed per iteration when the objective worsens.
    perturb_observations : bool
        Draw perturbed observations for each member and iteration.
    robust : bool
        Cauchy-reweight the observation errors from the previous residuals.
    random_state : int or None
    """

    def __init__(self, n_ensemble=50, max_iter=20, alpha_init=None, tol_objective=0.005,
                 tol_params=0.005, max_retries=5, perturb_observations=True, robust=True,
                 random_state=None):
        self.n_ensemble = n_ensemble
        self.max_iter = max_iter
        self.alpha_init = alpha_init
        self.tol_objective = tol_objective
        self.tol_params = tol_params
        self.max_retries = max_retries
        self.perturb_observations = perturb_observations
        self.robust = robust
        self.random_state = random_state

    def _validate(self):
        if int(self.n_ensemble) != self.n_ensemble or self.n_ensemble < 2:
            raise ValueError("n_ensemble must be an integer >= 2")
        if self.max_iter < 0 or self.max_retries < 0:
            raise ValueError("max_iter and max_retries must be non-negative")

    def _forward_all(self, forward, space, u):
        phys = space.to_physical(u)
        preds = []
        ok = np.ones(len(u), dtype=bool)
        for k, m in enumerate(phys):
            try:
                preds.append(np.asarray(forward(m), dtype=float))
            except (StepFailure, ValueError) as exc:
                log.info("member %d failed: %s", k, exc)
                ok[k] = False
                preds.append(None)
        n_d = next((len(p) for p in preds if p is not None), 0)
        g = np.full((len(u), n_d), np.nan)
        for k, p in enumerate(preds):
            if p is not None:
                g[k] = p
        return g, ok

    def fit(self, forward, space, observations, initial_ensemble=None):
        """Calibrate.  ``forward`` maps a physical parameter vector to the
        predicted data; ``initial_ensemble`` (physical units) overrides the
        prior draw."""
        self._validate()
        rng = np.random.default_rng(self.random_state)
        d_obs = observations.values
        sigma = observations.std
        if initial_ensemble is None:
            u = space.sample(self.n_ensemble, rng)
        else:
            u = space.clip(space.to_internal(initial_ensemble))
            if len(u) < 2:
                raise ValueError("initial ensemble needs at least two members")

        g, ok = self._forward_all(forward, space, u)
        u, g = self._drop_failed(u, g, ok)
        obj_members = np.mean((g - d_obs) ** 2, axis=1)
        objective = float(obj_members.mean())
        weights = np.ones_like(d_obs)
        alpha = self.alpha_init
        if alpha is None:
            dg = g - g.mean(axis=0)
            alpha = float(np.sum(dg * dg) / (len(g) - 1) / np.sum(sigma**2))
            alpha = alpha if alpha > 0 else 1.0

        self.objective_trace_ = [objective]
        self.member_objectives_ = [obj_members]
        self.history_ = [IterationRecord(0, alpha, objective, len(u), 0,
                                         boxplot_stats(space.to_physical(u)), space.to_physical(u))]
        self.converged_ = False
        span = space.upper - space.lower
        for it in range(1, self.max_iter + 1):
            if self.perturb_observations:
                d_target = d_obs + sigma * rng.standard_normal((len(u), d_obs.size))
            else:
                d_target = np.tile(d_obs, (len(u), 1))
            c_d = sigma**2 / weights
            accepted = False
            for retry in range(self.max_retries + 1):
                u_new = space.clip(es_rlm_update(u, g, d_target, c_d, alpha))
                g_new, ok_new = self._forward_all(forward, space, u_new)
                if ok_new.sum() < 2:
                    alpha *= 10.0
                    continue
                obj_new_members = np.mean((g_new[ok_new] - d_obs) ** 2, axis=1)
                obj_new = float(obj_new_members.mean())
                if obj_new < objective:
                    accepted = True
                    alpha *= 0.1
                    break
                alpha *= 10.0
            if not accepted:
                log.info("iteration %d: no improving update after %d retries", it, self.max_retries)
                self.history_.append(IterationRecord(it, alpha, objective, len(u), retry + 1,
                                                     boxplot_stats(space.to_physical(u)), space.to_physical(u)))
                break
            mean_shift = np.max(np.abs(u_new[ok_new].mean(axis=0) - u.mean(axis=0)) / span)
            rel_obj = abs(objective - obj_new) / max(objective, 1e-300)
            u, g = u_new[ok_new], g_new[ok_new]
            objective = obj_new
            self.objective_trace_.append(objective)
            self.member_objectives_.append(obj_new_members)
            self.history_.append(IterationRecord(it, alpha, objective, len(u), retry,
                                                 boxplot_stats(space.to_physical(u)), space.to_physical(u)))
            log.info("iteration %d: objective %.6g, alpha %.3g", it, objective, alpha)
            if self.robust:
                resid = g.mean(axis=0) - d_obs
                scale = robust_scale(resid, float(np.min(sigma)))
                weights = cauchy_weights(resid / scale)
            if rel_obj < self.tol_objective and mean_shift < self.tol_params:
                self.converged_ = True
                break

        self.ensemble_ = space.to_physical(u)
        self.predictions_ = g
        self.alpha_ = alpha
        self.n_iter_ = len(self.objective_trace_) - 1
        self.parameter_names_ = space.names
        return self

    @staticmethod
    def _drop_failed(u, g, ok):
        if ok.sum() < 2:
            raise RuntimeError(f"only {int(ok.sum())} ensemble members produced a forward run")
        if not ok.all():
            log.info("dropping %d failed members", int((~ok).sum()))
        return u[ok], g[ok]

    def boxplot_frame(self):
        """Rows ``(iteration, parameter, min, q1, median, q3, max)``."""
        rows = []
        for rec in self.history_:
            for name, s in zip(self.parameter_names_, rec.boxplot):
                rows.append((rec.iteration, name, *s))
        return rows

    def parameter_median(self):
        return np.median(self.ensemble_, axis=0)
