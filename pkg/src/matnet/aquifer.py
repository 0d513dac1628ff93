"""Fetkovich pseudo-steady aquifer.

Step indices are 1-based to match the time-step numbering of the solver:
``pressure_history[k - 1]`` and ``dt_history[k - 1]`` belong to step ``k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AquiferParams:
    """Encroachable volume ``wei`` (RB), productivity index ``j``
    (RB/(psi day)) and the initial pressure shared with the attached block."""

    wei: float
    j: float
    p_init: float

    def __post_init__(self):
        if not self.wei > 0:
            raise ValueError("aquifer wei must be positive")
        if self.j < 0:
            raise ValueError("aquifer productivity index must be non-negative")
        if not self.p_init > 0:
            raise ValueError("aquifer initial pressure must be positive")

    @classmethod
    def from_volume(cls, wi, theta, ct, j, p_init):
        """Build from initial water in place, encroachment angle (degrees)
        and total compressibility: ``wei = ct * wi * p_init * theta / 360``."""
        if not 0 < theta <= 360:
            raise ValueError("encroachment angle must be in (0, 360]")
        return cls(wei=ct * wi * p_init * theta / 360.0, j=j, p_init=p_init)

    @property
    def decay_rate(self):
        """``J p_i / W_ei`` in 1/day."""
        return self.j * self.p_init / self.wei

    def step_coefficient(self, dt):
        """``(W_ei/p_i)(1 - exp(-J p_i dt / W_ei))``: influx per psi of drawdown."""
        return self.wei / self.p_init * -math.expm1(-self.decay_rate * dt)


@dataclass
class AquiferState:
    """Cumulative influx per step; entry 0 is the initial (zero) state."""

    w_e_history: list = field(default_factory=lambda: [0.0])
    pressure_history: list = field(default_factory=list)
    dt_history: list = field(default_factory=list)


def step_recursive(params, w_e_prev, p_prev, p_curr, dt):
    """One step of the recursive update using the mid-step pressure."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    p_i = params.p_init
    drive = p_i * (1.0 - w_e_prev / params.wei) - 0.5 * (p_curr + p_prev)
    return w_e_prev + params.wei / p_i * drive * -math.expm1(-params.decay_rate * dt)


def step_closed_form(params, pressure_history, dt_history, n):
    """Cumulative influx after step ``n`` from the telescoped sum.

    Uses the end-of-step pressure in place of the mid-step average.
    """
    p = np.asarray(pressure_history, dtype=float)
    dt = np.asarray(dt_history, dtype=float)
    if n < 0 or n > p.size or n > dt.size:
        raise IndexError(f"step {n} outside history of length {min(p.size, dt.size)}")
    if n == 0:
        return 0.0
    p = p[:n]
    dt = dt[:n]
    beta = params.decay_rate
    # t^n - t^k for k = 1..n
    elapsed = np.concatenate([np.cumsum(dt[::-1])[::-1][1:], [0.0]])
    coef = params.wei / params.p_init * -np.expm1(-beta * dt)
    return float(np.sum(coef * np.exp(-beta * elapsed) * (params.p_init - p)))


def dwe_dp(params, dt_history, k, j):
    """Derivative of the cumulative influx at step ``k`` with respect to the
    pressure at step ``j``; zero when ``j > k`` (causality)."""
    if j > k:
        return 0.0
    dt = np.asarray(dt_history, dtype=float)
    if j < 1 or k > dt.size:
        raise IndexError(f"steps ({k}, {j}) outside history of length {dt.size}")
    beta = params.decay_rate
    elapsed = float(np.sum(dt[j:k]))
    return -params.wei / params.p_init * -math.expm1(-beta * dt[j - 1]) * math.exp(-beta * elapsed)


class AquiferBank:
    """Closed-form influx for every block of a network at once.

    Blocks without an aquifer carry zero coefficients.  ``times``,
    ``coefs`` and ``pressures`` hold one entry per accepted step and are
    never mutated in place, so a bank can be shared between solver states.
    """

    def __init__(self, wei, j, p_init, active, times=(), coefs=(), pressures=()):
        self.wei = np.asarray(wei, dtype=float)
        self.j = np.asarray(j, dtype=float)
        self.p_init = np.asarray(p_init, dtype=float)
        self.active = np.asarray(active, dtype=bool)
        self.decay = np.where(self.active, self.j * self.p_init / self.wei, 0.0)
        self.times = tuple(times)
        self.coefs = tuple(coefs)
        self.pressures = tuple(pressures)

    @classmethod
    def for_blocks(cls, blocks):
        return cls(
            [b.aquifer.wei if b.aquifer else 1.0 for b in blocks],
            [b.aquifer.j if b.aquifer else 0.0 for b in blocks],
            [b.p_init for b in blocks],
            [b.aquifer is not None for b in blocks],
        )

    def coefficient(self, dt):
        return np.where(self.active, self.wei / self.p_init * -np.expm1(-self.decay * dt), 0.0)

    def influx(self, t_next, dt_next, p):
        """``(W_e, dW_e/dp)`` at the end of a step ending at ``t_next`` with
        current-step pressure ``p``; earlier pressures are frozen."""
        coef = self.coefficient(dt_next)
        w_e = coef * (self.p_init - p)
        if self.times:
            elapsed = t_next - np.asarray(self.times)[:, None]
            past = np.asarray(self.coefs) * np.exp(-self.decay * elapsed) * (
                self.p_init - np.asarray(self.pressures)
            )
            w_e = w_e + past.sum(axis=0)
        return w_e, -coef

    def appended(self, t, dt, p):
        return AquiferBank(
            self.wei, self.j, self.p_init, self.active,
            self.times + (float(t),),
            self.coefs + (self.coefficient(dt),),
            self.pressures + (np.array(p, dtype=float),),
        )
