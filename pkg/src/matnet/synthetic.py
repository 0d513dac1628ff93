"""Synthetic compartment cases with known truth.

The truth run is a forecast under a smooth bottomhole-pressure schedule;
its cumulative productions become the history schedule, so a history run
on the same network reproduces the truth pressures and a blind-test
forecast has an exact target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aquifer import AquiferParams
from .forecast import run_forecast
from .history import SolverConfig
from .pvt import PvtTable
from .relperm import RelPermCurves
from .reservoir import Block, ForecastSchedule, HistorySchedule, ReservoirNetwork

DEFAULT_CONNECTIONS = ((1, 2), (2, 3), (2, 5), (3, 5), (3, 4), (4, 5))


def black_oil_table(p_bubble=3000.0, rs_bubble=550.0, p_min=500.0, p_max=5500.0, n_nodes=21):
    """Smooth saturated/undersaturated black-oil table."""
    p = np.linspace(p_min, p_max, n_nodes)
    sat = p <= p_bubble
    rs = np.where(sat, rs_bubble * (p / p_bubble) ** 0.9, rs_bubble)
    bo_b = 1.05 + 4.5e-4 * rs_bubble
    bo = np.where(sat, 1.05 + 4.5e-4 * rs, bo_b * np.exp(-1.2e-5 * (p - p_bubble)))
    bg = 2.9 / p  # RB/scf
    bw = 1.03 * np.exp(-3e-6 * (p - 14.7))
    rv = 2e-6 * (p / p_bubble)  # STB/scf
    muo = np.where(sat, 1.4 - 0.25 * (p / p_bubble), 1.15 + 4e-5 * (p - p_bubble))
    mug = 0.012 + 4e-6 * p
    muw = np.full_like(p, 0.5)
    rhoo = 53.0 - 0.012 * rs
    rhog = 0.0034 * p
    rhow = 62.4 * (1.0 + 3e-6 * (p - 14.7))
    return PvtTable(p, bo=bo, bg=bg, bw=bw, rs=rs, rv=rv, muo=muo, mug=mug, muw=muw,
                    rhoo=rhoo, rhog=rhog, rhow=rhow)


def corey_curves(s_wc=0.2, s_or=0.2, s_gc=0.05, n_nodes=21):
    s = np.linspace(0.0, 1.0, n_nodes)
    kro = np.clip((s - s_or) / (1 - s_or - s_wc), 0, 1) ** 2
    krw = 0.4 * np.clip((s - s_wc) / (1 - s_or - s_wc), 0, 1) ** 2
    krg = 0.8 * np.clip((s - s_gc) / (1 - s_gc - s_wc), 0, 1) ** 2
    return RelPermCurves(s, kro, krw, krg)


@dataclass
class SyntheticCase:
    network: ReservoirNetwork
    history: HistorySchedule
    forecast: ForecastSchedule
    observations: np.ndarray  # rows (time, block id, pobs, std)
    truth: dict
    truth_pressures: np.ndarray
    config: SolverConfig


def default_connections(n_blocks):
    if n_blocks == 5:
        return list(DEFAULT_CONNECTIONS)
    pairs = [(b, b + 1) for b in range(1, n_blocks)]
    pairs += [(b, b + 2) for b in range(1, n_blocks - 1, 2)]
    return pairs


def make_synthetic(n_blocks=5, n_steps=60, dt=30.0, noise_std=2.0, seed=0, connections=None,
                   config=None):
    """Build the twin.  Truth parameters depend only on ``n_blocks``;
    ``seed`` only drives the observation noise."""
    if n_blocks < 2:
        raise ValueError("synthetic case needs at least two blocks")
    config = config or SolverConfig()
    pvt = black_oil_table()
    kr = corey_curves()
    p_init = 4000.0
    truth_rng = np.random.default_rng(12345 + n_blocks)

    blocks = []
    truth = {}
    for b in range(1, n_blocks + 1):
        n_foi = float(np.round(truth_rng.uniform(8e6, 2.4e7), -3))
        g_fgi = 0.0
        aquifer = None
        if b % 2 == 1:
            wei = float(np.round(truth_rng.uniform(2e6, 6e6), -3))
            j = float(np.round(truth_rng.uniform(1.0, 4.0), 3))
            aquifer = AquiferParams(wei, j, p_init)
            truth[f"wei:{b}"] = wei
            truth[f"j:{b}"] = j
        z = 7000.0 + 40.0 * (b - 1)
        blocks.append(Block(b, n_foi, g_fgi, 0.2, 4e-6, 3e-6, p_init, z, pvt, kr, aquifer))
        truth[f"ooip:{b}"] = n_foi

    pairs = default_connections(n_blocks) if connections is None else list(connections)
    triples = []
    for a, c in pairs:
        t = float(np.round(truth_rng.uniform(20.0, 120.0), 2))
        triples.append((a - 1, c - 1, t))
        truth[f"t:{a}-{c}"] = t
    t_max = 200.0
    truth["tmax"] = t_max
    network = ReservoirNetwork(blocks, triples, t_max=t_max)

    times = dt * np.arange(1, n_steps + 1)
    frac = times / times[-1]
    producers = np.ones(n_blocks)
    producers[1::3] = 2.0
    producers[n_blocks // 2] = 1.0  # producer with pressure support
    pwf = np.empty((n_steps, n_blocks))
    for b in range(n_blocks):
        start = 3300.0 - 60.0 * b
        pwf[:, b] = start - 900.0 * frac + 80.0 * np.sin(2 * np.pi * frac + b)
    qlmax = np.tile(np.linspace(900.0, 1400.0, n_blocks), (n_steps, 1))
    nprod = np.tile(producers, (n_steps, 1))
    winj = np.zeros((n_steps, n_blocks))
    winj[:, n_blocks // 2] = 300.0 * times * (0.5 + 0.5 * frac)
    ginj = np.zeros((n_steps, n_blocks))
    forecast = ForecastSchedule(times, pwf, qlmax, nprod, ginj, winj)

    result = run_forecast(network, forecast, config=config)
    if any(s != 1 for s in result.substeps):
        raise RuntimeError("truth run needed sub-stepping; history rows would not align")
    history = HistorySchedule(times, result.np, result.gp, result.wp, ginj, winj,
                              pobs=result.pressures.copy())

    noise_rng = np.random.default_rng(seed)
    noisy = result.pressures + noise_std * noise_rng.standard_normal(result.pressures.shape)
    history.pobs = noisy
    std = max(noise_std, 1e-3)
    ids = np.array(network.ids, dtype=float)
    obs = np.column_stack([
        np.repeat(times, n_blocks), np.tile(ids, n_steps), noisy.ravel(), np.full(noisy.size, std),
    ])
    return SyntheticCase(network, history, forecast, obs, truth, result.pressures, config)


def dead_schedule(network, times):
    """Forecast constraints that produce nothing: ``pwf = p_init``."""
    times = np.asarray(times, dtype=float)
    k, n = times.size, len(network)
    p_init = np.array([b.p_init for b in network.blocks])
    return ForecastSchedule(times, np.tile(p_init, (k, 1)), np.ones((k, n)), np.ones((k, n)),
                            np.zeros((k, n)), np.zeros((k, n)))
