"""Command-line entry point: ``matnet <command> --config PATH --out DIR``.

Exit codes: 0 success, 2 configuration or input error, 3 solver
non-convergence, 4 internal error.  ``MATNET_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import io
from ._newton import LinearSolveError, NonConvergenceError
from .forecast import ForecastFailure, run_forecast
from .history import SolverConfig, StepFailure, run_history
from .reservoir import ForecastSchedule
from .manifest import RunManifest

log = logging.getLogger("matnet")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INTERNAL = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def load_config(path):
    """TOML or JSON, detected from the content.  ``None`` gives ``{}``."""
    if path is None:
        return {}, None
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    text = path.read_text()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    else:
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a table/object")
    return data, path.parent


class Context:
    def __init__(self, args, command):
        self.config, self.base = load_config(args.config)
        seed = args.seed if args.seed is not None else self.config.get("seed", 0)
        if not isinstance(seed, int):
            raise ConfigError("seed must be an integer")
        self.seed = seed
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(command, self.config, seed, self.out)
        if args.config:
            self.manifest.add_input(args.config)

    def path(self, key, required=True):
        value = self.config.get(key)
        if value is None:
            if required:
                raise ConfigError(f"config is missing '{key}'")
            return None
        p = io.resolve(value, self.base)
        self.manifest.add_input(p)
        return p

    def solver(self):
        try:
            return SolverConfig.from_dict(self.config.get("solver", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"solver settings: {exc}") from None


def _known(config, allowed):
    extra = set(config) - set(allowed)
    if extra:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")


# --------------------------------------------------------------------------


def cmd_make_synthetic(args):
    from .synthetic import make_synthetic

    ctx = Context(args, "make-synthetic")
    cfg = ctx.config
    _known(cfg, {"seed", "n_blocks", "n_steps", "dt", "noise_std", "solver"})
    case = make_synthetic(
        n_blocks=int(cfg.get("n_blocks", 5)), n_steps=int(cfg.get("n_steps", 60)),
        dt=float(cfg.get("dt", 30.0)), noise_std=float(cfg.get("noise_std", 2.0)),
        seed=ctx.seed, config=ctx.solver(),
    )
    out = ctx.out
    ids = case.network.ids
    io.write_network(case.network, out / "network.json")
    io.write_history(case.history, ids, out / "history.csv")
    io.write_forecast_schedule(_extend(case.forecast), ids, out / "forecast.csv")
    io.write_observations(case.observations, out / "observations.csv")
    (out / "truth.json").write_text(json.dumps(case.truth, indent=2, sort_keys=True) + "\n")
    k, n = case.truth_pressures.shape
    io.write_csv(pd.DataFrame({"time": np.repeat(case.history.times, n), "block": np.tile(ids, k),
                               "p": case.truth_pressures.ravel()}), out / "truth_pressures.csv")
    params = [{"name": name, "lower": 0.5 * v, "upper": 1.5 * v, "transform": "log"}
              for name, v in case.truth.items() if name.startswith("ooip")]
    configs = {
        "simulate.json": {"network": "network.json", "history": "history.csv"},
        "forecast.json": {"network": "network.json", "history": "history.csv", "forecast": "forecast.csv"},
        "history_match.json": {"network": "network.json", "history": "history.csv",
                               "observations": "observations.csv", "parameters": params,
                               "n_ensemble": 50, "max_iter": 10, "seed": ctx.seed},
    }
    for name, doc in configs.items():
        (out / name).write_text(json.dumps(doc, indent=2) + "\n")
    ctx.manifest.stage("make-synthetic", "ok")
    ctx.manifest.finish()
    return EXIT_OK


def cmd_simulate(args):
    ctx = Context(args, "simulate")
    _known(ctx.config, {"seed", "network", "history", "solver"})
    network = io.read_network(ctx.path("network"))
    schedule = io.read_history(ctx.path("history"), network.ids)
    result = run_history(network, schedule, ctx.solver())
    io.write_csv(io.history_frame(result), ctx.out / "pressures.csv")
    io.write_csv(io.flux_frame(result), ctx.out / "fluxes.csv")
    ctx.manifest.stage("simulate", "ok")
    ctx.manifest.finish()
    return EXIT_OK


def cmd_history_match(args):
    from .history_match import (
        EnsembleSmootherMatcher, ObservationSet, Parameter, ParameterSpace, PressureForward,
    )

    ctx = Context(args, "history-match")
    cfg = ctx.config
    _known(cfg, {"seed", "network", "history", "observations", "parameters", "n_ensemble", "max_iter",
                 "alpha_init", "tol_objective", "tol_params", "max_retries", "robust",
                 "error_floor_fraction", "error_floor", "restarts", "solver"})
    network = io.read_network(ctx.path("network"))
    schedule = io.read_history(ctx.path("history"), network.ids)
    rows = io.read_observations(ctx.path("observations"))
    obs = ObservationSet.from_rows(rows, float(cfg.get("error_floor_fraction", 0.01)),
                                   float(cfg.get("error_floor", 0.0)))
    if "parameters" not in cfg or not cfg["parameters"]:
        raise ConfigError("config needs a non-empty 'parameters' list")
    try:
        space = ParameterSpace([Parameter(**p) for p in cfg["parameters"]])
    except TypeError as exc:
        raise ConfigError(f"parameters: {exc}") from None
    forward = PressureForward(network, schedule, obs, space.names, ctx.solver())
    n_e = cfg.get("n_ensemble", 50)
    if not isinstance(n_e, int) or n_e < 2:
        raise ConfigError("n_ensemble must be an integer >= 2")

    ens_rows, obj_rows, box_rows, summary = [], [], [], []
    for restart in range(int(cfg.get("restarts", 1))):
        est = EnsembleSmootherMatcher(
            n_ensemble=n_e, max_iter=int(cfg.get("max_iter", 20)), alpha_init=cfg.get("alpha_init"),
            tol_objective=float(cfg.get("tol_objective", 0.005)),
            tol_params=float(cfg.get("tol_params", 0.005)),
            max_retries=int(cfg.get("max_retries", 5)), robust=bool(cfg.get("robust", True)),
            random_state=ctx.seed + restart,
        ).fit(forward, space, obs)
        for rec in est.history_:
            obj_rows.append((restart, rec.iteration, rec.alpha, rec.objective, rec.n_active, rec.retries))
            for name, s in zip(space.names, rec.boxplot):
                box_rows.append((restart, rec.iteration, name, *s))
            for member, values in enumerate(rec.ensemble):
                ens_rows.append((restart, rec.iteration, member, *values))
        med = est.parameter_median()
        for name, v in zip(space.names, med):
            summary.append((restart, name, v))
        log.info("restart %d: objective %.6g -> %.6g", restart, est.objective_trace_[0],
                 est.objective_trace_[-1])
    io.write_csv(pd.DataFrame(ens_rows, columns=["restart", "iteration", "member", *space.names]),
                 ctx.out / "ensemble.csv")
    io.write_csv(pd.DataFrame(obj_rows, columns=["restart", "iteration", "alpha", "objective",
                                                 "n_active", "retries"]), ctx.out / "objective.csv")
    io.write_csv(pd.DataFrame(box_rows, columns=["restart", "iteration", "parameter", "min", "q1",
                                                 "median", "q3", "max"]), ctx.out / "boxplot.csv")
    io.write_csv(pd.DataFrame(summary, columns=["restart", "parameter", "median"]),
                 ctx.out / "posterior_median.csv")
    ctx.manifest.stage("history-match", "ok")
    ctx.manifest.finish()
    return EXIT_OK


def cmd_forecast(args):
    ctx = Context(args, "forecast")
    cfg = ctx.config
    _known(cfg, {"seed", "network", "history", "forecast", "solver", "min_dt_fraction"})
    network = io.read_network(ctx.path("network"))
    schedule = io.read_forecast(ctx.path("forecast"), network.ids)
    hist_path = ctx.path("history", required=False)
    history = io.read_history(hist_path, network.ids) if hist_path else None
    solver = ctx.solver()
    min_frac = float(cfg.get("min_dt_fraction", 1.0 / 64))
    ids = network.ids
    columns = ["time", "block", "p", "np", "gp", "wp"]

    if args.blind_test is not None:
        frac = args.blind_test
        if not 0 <= frac < 1:
            raise ConfigError("--blind-test FRACTION must be in [0, 1)")
        if history is None:
            raise ConfigError("--blind-test needs a 'history' schedule")
        k_total = history.times.size
        n_keep = int(round((1 - frac) * k_total))
        if n_keep >= k_total:
            print("blind test: fraction leaves no masked steps; forecast is empty", file=sys.stderr)
            io.write_csv(pd.DataFrame(columns=columns), ctx.out / "forecast.csv")
            ctx.manifest.stage("blind-test", "empty")
            ctx.manifest.finish()
            return EXIT_OK
        full = run_history(network, history, solver)
        if n_keep > 0:
            state = run_history(network, history.truncate(n_keep), solver).final_state
        else:
            state = None
        t_cut = history.times[n_keep - 1] if n_keep > 0 else 0.0
        tail = _tail(schedule, t_cut, history.times[-1])
        if tail is None or not np.array_equal(tail.times, history.times[n_keep:]):
            raise ConfigError("forecast schedule must cover the masked history times exactly")
        result = run_forecast(network, tail, state, solver, min_frac)
        io.write_csv(io.forecast_frame(result), ctx.out / "forecast.csv")
        ref = full.pressures[n_keep:]
        k, n = ref.shape
        err = result.pressures - ref
        io.write_csv(pd.DataFrame({
            "time": np.repeat(tail.times, n), "block": np.tile(ids, k),
            "p_forecast": result.pressures.ravel(), "p_history": ref.ravel(), "error": err.ravel(),
        }), ctx.out / "blind_test.csv")
        p_init = np.array([b.p_init for b in network.blocks])
        decline = p_init - full.pressures[-1]
        max_err = np.max(np.abs(err), axis=0)
        summary = pd.DataFrame({"block": ids, "max_abs_error": max_err, "pressure_decline": decline,
                                "relative_error": max_err / np.abs(decline)})
        io.write_csv(summary, ctx.out / "blind_test_summary.csv")
        ctx.manifest.stage("blind-test", "ok")
    else:
        state = None
        if history is not None:
            state = run_history(network, history, solver).final_state
            schedule = _tail(schedule, state.time)
        if schedule is None:
            raise ConfigError("forecast schedule has no times after the end of history")
        result = run_forecast(network, schedule, state, solver, min_frac)
        io.write_csv(io.forecast_frame(result), ctx.out / "forecast.csv")
        ctx.manifest.stage("forecast", "ok")
    ctx.manifest.finish()
    return EXIT_OK


def _tail(schedule, t_cut, t_end=np.inf):
    keep = np.flatnonzero((schedule.times > t_cut) & (schedule.times <= t_end))
    if keep.size == 0:
        return None
    return schedule.slice(int(keep[0]), int(keep[-1]) + 1)


def _extend(schedule, factor=1.5):
    """Continue the last controls and injection rates past the horizon."""
    t = schedule.times
    dt = t[-1] - t[-2] if t.size > 1 else t[-1]
    extra = t[-1] + dt * np.arange(1, int(round((factor - 1) * t.size)) + 1)
    if extra.size == 0:
        return schedule

    def cumulative(c):
        rate = (c[-1] - c[-2]) / dt if len(c) > 1 else c[-1] / dt
        return np.vstack([c, c[-1] + np.outer(extra - t[-1], rate)])

    def hold(a):
        return np.vstack([a, np.repeat(a[-1:], extra.size, axis=0)])

    return ForecastSchedule(np.concatenate([t, extra]), hold(schedule.pwf), hold(schedule.qlmax),
                            hold(schedule.nproducers), cumulative(schedule.ginj),
                            cumulative(schedule.winj))


def cmd_cluster(args):
    from .clustering import (
        KPrototypes, SVMZoneMapper, TemporalKMeans, WellFeatureEncoder, adaptive_split, dtw_matrix,
        elbow_select, fuse_labels, normalize_series,
    )

    ctx = Context(args, "cluster")
    cfg = ctx.config
    _known(cfg, {"seed", "wells", "channels", "numeric", "categorical", "k_range", "k", "gamma",
                 "temporal", "min_size", "zoning"})
    wells_path = ctx.path("wells")
    wells = io.read_table(wells_path, ["well", "x", "y"], optional=_any_columns(wells_path),
                          numeric=["x", "y"])
    wells["well"] = wells["well"].astype(str)
    if wells["well"].duplicated().any():
        raise ConfigError(f"{wells_path}: duplicate well names")
    numeric = cfg.get("numeric", ["x", "y"])
    categorical = cfg.get("categorical", [])
    encoder = WellFeatureEncoder(numeric, categorical).fit(wells)
    X = encoder.transform(wells)
    cat_idx = encoder.categorical_indices_
    gamma = cfg.get("gamma")
    seed = ctx.seed

    k_lo, k_hi = cfg.get("k_range", [1, min(8, len(wells))])
    k_hi = min(int(k_hi), len(wells))

    def fit_cost(data, k):
        return KPrototypes(k, gamma=gamma, categorical=cat_idx, random_state=seed).fit(data).cost_

    elbow = elbow_select(X, range(int(k_lo), k_hi + 1), fit_cost)
    k = int(cfg.get("k", elbow.k))
    io.write_csv(pd.DataFrame({"k": elbow.ks.astype(int), "cost": elbow.costs, "distance": elbow.distances}),
                 ctx.out / "cost_curve.csv")
    if elbow.degenerate:
        log.warning("cost curve has no knee; using k = %d", elbow.k)
    spatial = KPrototypes(k, gamma=gamma, categorical=cat_idx, random_state=seed).fit(X).labels_
    ctx.manifest.stage("spatial", f"k={k}")

    labels = spatial
    channels = cfg.get("channels", [])
    if channels:
        tcfg = cfg.get("temporal", {})
        weights = tuple(tcfg.get("weights", (1.0, 1.0, 1.0)))
        metric = tcfg.get("metric", "sqeuclidean")
        dist = np.zeros((len(wells), len(wells)))
        for ch in channels:
            p = io.resolve(ch, ctx.base)
            ctx.manifest.add_input(p)
            series = io.read_series(p)
            missing = set(wells["well"]) - set(series)
            if missing:
                raise ConfigError(f"{p}: no series for wells {sorted(missing)}")
            seqs = normalize_series([series[w][1] for w in wells["well"]])
            dist += dtw_matrix(seqs, weights, metric)
        dist /= len(channels)
        k_t = int(tcfg.get("k", 2))
        temporal = TemporalKMeans(k_t, weights, metric, random_state=seed).fit_distances(dist).labels_
        temporal = adaptive_split(dist, temporal, float(tcfg.get("threshold", 0.15)),
                                  int(tcfg.get("max_depth", 4)), random_state=seed)
        numeric_part = X.iloc[:, :len(encoder.numeric_columns_)].to_numpy(float)
        labels = fuse_labels(spatial, temporal, numeric_part, int(cfg.get("min_size", 2)))
        io.write_csv(pd.DataFrame({"well": wells["well"], "spatial": spatial, "temporal": temporal}),
                     ctx.out / "labels_detail.csv")
        ctx.manifest.stage("temporal", f"{len(np.unique(temporal))} clusters")

    io.write_csv(pd.DataFrame({"well": wells["well"], "cluster": labels}), ctx.out / "assignments.csv")

    zcfg = cfg.get("zoning", {})
    zones = SVMZoneMapper(kernel=zcfg.get("kernel", "rbf"), C=float(zcfg.get("C", 10.0)),
                          gamma=zcfg.get("gamma", "scale"), degree=int(zcfg.get("degree", 3)),
                          resolution=int(zcfg.get("resolution", 60)))
    zones.fit(wells[["x", "y"]].to_numpy(float), labels)
    raster = pd.DataFrame(zones.raster_rows(), columns=["x", "y", "label"])
    io.write_csv(raster, ctx.out / "zones.csv")
    polys = {str(k): v for k, v in zones.polygons().items()}
    (ctx.out / "zones.json").write_text(json.dumps(polys, sort_keys=True, default=_jsonable) + "\n")
    ctx.manifest.stage("zoning", f"{zones.n_zones_} zones, training accuracy {zones.training_accuracy_:.3f}")
    ctx.manifest.finish()
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, tuple):
        return list(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj).__name__)


def _any_columns(path):
    try:
        header = pd.read_csv(path, nrows=0).columns
    except Exception:
        return ()
    return tuple(str(c).strip().lower() for c in header)


COMMANDS = {
    "cluster": cmd_cluster,
    "simulate": cmd_simulate,
    "history-match": cmd_history_match,
    "forecast": cmd_forecast,
    "make-synthetic": cmd_make_synthetic,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="matnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML or JSON config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        if name == "forecast":
            p.add_argument("--blind-test", type=float, metavar="FRACTION",
                           help="mask this trailing fraction of history and forecast it")
    return parser


def _setup_logging():
    level = os.environ.get("MATNET_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (StepFailure, ForecastFailure, NonConvergenceError, LinearSolveError) as exc:
        print(f"matnet {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, io.IngestionError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"matnet {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"matnet {args.command}: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
