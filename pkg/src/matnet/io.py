"""Readers and writers for the text file formats used by the CLI.

Every numeric value is written with 12 significant digits.  Readers check
the declared invariants and report the offending file and line.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .aquifer import AquiferParams
from .pvt import PvtTable
from .relperm import RelPermCurves
from .reservoir import Block, ForecastSchedule, HistorySchedule, ReservoirNetwork

FLOAT_FORMAT = "%.12g"
BUILTIN_PREFIX = "builtin:"

HISTORY_COLUMNS = ["time", "block", "np", "gp", "wp", "ginj", "winj"]
FORECAST_COLUMNS = ["time", "block", "pwf", "qlmax", "nproducers", "ginj", "winj"]
OBSERVATION_COLUMNS = ["time", "block", "pobs", "std"]


class IngestionError(ValueError):
    """Malformed or invalid input file."""


def resolve(path, base=None):
    """Resolve ``builtin:<name>`` to bundled data and relative paths
    against ``base``."""
    path = str(path)
    if path.startswith(BUILTIN_PREFIX):
        return Path(str(resources.files("matnet") / "data" / path[len(BUILTIN_PREFIX):]))
    p = Path(path)
    if base is not None and not p.is_absolute():
        p = Path(base) / p
    return p


def write_csv(frame, path):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_table(path, required, optional=(), numeric=None):
    """Read a CSV, checking the header and that numeric columns parse."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path}: file not found")
    try:
        frame = pd.read_csv(path, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise IngestionError(f"{path}: file is empty") from None
    except pd.errors.ParserError as exc:
        raise IngestionError(f"{path}: {exc}") from None
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise IngestionError(f"{path}: missing columns {', '.join(missing)}")
    unknown = [c for c in frame.columns if c not in required and c not in optional]
    if unknown:
        raise IngestionError(f"{path}: unexpected columns {', '.join(unknown)}")
    if frame.empty:
        raise IngestionError(f"{path}: no data rows")
    for col in numeric if numeric is not None else [c for c in frame.columns]:
        if col not in frame.columns:
            continue
        values = pd.to_numeric(frame[col], errors="coerce")
        bad = values.isna() & ~(frame[col].isna() & (col in optional))
        if bad.any():
            line = int(np.flatnonzero(bad.to_numpy())[0]) + 2
            raise IngestionError(f"{path}:{line}: column {col!r} is not numeric ({frame[col].iloc[line - 2]!r})")
        frame[col] = values.astype(float)
    return frame


def _grid(frame, path, columns, block_ids=None):
    """Pivot a long ``time,block,...`` table into (n_times, n_blocks) arrays."""
    if frame.duplicated(["time", "block"]).any():
        line = int(np.flatnonzero(frame.duplicated(["time", "block"]).to_numpy())[0]) + 2
        raise IngestionError(f"{path}:{line}: duplicate (time, block) row")
    frame = frame.assign(block=frame["block"].astype(int))
    times = np.sort(frame["time"].unique())
    blocks = sorted(frame["block"].unique()) if block_ids is None else list(block_ids)
    unknown = set(frame["block"]) - set(blocks)
    if unknown:
        raise IngestionError(f"{path}: unknown block ids {sorted(unknown)}")
    if len(frame) != len(times) * len(blocks):
        raise IngestionError(f"{path}: every block needs a row at every time")
    out = {}
    for col in columns:
        if col not in frame.columns:
            out[col] = None
            continue
        wide = frame.pivot(index="time", columns="block", values=col).reindex(index=times, columns=blocks)
        out[col] = wide.to_numpy(float)
    return times, blocks, out


def _wrap(path, fn):
    try:
        return fn()
    except IngestionError:
        raise
    except ValueError as exc:
        raise IngestionError(f"{path}: {exc}") from None


def read_history(path, block_ids=None):
    frame = read_table(path, HISTORY_COLUMNS, optional=("pobs",))
    times, _, cols = _grid(frame, path, HISTORY_COLUMNS[2:] + ["pobs"], block_ids)
    return _wrap(path, lambda: HistorySchedule(times, cols["np"], cols["gp"], cols["wp"], cols["ginj"],
                                               cols["winj"], cols["pobs"]))


def write_history(schedule, block_ids, path):
    k, n = schedule.np.shape
    data = {
        "time": np.repeat(schedule.times, n),
        "block": np.tile(block_ids, k),
        "np": schedule.np.ravel(), "gp": schedule.gp.ravel(), "wp": schedule.wp.ravel(),
        "ginj": schedule.ginj.ravel(), "winj": schedule.winj.ravel(),
    }
    if schedule.pobs is not None:
        data["pobs"] = schedule.pobs.ravel()
    write_csv(pd.DataFrame(data), path)


def read_forecast(path, block_ids=None):
    frame = read_table(path, FORECAST_COLUMNS)
    times, _, cols = _grid(frame, path, FORECAST_COLUMNS[2:], block_ids)
    return _wrap(path, lambda: ForecastSchedule(times, cols["pwf"], cols["qlmax"], cols["nproducers"],
                                                cols["ginj"], cols["winj"]))


def write_forecast_schedule(schedule, block_ids, path):
    k, n = schedule.pwf.shape
    write_csv(pd.DataFrame({
        "time": np.repeat(schedule.times, n), "block": np.tile(block_ids, k),
        "pwf": schedule.pwf.ravel(), "qlmax": schedule.qlmax.ravel(),
        "nproducers": schedule.nproducers.ravel().astype(int),
        "ginj": schedule.ginj.ravel(), "winj": schedule.winj.ravel(),
    }), path)


def read_observations(path):
    frame = read_table(path, OBSERVATION_COLUMNS)
    if (frame["std"] <= 0).any():
        line = int(np.flatnonzero((frame["std"] <= 0).to_numpy())[0]) + 2
        raise IngestionError(f"{path}:{line}: std must be positive")
    return frame[OBSERVATION_COLUMNS].to_numpy(float)


def write_observations(rows, path):
    rows = np.asarray(rows, dtype=float)
    frame = pd.DataFrame(rows, columns=OBSERVATION_COLUMNS)
    frame["block"] = frame["block"].astype(int)
    write_csv(frame, path)


# --------------------------------------------------------------------------
# network


def _aquifer_from_json(entry, p_init, where):
    if entry is None:
        return None
    keys = set(entry)
    if keys == {"wei", "j"}:
        return AquiferParams(float(entry["wei"]), float(entry["j"]), p_init)
    if keys == {"wi", "theta", "ct", "j"}:
        return AquiferParams.from_volume(float(entry["wi"]), float(entry["theta"]), float(entry["ct"]),
                                         float(entry["j"]), p_init)
    raise IngestionError(f"{where}: aquifer must have keys {{wei, j}} or {{wi, theta, ct, j}}")


BLOCK_FIELDS = ("id", "n_foi", "g_fgi", "s_wi", "c_f", "c_w", "p_init", "z", "pvt", "relperm")


def read_network(path):
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path}: file not found")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    base = path.parent
    if not isinstance(data, dict) or "blocks" not in data or "connections" not in data:
        raise IngestionError(f"{path}: network needs 'blocks' and 'connections'")
    tables = {}

    def load(kind, ref):
        key = (kind, str(resolve(ref, base)))
        if key not in tables:
            loader = PvtTable.from_csv if kind == "pvt" else RelPermCurves.from_csv
            target = resolve(ref, base)
            if not target.exists():
                raise IngestionError(f"{path}: referenced {kind} file {target} not found")
            tables[key] = _wrap(target, lambda: loader(target))
        return tables[key]

    blocks = []
    for k, entry in enumerate(data["blocks"]):
        where = f"{path}: blocks[{k}]"
        missing = [f for f in BLOCK_FIELDS if f not in entry]
        if missing:
            raise IngestionError(f"{where}: missing fields {', '.join(missing)}")
        extra = set(entry) - set(BLOCK_FIELDS) - {"aquifer"}
        if extra:
            raise IngestionError(f"{where}: unknown fields {', '.join(sorted(extra))}")
        p_init = float(entry["p_init"])
        aquifer = _wrap(where, lambda: _aquifer_from_json(entry.get("aquifer"), p_init, where))
        blocks.append(_wrap(where, lambda: Block(
            int(entry["id"]), float(entry["n_foi"]), float(entry["g_fgi"]), float(entry["s_wi"]),
            float(entry["c_f"]), float(entry["c_w"]), p_init, float(entry["z"]),
            load("pvt", entry["pvt"]), load("relperm", entry["relperm"]), aquifer)))
    ids = [b.id for b in blocks]
    triples = []
    for k, c in enumerate(data["connections"]):
        where = f"{path}: connections[{k}]"
        if set(c) != {"i", "j", "t_ij"}:
            raise IngestionError(f"{where}: connection needs exactly i, j, t_ij")
        if c["i"] not in ids or c["j"] not in ids:
            raise IngestionError(f"{where}: unknown block id")
        if c["i"] == c["j"]:
            raise IngestionError(f"{where}: self-connection")
        triples.append((ids.index(c["i"]), ids.index(c["j"]), float(c["t_ij"])))
    return _wrap(path, lambda: ReservoirNetwork(blocks, triples, data.get("t_max")))


def write_network(network, path):
    """Write the network JSON plus its PVT and relperm tables next to it."""
    path = Path(path)
    base = path.parent
    names = {}

    def table_file(obj, kind):
        key = id(obj)
        if key not in names:
            count = sum(1 for k in names.values() if k.startswith(kind))
            name = f"{kind}.csv" if count == 0 else f"{kind}_{count + 1}.csv"
            obj.to_csv(base / name)
            names[key] = name
        return names[key]

    blocks = []
    for b in network.blocks:
        entry = {
            "id": b.id, "n_foi": b.n_foi, "g_fgi": b.g_fgi, "s_wi": b.s_wi, "c_f": b.c_f,
            "c_w": b.c_w, "p_init": b.p_init, "z": b.z,
            "pvt": table_file(b.pvt, "pvt"), "relperm": table_file(b.relperm, "relperm"),
        }
        if b.aquifer is not None:
            entry["aquifer"] = {"wei": b.aquifer.wei, "j": b.aquifer.j}
        blocks.append(entry)
    conns = [{"i": network.ids[i], "j": network.ids[j], "t_ij": t} for i, j, t in network.connections()]
    doc = {"blocks": blocks, "connections": conns, "t_max": network.t_max}
    path.write_text(json.dumps(doc, indent=2) + "\n")


# --------------------------------------------------------------------------
# solver outputs


def history_frame(result):
    k, n = result.pressures.shape
    return pd.DataFrame({
        "time": np.repeat(result.times, n),
        "block": np.tile(result.block_ids, k),
        "p": result.pressures.ravel(),
        "so": result.saturations[:, 0, :].ravel(),
        "sg": result.saturations[:, 1, :].ravel(),
        "sw": result.saturations[:, 2, :].ravel(),
        "we": result.w_e.ravel(),
    })


def flux_frame(result):
    return pd.DataFrame(result.flux_records(), columns=["time", "i", "j", "phase", "flux_rb"])


def forecast_frame(result):
    k, n = result.pressures.shape
    return pd.DataFrame({
        "time": np.repeat(result.times, n),
        "block": np.tile(result.block_ids, k),
        "p": result.pressures.ravel(),
        "np": result.np.ravel(), "gp": result.gp.ravel(), "wp": result.wp.ravel(),
    })


def read_series(path):
    """``well,time,value`` channel file as {well: (times, values)} in file order."""
    frame = read_table(path, ["well", "time", "value"], numeric=["time", "value"])
    out = {}
    for well, g in frame.groupby("well", sort=False):
        g = g.sort_values("time", kind="stable")
        out[str(well)] = (g["time"].to_numpy(float), g["value"].to_numpy(float))
    return out
