"""CSV and JSON writers.  Numbers are written with 17 significant digits."""

import json
import math
from pathlib import Path

import numpy as np

FMT = "%.17g"


def fmt(x):
    return FMT % x


def write_table(path, header, columns):
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, fmt=FMT, delimiter=",", header=",".join(header), comments="")
    return Path(path)


def write_value_surface(path, table):
    K, N = table.ell.shape
    return write_table(path, ("t", "x", "ell"),
                       (np.repeat(table.times, N), np.tile(table.grid, K), table.ell.ravel()))


def write_policy(path, table):
    K, N = table.ell.shape
    return write_table(path, ("t", "x", "gamma", "log_eta"),
                       (np.repeat(table.times, N), np.tile(table.grid, K),
                         table.gamma.ravel(), table.log_eta.ravel()))


def read_value_surface(path):
    """``(times, grid, ell)`` from a value-surface CSV written by :func:`write_value_surface`."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise ValueError(f"{path}: expected columns t,x,ell")
    times = np.unique(data[:, 0])
    grid = np.unique(data[:, 1])
    if times.size * grid.size != data.shape[0]:
        raise ValueError(f"{path}: rows do not form a full (t, x) lattice")
    order = np.lexsort((data[:, 1], data[:, 0]))
    return times, grid, data[order, 2].reshape(times.size, grid.size)


def write_fan(path, fan):
    K, L = fan.consumption.shape
    return write_table(path, ("t", "level", "consumption", "wealth"),
                       (np.repeat(fan.times, L), np.tile(fan.levels, K),
                         fan.consumption.ravel(), fan.wealth.ravel()))


def write_trace(path, fan):
    c = fan.paths["consumption"]
    T, K = c.shape
    return write_table(path, ("scenario", "t", "consumption", "wealth", "shock"),
                       (np.repeat(np.arange(T), K), np.tile(fan.times, T), c.ravel(),
                         fan.paths["wealth"].ravel(), fan.paths["shock"].ravel()))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(fmt(x))
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")
    return Path(path)
