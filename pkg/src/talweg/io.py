"""Deterministic CSV and JSON writers that stamp every file with config hash and seed."""

from __future__ import annotations

import csv
import json
import os

import numpy as np


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path, header, rows, config_hash, seed):
    """RFC-4180 CSV with leading ``config_hash`` and ``seed`` columns.

    Floats are written with ``repr`` so they round-trip exactly.
    """
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["config_hash", "seed", *header])
        for row in rows:
            w.writerow([config_hash, str(seed), *(_cell(v) for v in row)])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def write_json(path, payload, config_hash, seed):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    doc = {"config_hash": config_hash, "seed": seed, **_jsonable(payload)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def read_csv(path):
    """Rows as dicts of strings (test and script helper)."""
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_trajectory(path, trajectory, field, config_hash, seed):
    """One row per sample: time (and index for discrete runs), coordinates, |x - x*|, f."""
    X = trajectory.states
    if X.ndim != 2:
        raise ValueError("write_trajectory takes a single trajectory")
    d = X.shape[1]
    dist = trajectory.distances()
    fvals = field.value(X)
    discrete = trajectory.kind == "discrete"
    header = (["k"] if discrete else []) + ["time", *[f"x{j + 1}" for j in range(d)], "dist", "f"]
    idx = trajectory.indices if discrete else None
    rows = []
    for k in range(len(X)):
        row = ([idx[k]] if discrete else []) + [trajectory.times[k], *X[k], dist[k], fvals[k]]
        rows.append(row)
    return write_csv(path, header, rows, config_hash, seed)
