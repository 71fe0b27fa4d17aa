"""Deterministic text serialization shared by the batch runner.

All floats are written with repr(float(x)), which round-trips exactly and
makes output files byte-identical across runs with the same inputs.  CSV
files carry '# key = value' comment lines followed by a column-name row;
the layout is versioned so downstream scripts can refuse unknown formats.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

CSV_VERSION = "1"


def fmt(x) -> str:
    return repr(float(x))


def write_keyvals(path, mapping: dict) -> None:
    with open(path, "w") as fh:
        for key, val in mapping.items():
            fh.write(f"{key} = {val}\n")


def read_keyvals(path) -> dict:
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def write_csv(path, col_names, columns, meta: dict | None = None) -> None:
    """Column-oriented CSV with a versioned comment header."""
    cols = [np.asarray(c) for c in columns]
    n = cols[0].size
    if any(c.size != n for c in cols):
        raise ValueError("columns must have equal length")
    with open(path, "w") as fh:
        fh.write(f"# qfluor-csv = {CSV_VERSION}\n")
        for key, val in (meta or {}).items():
            fh.write(f"# {key} = {val}\n")
        fh.write(",".join(col_names) + "\n")
        for i in range(n):
            fh.write(",".join(fmt(c[i]) for c in cols) + "\n")


def read_csv(path):
    """Inverse of write_csv: returns (meta, col_names, data array of shape (n, n_cols))."""
    meta = {}
    col_names = None
    rows = []
    for raw in Path(path).read_text().splitlines():
        if raw.startswith("#"):
            body = raw[1:].strip()
            key, _, val = body.partition("=")
            meta[key.strip()] = val.strip()
            continue
        if not raw.strip():
            continue
        if col_names is None:
            col_names = raw.split(",")
            continue
        rows.append([float(x) for x in raw.split(",")])
    if col_names is None:
        raise ValueError(f"{path}: no column header found")
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(col_names)))
    return meta, col_names, data
