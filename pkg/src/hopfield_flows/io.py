"""CSV export of traces.

Floats are written with 17 significant digits, which round-trips IEEE doubles
exactly; integers are written as integers.  Row order is the order given.
"""
from __future__ import annotations

import csv
import os

import numpy as np


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def export_trace(header, rows, path):
    """Write ``rows`` under ``header`` to ``path``; an empty trace gives a header-only file."""
    path = os.fspath(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                if len(row) != len(header):
                    raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
                w.writerow([format_value(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc.strerror or exc}") from exc
    return path


def read_trace(path):
    """Parse a trace written by :func:`export_trace` into (header, float array)."""
    with open(os.fspath(path), newline="") as fh:
        r = csv.reader(fh)
        header = tuple(next(r))
        data = [[float(v) for v in row] for row in r]
    arr = np.array(data, dtype=float).reshape(len(data), len(header))
    return header, arr
