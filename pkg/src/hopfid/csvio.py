"""Column-oriented CSV files with a leading ``#`` schema comment."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_columns(path, columns: dict, description: str = "") -> Path:
    """Write equal-length columns; the first line is ``# <description>; columns: a,b,...``."""
    path = Path(path)
    names = list(columns)
    data = [np.asarray(columns[n]) if not isinstance(columns[n], list) else columns[n]
            for n in names]
    n_rows = {len(c) for c in data}
    if len(n_rows) > 1:
        raise ValueError("columns have different lengths")
    with path.open("w", newline="") as fh:
        schema = ",".join(names)
        fh.write(f"# {description}; columns: {schema}\n" if description
                 else f"# columns: {schema}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*data):
            writer.writerow([_fmt(v) for v in row])
    return path


def read_columns(path) -> dict[str, np.ndarray]:
    """Read a file written by :func:`write_columns` into float arrays keyed by column name."""
    path = Path(path)
    with path.open() as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    rows = [row for row in reader]
    cols = {}
    for j, name in enumerate(header):
        try:
            cols[name] = np.array([float(row[j]) for row in rows])
        except ValueError:
            cols[name] = np.array([row[j] for row in rows])
    return cols
