"""CSV/JSON persistence and run manifests.

Floats are written with ``repr``, Python's shortest round-trip decimal form,
so a CSV read back with ``float()`` reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .lattice import DualGrid, FieldTable

__all__ = [
    "format_value",
    "write_csv",
    "read_csv",
    "field_table_rows",
    "dual_grid_rows",
    "series_rows",
    "write_json",
    "read_json",
    "write_manifest",
    "to_jsonable",
]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return path


def _parse(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_csv(path) -> tuple[list[str], list[list]]:
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [[_parse(c) for c in row] for row in r]


def field_table_rows(table: FieldTable):
    """Header and rows ``x1..xd,value`` (complex tables get ``re,im``)."""
    d = table.dim
    cplx = np.iscomplexobj(table.values)
    header = [f"x{i + 1}" for i in range(d)] + (["re", "im"] if cplx else ["value"])
    rows = []
    for x, v in table.items():
        rows.append(list(x) + ([float(v.real), float(v.imag)] if cplx else [float(v)]))
    return header, rows


def dual_grid_rows(grid: DualGrid):
    header = [f"k{i + 1}" for i in range(grid.dim)] + ["re", "im"]
    vals = np.asarray(grid.values).ravel()
    rows = [list(k) + [float(v.real), float(v.imag)] for k, v in zip(grid.frequencies(), vals)]
    return header, rows


def series_rows(series, points="all"):
    """Header and rows ``n,x1..xd,coeff,poly_q`` for a SeriesTable.

    ``poly_q`` is the exact integer polynomial in q = 1 - beta, written as
    semicolon-separated coefficients of q^0, q^1, ...
    """
    d = series.dim
    header = ["n"] + [f"x{i + 1}" for i in range(d)] + ["coeff", "poly_q"]
    rows = []
    for n in range(series.nmax + 1):
        for b, p in enumerate(series.points):
            c = series.counts[n, b]
            if not c.any():
                continue
            nz = np.nonzero(c)[0]
            poly = ";".join(str(int(v)) for v in c[: nz.max() + 1])
            rows.append([n] + [int(v) for v in p] + [float(series.coeff[n, b]), poly])
    return header, rows


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if hasattr(obj, "__dataclass_fields__"):
        return {k: to_jsonable(getattr(obj, k)) for k in obj.__dataclass_fields__}
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def write_manifest(out_dir, subcommand: str, config: dict, outputs, wall_time: float) -> Path:
    data = {
        "subcommand": subcommand,
        "config": config,
        "outputs": [str(Path(o).name) for o in outputs],
        "tool": {"name": "plateau", "version": __version__,
                 "python": platform.python_version(), "numpy": np.__version__},
        "argv": sys.argv[1:],
        "wall_time_s": wall_time,
    }
    return write_json(Path(out_dir) / "manifest.json", data)
