"""Static SVG plots drawn from persisted CSV files."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import read_csv  # noqa: E402

__all__ = ["PlotSpec", "emit_plot"]

KINDS = ("profile", "loglog-fit", "window-scaling")


@dataclass
class PlotSpec:
    """What to draw from a CSV file.

    ``fit`` carries fitted parameters: for "loglog-fit" the keys amplitude,
    power, rate (and optionally residual); for "window-scaling" slope and
    intercept of log y against log x, with ``expected_slope`` annotated.
    """

    kind: str
    x: str
    y: str
    xlabel: str = ""
    ylabel: str = ""
    yerr: str | None = None
    logx: bool = False
    logy: bool = True
    fit: dict = field(default_factory=dict)
    title: str = ""


def emit_plot(spec: PlotSpec, data_path, out_path) -> Path:
    if spec.kind not in KINDS:
        raise ValueError(f"unknown plot kind {spec.kind!r}")
    header, rows = read_csv(data_path)
    missing = [c for c in (spec.x, spec.y, spec.yerr) if c and c not in header]
    if missing:
        raise KeyError(f"missing columns: {', '.join(missing)}")
    col = {h: i for i, h in enumerate(header)}
    xs = np.array([r[col[spec.x]] for r in rows], dtype=float)
    ys = np.array([r[col[spec.y]] for r in rows], dtype=float)
    order = np.argsort(xs, kind="stable")
    xs, ys = xs[order], ys[order]
    errs = None
    if spec.yerr:
        errs = np.array([r[col[spec.yerr]] for r in rows], dtype=float)[order]

    plt.rcParams["svg.hashsalt"] = "plateau"
    fig, ax = plt.subplots(figsize=(6, 4))
    if errs is not None:
        ax.errorbar(xs, ys, yerr=errs, fmt="o", ms=3, label="data")[0].set_gid("data")
    else:
        ax.plot(xs, ys, "o", ms=3, label="data", gid="data")
    if spec.kind == "loglog-fit" and spec.fit:
        f = spec.fit
        grid = np.linspace(max(xs.min(), 1e-12), xs.max(), 200)
        ax.plot(grid, f["amplitude"] * grid ** (-f["power"]) * np.exp(-f.get("rate", 0.0) * grid),
                "-", label="fit")
        ax.annotate(f"residual = {f.get('residual', float('nan')):.3g}", xy=(0.05, 0.05),
                    xycoords="axes fraction")
    if spec.kind == "window-scaling" and spec.fit:
        f = spec.fit
        grid = np.linspace(xs.min(), xs.max(), 50)
        ax.plot(grid, np.exp(f["intercept"]) * grid ** f["slope"], "-", label="fit")
        ax.annotate(f"slope = {f['slope']:.3g} (expected {f.get('expected_slope', float('nan')):.3g})",
                    xy=(0.05, 0.9), xycoords="axes fraction")
    if spec.logy:
        ax.set_yscale("log")
    if spec.logx or spec.kind == "window-scaling":
        ax.set_xscale("log")
    ax.set_xlabel(spec.xlabel or spec.x)
    ax.set_ylabel(spec.ylabel or spec.y)
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(loc="upper right")
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out
