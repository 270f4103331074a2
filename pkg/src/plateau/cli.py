"""Command-line front end: ``plateau <subcommand> [flags]``.

Configuration precedence is flags > ``--config`` JSON file > defaults; the
merged configuration is echoed into ``manifest.json`` beside the outputs, and
``plateau rerun manifest.json`` replays it.

Exit codes: 0 success, 2 configuration error, 3 budget refusal, 4 a check
subcommand whose assertion failed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io as pio

ENV_OUT = "PLATEAU_OUT_DIR"

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_CHECK = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class CheckFailed(RuntimeError):
    pass


DEFAULTS = {
    "srw": {"dim": None, "mu": None, "mu_omega": None, "box": 20, "nmax": 200, "grid": 64,
            "fit_window": None, "route": "series", "radius": 10, "out": "srw.csv"},
    "torus-srw": {"dim": None, "period": None, "z": None, "z_omega": None, "rho": None, "p": None,
                  "route": "fourier", "samples": 100000, "seed": 0, "shards": 1, "shells": 4,
                  "check": None, "out": "torus_srw.csv"},
    "wsaw": {"dim": None, "beta": None, "nmax": None, "geometry": "zd", "observable": None,
             "z": None, "window": None, "tilt": 0.0, "allow_over_budget": False,
             "out": "wsaw.csv"},
    "wsaw-mc": {"dim": None, "period": None, "beta": None, "z": None, "window": False,
                "zc": None, "c4": 1.0, "samples": 100000, "shards": 1, "seed": 0,
                "survival": None, "out": "wsaw_mc.csv"},
    "lace": {"dim": None, "beta": None, "z": None, "nmax": None, "grid": None, "box": 12,
             "tilt": 0.0, "out": "lace.json"},
    "plot": {"kind": None, "data": None, "x": None, "y": None, "yerr": None, "fit": None,
             "out": "plot.svg"},
}


def _window(s):
    if s is None or isinstance(s, (list, tuple)):
        return s
    try:
        a, b = str(s).split(":")
        return int(a), int(b)
    except ValueError as exc:
        raise ConfigError(f"window must look like a:b, got {s!r}") from exc


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plateau", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand")

    def common(sp):
        sp.add_argument("--out", help="output file name (inside the output directory)")
        sp.add_argument("--out-dir", help=f"output directory (default ${ENV_OUT} or .)")
        sp.add_argument("--config", help="JSON file with defaults for this subcommand")
        sp.add_argument("--plot", choices=["on", "off"], default=None)

    s = sub.add_parser("srw", help="simple random walk Green function on Z^d")
    s.add_argument("--dim", type=int)
    s.add_argument("--mu", type=float)
    s.add_argument("--mu-omega", type=float)
    s.add_argument("--box", type=int)
    s.add_argument("--nmax", type=int)
    s.add_argument("--grid", type=int)
    s.add_argument("--fit-window")
    s.add_argument("--route", choices=["series", "fourier", "bessel"])
    s.add_argument("--radius", type=int, help="tabulate canonical points with ||x||_inf <= radius")
    common(s)

    t = sub.add_parser("torus-srw", help="simple random walk on the torus")
    t.add_argument("--dim", type=int)
    t.add_argument("--period", type=int)
    t.add_argument("--z", type=float)
    t.add_argument("--z-omega", type=float)
    t.add_argument("--rho", type=float, help="z = 1/Omega - rho")
    t.add_argument("--p", type=float, help="z = 1/Omega - r^(-p)")
    t.add_argument("--route", choices=["fourier", "solve", "unfold", "mc", "plateau"])
    t.add_argument("--samples", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--shards", type=int)
    t.add_argument("--shells", type=int)
    t.add_argument("--check", choices=["plateau"])
    common(t)

    w = sub.add_parser("wsaw", help="exact enumeration of weakly self-avoiding walk")
    w.add_argument("--dim", type=int)
    w.add_argument("--beta", type=float)
    w.add_argument("--nmax", type=int)
    w.add_argument("--geometry", help="zd or torus:r")
    w.add_argument("--observable",
                   choices=["series", "chi", "bubble", "mass", "zc", "unfold-check"])
    w.add_argument("--z", type=float)
    w.add_argument("--window")
    w.add_argument("--tilt", type=float)
    w.add_argument("--allow-over-budget", action="store_true", default=None)
    common(w)

    m = sub.add_parser("wsaw-mc", help="Monte Carlo for the torus WSAW two-point function")
    m.add_argument("--dim", type=int)
    m.add_argument("--period", type=int)
    m.add_argument("--beta", type=float)
    m.add_argument("--z", type=float)
    m.add_argument("--window", action="store_true", default=None,
                   help="z = zc - c4 beta^(1/2) r^(-d/2); needs --zc")
    m.add_argument("--zc", type=float)
    m.add_argument("--c4", type=float)
    m.add_argument("--samples", type=int)
    m.add_argument("--shards", type=int)
    m.add_argument("--seed", type=int)
    m.add_argument("--survival", type=float)
    common(m)

    la = sub.add_parser("lace", help="lace-expansion decomposition from enumerated series")
    la.add_argument("--dim", type=int)
    la.add_argument("--beta", type=float)
    la.add_argument("--z", type=float)
    la.add_argument("--nmax", type=int)
    la.add_argument("--grid", type=int)
    la.add_argument("--box", type=int)
    la.add_argument("--tilt", type=float)
    common(la)

    pl = sub.add_parser("plot", help="draw an SVG from a persisted CSV")
    pl.add_argument("--kind", choices=["profile", "loglog-fit", "window-scaling"])
    pl.add_argument("--data")
    pl.add_argument("--x")
    pl.add_argument("--y")
    pl.add_argument("--yerr")
    pl.add_argument("--fit", help="JSON object with fit parameters")
    common(pl)

    r = sub.add_parser("rerun", help="replay a run from its manifest")
    r.add_argument("manifest")
    r.add_argument("--out-dir")
    return p


def merge_config(subcommand: str, args: dict, file_cfg: dict | None = None) -> dict:
    cfg = dict(DEFAULTS[subcommand])
    for k, v in (file_cfg or {}).items():
        if k not in cfg:
            raise ConfigError(f"unknown config key {k!r} for {subcommand}")
        cfg[k] = v
    for k, v in args.items():
        if k in cfg and v is not None:
            cfg[k] = v
    return cfg


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-")
                                                                     for k in missing))


def _check_dim(cfg):
    if cfg["dim"] < 1:
        raise ConfigError("dimension must be >= 1")


# --------------------------------------------------------------------------
# Handlers; each returns the list of files written
# --------------------------------------------------------------------------


def run_srw(cfg, out_dir: Path, plot: bool):
    from .lattice import canonical_points
    from .srw import GreenParams, fit_massive_decay, fourier_error_budget, green_bessel, \
        green_fourier, green_series

    _require(cfg, "dim")
    _check_dim(cfg)
    d = cfg["dim"]
    if (cfg["mu"] is None) == (cfg["mu_omega"] is None):
        raise ConfigError("give exactly one of --mu and --mu-omega")
    a = cfg["mu_omega"] if cfg["mu_omega"] is not None else cfg["mu"] * 2 * d
    if not 0 <= a <= 1:
        raise ConfigError("need 0 <= mu*Omega <= 1")
    if cfg["grid"] % 2:
        raise ConfigError("--grid must be even")
    params = GreenParams.from_mu_omega(d, a, box=cfg["box"], nmax=cfg["nmax"], grid=cfg["grid"])
    route = cfg["route"]
    if route == "series" and a >= 1:
        raise ConfigError("the series route needs mu*Omega < 1")
    radius = min(cfg["radius"], cfg["box"])
    rows = []
    for p in canonical_points(d, radius):
        x = tuple(int(c) for c in p)
        if route == "series":
            v = green_series(params, x)
            rows.append(list(x) + [v.value, v.error_bound])
        elif route == "fourier":
            rows.append(list(x) + [green_fourier(params, x), fourier_error_budget(params, x)])
        else:
            rows.append(list(x) + [green_bessel(d, a, x), float("nan")])
    header = [f"x{i + 1}" for i in range(d)] + ["value", "error"]
    outs = [pio.write_csv(out_dir / cfg["out"], header, rows)]
    win = _window(cfg["fit_window"])
    if win is not None:
        fit = fit_massive_decay(params, window=win)
        stem = Path(cfg["out"]).stem
        outs.append(pio.write_json(out_dir / f"{stem}_fit.json", fit))
        ns = range(win[0], win[1] + 1)
        if a < 1:
            vals = [green_series(params, (n,) + (0,) * (d - 1)).value for n in ns]
        else:
            vals = [green_bessel(d, a, (n,) + (0,) * (d - 1)) for n in ns]
        axis = pio.write_csv(out_dir / f"{stem}_axis.csv", ["n", "value"], zip(ns, vals))
        outs.append(axis)
        if plot:
            from .plots import PlotSpec, emit_plot

            spec = PlotSpec("loglog-fit", "n", "value", logx=True,
                            fit={"amplitude": fit.amplitude, "power": fit.power,
                                 "rate": fit.rate, "residual": fit.residual})
            outs.append(emit_plot(spec, axis, out_dir / f"{stem}_fit.svg"))
    return outs


def _torus_z(cfg):
    d, r = cfg["dim"], cfg["period"]
    given = [k for k in ("z", "z_omega", "rho", "p") if cfg.get(k) is not None]
    if len(given) != 1:
        raise ConfigError("give exactly one of --z, --z-omega, --rho, --p")
    k = given[0]
    z0 = 1 / (2 * d)
    if k == "z":
        return cfg["z"]
    if k == "z_omega":
        return cfg["z_omega"] * z0
    if k == "rho":
        return z0 - cfg["rho"]
    return z0 - r ** (-cfg["p"])


def run_torus_srw(cfg, out_dir: Path, plot: bool):
    import itertools

    from .torus import killed_walk_mc, plateau_check_srw, torus_green_solve, torus_green_table, \
        torus_green_unfold

    _require(cfg, "dim", "period")
    _check_dim(cfg)
    d, r = cfg["dim"], cfg["period"]
    if r < 3:
        raise ConfigError("torus period must be >= 3")
    z = _torus_z(cfg)
    if not 0 <= z * 2 * d < 1:
        raise ConfigError("need 0 <= z*Omega < 1")
    route = "plateau" if cfg["check"] == "plateau" else cfg["route"]
    sites = list(itertools.product(range(r), repeat=d))
    header = [f"x{i + 1}" for i in range(d)]
    outs = []
    if route == "fourier":
        tab = torus_green_table(d, r, z)
        rows = [list(x) + [float(tab[x])] for x in sites]
        header += ["value"]
    elif route == "solve":
        tab = torus_green_solve(d, r, z)
        rows = [list(x) + [float(tab[x])] for x in sites]
        header += ["value"]
    elif route == "unfold":
        rows = []
        for x in sites:
            u = torus_green_unfold(d, r, z, x, cfg["shells"])
            rows.append(list(x) + [u.value, u.tail_bound + u.route_bound])
        header += ["value", "error"]
    elif route == "mc":
        est = killed_walk_mc(d, r, z, cfg["samples"], cfg["seed"], shards=cfg["shards"])
        rows = [list(x) + [est[x].mean, est[x].stderr, est[x].n_eff] for x in sites]
        header += ["mean", "stderr", "n_eff"]
    elif route == "plateau":
        rep = plateau_check_srw(d, r, z)
        rows = [list(x) + [czd, ct, s] for x, czd, ct, s in rep.profile]
        header = [f"a{i + 1}" for i in range(d)] + ["C_zd", "C_torus", "scaled_delta"]
        stem = Path(cfg["out"]).stem
        summary = {k: v for k, v in rep.__dict__.items() if k != "profile"}
        summary["verdict"] = rep.verdict
        outs.append(pio.write_json(out_dir / f"{stem}_report.json", summary))
        path = pio.write_csv(out_dir / cfg["out"], header, rows)
        outs.append(path)
        if plot:
            from .plots import PlotSpec, emit_plot

            dist_rows = [[math.sqrt(sum(c * c for c in row[:d])), row[d + 1]] for row in rows]
            prof = pio.write_csv(out_dir / f"{stem}_profile.csv", ["distance", "C_torus"], dist_rows)
            outs.append(prof)
            outs.append(emit_plot(PlotSpec("profile", "distance", "C_torus"), prof,
                                  out_dir / f"{stem}_profile.svg"))
        if rep.verdict == "fail":
            raise CheckFailed(f"plateau bounds violated: min {rep.scaled_min}, max {rep.scaled_max}")
        return outs
    else:
        raise ConfigError(f"unknown route {route!r}")
    outs.append(pio.write_csv(out_dir / cfg["out"], header, rows))
    return outs


def _geometry(spec: str):
    if spec == "zd":
        return None
    if spec.startswith("torus:"):
        try:
            r = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad geometry {spec!r}") from exc
        if r < 3:
            raise ConfigError("torus period must be >= 3")
        return r
    raise ConfigError(f"geometry must be zd or torus:r, got {spec!r}")


def run_wsaw(cfg, out_dir: Path, plot: bool):
    from . import enumeration as en

    if not cfg["observable"]:
        raise ConfigError("no observable requested (--observable)")
    _require(cfg, "dim", "beta", "nmax")
    _check_dim(cfg)
    d, beta, nmax = cfg["dim"], cfg["beta"], cfg["nmax"]
    if not 0 <= beta <= 1:
        raise ConfigError("beta must lie in [0, 1]")
    period = _geometry(cfg["geometry"])
    obs = cfg["observable"]
    stem = Path(cfg["out"]).stem
    if obs == "unfold-check":
        if period is None:
            raise ConfigError("unfold-check needs --geometry torus:r")
        if (2 * d) ** nmax > 5e7:
            raise en.BudgetError("literal unfolding check limited to (2d)^nmax <= 5e7 walks")
        rep = en.unfolding_check(d, period, nmax, betas=(beta,))
        out = pio.write_json(out_dir / f"{stem}.json", rep)
        if not rep.ok:
            raise CheckFailed(f"unfolding violations: {rep.violations[:5]}")
        return [out]
    series = en.enumerate_two_point(en.WsawParams(d, beta, nmax, period),
                                    allow_over_budget=bool(cfg["allow_over_budget"]))
    if obs == "series":
        header, rows = pio.series_rows(series)
        return [pio.write_csv(out_dir / cfg["out"], header, rows)]
    if obs == "zc":
        return [pio.write_json(out_dir / f"{stem}.json", en.zc_estimate(series))]
    _require(cfg, "z")
    z = cfg["z"]
    if obs == "chi":
        return [pio.write_json(out_dir / f"{stem}.json", en.susceptibility(series, z))]
    if obs == "bubble":
        return [pio.write_json(out_dir / f"{stem}.json",
                               {"z": z, "tilt": cfg["tilt"],
                                "bubble": en.bubble(series, z, cfg["tilt"])})]
    if obs == "mass":
        win = _window(cfg["window"])
        if win is None:
            raise ConfigError("mass needs --window a:b")
        fit = en.mass_estimate(series, z, win)
        return [pio.write_json(out_dir / f"{stem}.json", fit)]
    raise ConfigError(f"unknown observable {obs!r}")


def run_wsaw_mc(cfg, out_dir: Path, plot: bool):
    from .lattice import Geometry
    from .mc import WindowSpec, sample_two_point

    _require(cfg, "dim", "period", "beta")
    _check_dim(cfg)
    d, r, beta = cfg["dim"], cfg["period"], cfg["beta"]
    if r < 3:
        raise ConfigError("torus period must be >= 3")
    if cfg["window"]:
        _require(cfg, "zc")
        try:
            z = WindowSpec(r, beta, "window", zc=cfg["zc"], c4=cfg["c4"]).resolve(d)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        _require(cfg, "z")
        z = cfg["z"]
    survival = cfg["survival"]
    if survival is None and z * 2 * d >= 1:
        survival = 1 - 1 / r ** (d / 2)
    try:
        est = sample_two_point(d, r, beta, z, cfg["samples"], cfg["seed"], shards=cfg["shards"],
                               survival=survival)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    g = Geometry.torus(d, r)
    rows = []
    for x in est.sites():
        rep = g.representative(x)
        rows.append([max(abs(c) for c in rep), ";".join(str(c) for c in rep),
                     float(est.mean[x]), float(est.stderr[x]), float(est.n_eff[x])])
    rows.sort(key=lambda row: (row[0], row[1]))
    outs = [pio.write_csv(out_dir / cfg["out"], ["shell", "x_repr", "mean", "stderr", "n_eff"], rows)]
    stem = Path(cfg["out"]).stem
    outs.append(pio.write_json(out_dir / f"{stem}_summary.json",
                               {"z": z, "chi": est.chi, "min_weight": est.min_weight,
                                "zero_weights": est.zero_weights, **est.config}))
    if plot:
        from .plots import PlotSpec, emit_plot

        outs.append(emit_plot(PlotSpec("profile", "shell", "mean", yerr="stderr"), outs[0],
                              out_dir / f"{stem}_profile.svg"))
    return outs


def run_lace(cfg, out_dir: Path, plot: bool):
    from . import enumeration as en
    from .lace import convolution_residual, decompose, mass_identity_check, pi_series

    _require(cfg, "dim", "beta", "z", "nmax")
    _check_dim(cfg)
    d, beta, z, nmax = cfg["dim"], cfg["beta"], cfg["z"], cfg["nmax"]
    series = en.enumerate_two_point(en.WsawParams(d, beta, nmax))
    pis = pi_series(series)
    try:
        sol = decompose(series, z, box=cfg["box"], grid=cfg["grid"], m=cfg["tilt"], pis=pis)
    except (ValueError, FloatingPointError) as exc:
        raise ConfigError(f"z outside the valid regime: {exc}") from exc
    report = sol.as_dict()
    report["identity_residual"] = None
    if nmax >= 8:
        mi = mass_identity_check(series, [z], box=max(cfg["box"], 20), pis=pis)
        if mi.residuals:
            report["identity_residual"] = mi.residuals[0]
    report["convolution_residual"] = convolution_residual(series, pis, z)
    return [pio.write_json(out_dir / cfg["out"], report)]


def run_plot(cfg, out_dir: Path, plot: bool):
    from .plots import PlotSpec, emit_plot

    _require(cfg, "kind", "data", "x", "y")
    fit = cfg["fit"]
    if isinstance(fit, str):
        fit = json.loads(fit)
    spec = PlotSpec(cfg["kind"], cfg["x"], cfg["y"], yerr=cfg["yerr"], fit=fit or {})
    try:
        return [emit_plot(spec, cfg["data"], out_dir / cfg["out"])]
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc


HANDLERS = {"srw": run_srw, "torus-srw": run_torus_srw, "wsaw": run_wsaw,
            "wsaw-mc": run_wsaw_mc, "lace": run_lace, "plot": run_plot}


def run(subcommand: str, cfg: dict, out_dir: Path, plot: bool = False) -> list[Path]:
    """Execute one subcommand with a merged configuration and write its manifest."""
    t0 = time.perf_counter()
    out_dir.mkdir(parents=True, exist_ok=True)
    outs = HANDLERS[subcommand](cfg, out_dir, plot)
    pio.write_manifest(out_dir, subcommand, {**cfg, "plot": plot}, outs, time.perf_counter() - t0)
    return outs


def _error(code: int, kind: str, msg: str) -> int:
    print(json.dumps({"error": kind, "message": msg, "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    from .enumeration import BudgetError as EnumBudget
    from .torus import BudgetError as TorusBudget

    parser = _parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if ns.subcommand is None:
        parser.print_usage(sys.stderr)
        return _error(EXIT_CONFIG, "config", "no subcommand given")
    try:
        if ns.subcommand == "rerun":
            man = pio.read_json(ns.manifest)
            sub = man["subcommand"]
            cfg = dict(man["config"])
            plot = bool(cfg.pop("plot", False))
            out_dir = Path(ns.out_dir or Path(ns.manifest).parent)
        else:
            sub = ns.subcommand
            args = {k: v for k, v in vars(ns).items()
                    if k not in ("subcommand", "config", "out_dir", "plot")}
            file_cfg = pio.read_json(ns.config) if ns.config else None
            cfg = merge_config(sub, args, file_cfg)
            plot = ns.plot == "on"
            out_dir = Path(ns.out_dir or os.environ.get(ENV_OUT, "."))
        if sub == "srw" and cfg.get("fit_window") is not None:
            cfg["fit_window"] = list(_window(cfg["fit_window"]))
        if sub == "wsaw" and cfg.get("window") is not None:
            cfg["window"] = list(_window(cfg["window"]))
        outs = run(sub, cfg, out_dir, plot)
    except (EnumBudget, TorusBudget) as exc:
        return _error(EXIT_BUDGET, "budget", str(exc))
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        return _error(EXIT_CONFIG, "config", str(exc))
    except CheckFailed as exc:
        return _error(EXIT_CHECK, "check", str(exc))
    for o in outs:
        print(o)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
