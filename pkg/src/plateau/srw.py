"""Simple random walk two-point function (lattice Green function) on Z^d.

Three independent evaluation routes are provided:

* :func:`green_series` -- the walk expansion sum_n (mu*Omega)^n D^{*n}(x),
  iterated on a symmetry-reduced box with a rigorous truncation bound;
* :func:`green_fourier` -- midpoint quadrature of the Fourier integral of
  1/(1 - mu*Omega*D_hat(k));
* :func:`green_bessel` -- the one-dimensional integral
  int_0^inf e^{-t(1-a)} prod_j I_{x_j}(a t/d) e^{-a t/d} dt, which stays
  accurate at and very near criticality where the other two are slow.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .lattice import (
    canonical_points,
    half_midpoint_axis,
    orbit_size,
    tilted_step_transform,
)

__all__ = [
    "GreenParams",
    "DecayFit",
    "SeriesValue",
    "green_series",
    "green_fourier",
    "green_bessel",
    "green_closed_form_1d",
    "mass_m0",
    "loglinear_fit",
    "fit_massive_decay",
    "fit_heat_kernel",
    "infrared_check",
    "InfraredReport",
    "step_ladder",
    "fourier_error_budget",
]


@dataclass(frozen=True)
class GreenParams:
    dim: int
    mu: float
    box: int = 20
    nmax: int = 200
    grid: int = 64

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if self.mu < 0 or self.mu * 2 * self.dim > 1 + 1e-15:
            raise ValueError("fugacity must lie in [0, 1/Omega]")

    @classmethod
    def from_mu_omega(cls, dim: int, mu_omega: float, **kw) -> "GreenParams":
        return cls(dim, mu_omega / (2 * dim), **kw)

    @property
    def omega(self) -> int:
        return 2 * self.dim

    @property
    def mu_omega(self) -> float:
        return self.mu * self.omega


@dataclass(frozen=True)
class DecayFit:
    """Result of a log-linear fit  log v(n) = log(amplitude) - power*log(n) - rate*n."""

    rate: float
    power: float
    amplitude: float
    residual: float
    window: tuple[int, int]
    extra: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class SeriesValue:
    value: float
    tail_bound: float
    truncation_bound: float

    @property
    def error_bound(self) -> float:
        return self.tail_bound + self.truncation_bound


def mass_m0(d: int, mu: float) -> float:
    """Solution of cosh m0 = 1 + (1 - mu*Omega)/(2 mu)."""
    if mu <= 0:
        raise ValueError("mass_m0 needs mu > 0")
    omega = 2 * d
    if mu * omega > 1 + 1e-15:
        raise ValueError("mu exceeds the critical value 1/Omega")
    y1 = (1 - mu * omega) / (2 * mu)  # cosh(m0) - 1
    if y1 <= 0:
        return 0.0
    if y1 < 1e-8:
        return math.sqrt(2 * y1)
    y = 1 + y1
    return math.log(y + math.sqrt(y1 * (y + 1)))


def green_closed_form_1d(a: float, x: int) -> float:
    """C(x) on Z for mu*Omega = a < 1."""
    s = math.sqrt(1 - a * a)
    return (1 / s) * ((1 - s) / a) ** abs(int(x)) if a > 0 else float(x == 0)


# --------------------------------------------------------------------------
# Series route
# --------------------------------------------------------------------------


@functools.lru_cache(maxsize=16)
def _canonical_box(d: int, L: int):
    pts = canonical_points(d, L)
    mult = np.array([orbit_size(p) for p in pts], dtype=float)
    codes = np.ravel_multi_index(pts.T, (L + 1,) * d)
    n = len(pts)
    nbr = np.full((n, 2 * d), n, dtype=np.int64)  # index n is the zero sentinel
    col = 0
    for j in range(d):
        for s in (1, -1):
            q = pts.copy()
            q[:, j] = np.abs(q[:, j] + s)
            q.sort(axis=1)
            inside = q[:, -1] <= L
            qc = np.ravel_multi_index(q[inside].T, (L + 1,) * d)
            nbr[inside, col] = np.searchsorted(codes, qc)
            col += 1
    return pts, codes, mult, nbr


def _canonical_index(d: int, L: int, x) -> int | None:
    a = sorted(abs(int(c)) for c in x)
    if a and a[-1] > L:
        return None
    _, codes, _, _ = _canonical_box(d, L)
    code = np.ravel_multi_index(tuple(a), (L + 1,) * d)
    return int(np.searchsorted(codes, code))


@functools.lru_cache(maxsize=8)
def step_ladder(d: int, L: int, nmax: int) -> np.ndarray:
    """D^{*n} on the canonical points of the box, n = 0..nmax, killed outside the box."""
    pts, _, _, nbr = _canonical_box(d, L)
    out = np.zeros((nmax + 1, len(pts)))
    v = np.zeros(len(pts) + 1)
    v[0] = 1.0
    out[0] = v[:-1]
    for n in range(1, nmax + 1):
        v[:-1] = v[nbr].sum(axis=1) / (2 * d)
        out[n] = v[:-1]
    return out


@functools.lru_cache(maxsize=16)
def _series_sum(d: int, a: float, L: int, N: int):
    pts, _, mult, nbr = _canonical_box(d, L)
    v = np.zeros(len(pts) + 1)
    v[0] = 1.0
    acc = v[:-1].copy()
    mass_prev = 1.0
    exit_weight = 0.0
    an = 1.0
    for n in range(1, N + 1):
        v[:-1] = v[nbr].sum(axis=1) / (2 * d)
        an *= a
        acc += an * v[:-1]
        mass = float(v[:-1] @ mult)
        exit_weight += an * max(mass_prev - mass, 0.0)
        mass_prev = mass
    return acc, exit_weight


def green_series(params: GreenParams, x) -> SeriesValue:
    """C_mu(x) from the first ``nmax`` terms of the walk expansion on a box.

    Walks are killed when they leave ``||y||_inf <= box``.  The reported
    bounds are rigorous: ``tail_bound`` covers n > nmax, and
    ``truncation_bound`` covers walks that leave the box, via a first-exit
    decomposition and C(y) <= C(0) exp(-m0 ||y||_inf).
    """
    d, a, L, N = params.dim, params.mu_omega, params.box, params.nmax
    if a >= 1:
        raise ValueError("series route needs mu*Omega < 1")
    if len(x) != d:
        raise ValueError("point has wrong dimension")
    idx = _canonical_index(d, L, x)
    if idx is None:
        raise ValueError(f"point {tuple(x)} lies outside the box of radius {L}")
    acc, exit_weight = _series_sum(d, float(a), L, N)
    tail = a ** (N + 1) / (1 - a)
    if a == 0:
        return SeriesValue(float(acc[idx]), 0.0, 0.0)
    m0 = mass_m0(d, params.mu)
    damp = math.exp(-m0 * (L + 1))
    c0 = (acc[0] + tail) / max(1 - exit_weight * damp, 1e-300)
    ell = max(abs(int(c)) for c in x)
    trunc = exit_weight * c0 * math.exp(-m0 * (L + 1 - ell))
    return SeriesValue(float(acc[idx]), tail, float(trunc))


# --------------------------------------------------------------------------
# Fourier route
# --------------------------------------------------------------------------


@functools.lru_cache(maxsize=8)
def _fourier_octant(d: int, a: float, M: int, xmax: int) -> np.ndarray:
    ks, w = half_midpoint_axis(M)
    cosk = np.cos(ks)
    dhat = np.zeros((len(ks),) * d)
    for j in range(d):
        shape = [1] * d
        shape[j] = len(ks)
        dhat = dhat + cosk.reshape(shape)
    integrand = 1.0 / (1.0 - a * dhat / d)
    mat = w[:, None] * np.cos(np.outer(ks, np.arange(xmax + 1)))
    out = integrand
    for _ in range(d):
        out = np.tensordot(out, mat, axes=([0], [0]))
    return out / M ** d


def green_fourier(params: GreenParams, x) -> float:
    """Midpoint-rule evaluation of the Fourier integral for C_mu(x)."""
    d, a, M = params.dim, params.mu_omega, params.grid
    if len(x) != d:
        raise ValueError("point has wrong dimension")
    if a >= 1:
        warnings.warn("mu*Omega = 1: the midpoint grid avoids k = 0 but converges slowly",
                      RuntimeWarning, stacklevel=2)
    ax = sorted(abs(int(c)) for c in x)
    xmax = max(8, ax[-1])
    table = _fourier_octant(d, float(a), M, xmax)
    return float(table[tuple(ax)])


def fourier_error_budget(params: GreenParams, x, value_at_zero: float | None = None) -> float:
    """Aliasing bound for :func:`green_fourier` plus a rounding allowance.

    The midpoint sum differs from the integral by a phase-weighted sum of
    C(x + M u) over u != 0, bounded with C(y) <= C(0) exp(-m0 ||y||_inf).
    """
    d, a, M = params.dim, params.mu_omega, params.grid
    rounding = 64 * np.finfo(float).eps * (M ** d) ** 0.5 / max(1e-300, 1 - a)
    if a == 0:
        return rounding
    m0 = mass_m0(d, params.mu)
    if m0 == 0:
        return math.inf
    ell = max(abs(int(c)) for c in x)
    s = 0.0
    k = 1
    while True:
        term = ((2 * k + 1) ** d - (2 * k - 1) ** d) * math.exp(-m0 * M * k)
        s += term
        if term < 1e-18 * max(s, 1e-300) or k > 10_000:
            break
        k += 1
    c0 = value_at_zero if value_at_zero is not None else green_fourier(params, (0,) * d)
    c0 = c0 / max(1 - s, 1e-300)
    return c0 * s * math.exp(m0 * ell) + rounding


# --------------------------------------------------------------------------
# Bessel-integral route
# --------------------------------------------------------------------------


def green_bessel(d: int, a: float, x, rtol: float = 1e-11) -> float:
    """C(x) with mu*Omega = a via int_0^inf e^{-t(1-a)} prod_j ive(x_j, a t/d) dt.

    Valid for a < 1, and for a = 1 when d >= 3.
    """
    if a == 0:
        return float(all(int(c) == 0 for c in x))
    if a > 1 or (a == 1 and d <= 2):
        raise ValueError("Bessel route diverges")
    xs = [abs(int(c)) for c in x]

    def f(t):
        v = math.exp(-t * (1 - a))
        s = a * t / d
        for xj in xs:
            v *= special.ive(xj, s)
        return v

    # the integrand peaks roughly where a t/d ~ |x|^2 / d; split geometrically from there
    scale = max(1.0, float(sum(c * c for c in xs)))
    # scipy's ive loses accuracy past about 1e9, so stop at 1e8 and close analytically
    t_max = 1e8 if a == 1 else min(1e8, max(4 * scale, 45.0 / (1 - a)))
    cuts = [0.0, scale / 4]
    while cuts[-1] < t_max:
        cuts.append(min(4 * cuts[-1], t_max))
    total = 0.0
    with warnings.catch_warnings():
        # pieces where the integrand is negligible cannot meet a pure relative tolerance
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            total += integrate.quad(f, lo, hi, epsabs=0, epsrel=rtol, limit=200)[0]
    if a == 1:
        # ive(x, s) = (2 pi s)^{-1/2} (1 - (4x^2 - 1)/(8s) + O(s^-2)), s = t/d
        lead = (2 * math.pi / d) ** (-d / 2)
        corr = sum(4 * c * c - 1 for c in xs) * d / 8
        total += lead * (t_max ** (1 - d / 2) / (d / 2 - 1) - corr * t_max ** (-d / 2) / (d / 2))
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            total += integrate.quad(f, t_max, np.inf, epsabs=1e-3 * rtol * total, epsrel=rtol,
                                    limit=200)[0]
    return total


# --------------------------------------------------------------------------
# Fits
# --------------------------------------------------------------------------


def loglinear_fit(ns, values, power: float | None = None, rate: float | None = None,
                  window: tuple[int, int] | None = None) -> DecayFit:
    """Least squares fit of log v = log A - p log n - m n.

    Either ``power`` or ``rate`` may be pinned; values <= 1e-300 are dropped.
    """
    ns = np.asarray(ns, dtype=float)
    vs = np.asarray(values, dtype=float)
    keep = vs > 1e-300
    ns, vs = ns[keep], vs[keep]
    if len(ns) < 4:
        raise ValueError("decay fit needs at least 4 points above the underflow threshold")
    y = np.log(vs)
    cols = [np.ones_like(ns)]
    if power is None:
        cols.append(-np.log(ns))
    else:
        y = y + power * np.log(ns)
    if rate is None:
        cols.append(-ns)
    else:
        y = y + rate * ns
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.max(np.abs(X @ coef - y)))
    i = 1
    p = power
    if power is None:
        p = float(coef[i])
        i += 1
    m = rate
    if rate is None:
        m = float(coef[i])
    win = window if window is not None else (int(ns[0]), int(ns[-1]))
    return DecayFit(rate=float(m), power=float(p), amplitude=float(math.exp(coef[0])),
                    residual=resid, window=win)


def fit_massive_decay(params: GreenParams, direction=None, window=(10, 30),
                      a1: float = 0.5, rate_rtol: float = 0.05, route: str | None = None
                      ) -> DecayFit:
    """Fit the decay of C_mu(n * direction) over an explicit window of n.

    Below criticality the exponential rate, power and amplitude are all
    fitted; on-axis the fitted rate is checked against [a1*m0, (1+rate_rtol)*m0].
    At mu = 1/Omega a pure power law is fitted.
    """
    d = params.dim
    if d <= 2:
        raise ValueError("massive decay fit is for d > 2")
    lo, hi = window
    if hi - lo + 1 < 4:
        raise ValueError("window too short: need at least 4 points")
    direction = tuple(direction) if direction is not None else (1,) + (0,) * (d - 1)
    critical = params.mu_omega >= 1 - 1e-15
    if route is None:
        route = "bessel" if critical else "series"
    ns = np.arange(lo, hi + 1)
    pts = [tuple(n * c for c in direction) for n in ns]
    if route == "series":
        if critical:
            raise ValueError("series route needs mu*Omega < 1")
        vals = [green_series(params, p).value for p in pts]
    elif route == "bessel":
        vals = [green_bessel(d, params.mu_omega, p) for p in pts]
    elif route == "fourier":
        vals = [green_fourier(params, p) for p in pts]
    else:
        raise ValueError(f"unknown route {route!r}")
    # distances measured in ||x||_inf, which is n * ||direction||_inf
    scale = max(abs(c) for c in direction)
    if critical:
        fit = loglinear_fit(ns * scale, vals, rate=0.0, window=window)
        return DecayFit(fit.rate, fit.power, fit.amplitude, fit.residual, window,
                        {"m0": 0.0, "expected_power": d - 2, "route": route})
    fit = loglinear_fit(ns * scale, vals, window=window)
    m0 = mass_m0(d, params.mu)
    on_axis = sorted(abs(c) for c in direction)[:-1] == [0] * (d - 1)
    extra = {"m0": m0, "expected_power": (d - 1) / 2, "route": route, "on_axis": on_axis}
    if on_axis:
        extra["rate_in_bounds"] = bool(a1 * m0 <= fit.rate <= (1 + rate_rtol) * m0)
    return DecayFit(fit.rate, fit.power, fit.amplitude, fit.residual, window, extra)


def fit_heat_kernel(d: int, n_range: tuple[int, int], slack: float = 2.0,
                    a_grid: np.ndarray | None = None) -> DecayFit:
    """Empirical constants in D^{*n}(x) <= A n^{-d/2} exp(-a ||x||_inf^2 / n).

    For each trial ``a`` the smallest admissible A is the maximum of
    n^{d/2} D^{*n}(x) e^{a ||x||^2/n} over all computed (n, x) with n >= ||x||_inf.
    The reported ``a`` is the largest trial value whose A stays within
    ``slack`` times the a = 0 value.
    """
    lo, hi = n_range
    if lo < 1 or hi < lo:
        raise ValueError("invalid n range")
    ladder = step_ladder(d, hi, hi)
    pts, *_ = _canonical_box(d, hi)
    ell = pts.max(axis=1).astype(float)
    ns = np.arange(lo, hi + 1, dtype=float)
    vals = ladder[lo:hi + 1]
    mask = (vals > 0) & (ns[:, None] >= ell[None, :])
    logv = np.where(mask, np.log(np.where(mask, vals, 1.0)), -np.inf)
    base = logv + (d / 2) * np.log(ns)[:, None]
    quad = (ell[None, :] ** 2) / ns[:, None]
    if a_grid is None:
        a_grid = np.linspace(0.0, 3.0, 301)
    logA = np.array([np.max(base + a * quad) for a in a_grid])
    A0 = math.exp(logA[0])
    ok = logA <= math.log(slack * A0)
    a_best = float(a_grid[ok][-1])
    A_best = float(math.exp(logA[ok][-1]))
    return DecayFit(rate=a_best, power=d / 2, amplitude=A_best, residual=0.0,
                    window=(lo, hi),
                    extra={"A_at_zero": A0, "frontier": list(zip(a_grid.tolist(),
                                                                  np.exp(logA).tolist()))})


# --------------------------------------------------------------------------
# Massive infrared bound
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class InfraredReport:
    m0: float
    m: float
    c_lower: float
    derivative_constants: dict
    a_hat_at_zero: complex


def infrared_check(d: int, mu: float, m: float, grid: int = 64, sigma: float = 2 / 3
                   ) -> InfraredReport:
    """Evaluate A_hat^{(m)}(k) = 1 - mu*Omega*D_hat^{(m)}(k) on a midpoint grid.

    Reports the largest c with |A_hat| >= c (|k| + m0)^2 on the grid, and for
    |alpha| = 1, 2 the grid maximum of |grad^alpha C_hat^{(m)}| (|k|+m0)^{2+|alpha|},
    with derivatives from centred finite differences.
    """
    omega = 2 * d
    if not (1 / (2 * omega) <= mu < 1 / omega):
        raise ValueError("infrared check needs mu in [1/(2 Omega), 1/Omega)")
    m0 = mass_m0(d, mu)
    if m > sigma * m0 + 1e-15:
        raise ValueError(f"tilt m={m} exceeds sigma*m0={sigma * m0}")
    ks = -np.pi + 2 * np.pi * (np.arange(grid) + 0.5) / grid
    mesh = np.stack(np.meshgrid(*([ks] * d), indexing="ij"), axis=-1)
    ahat = 1 - mu * omega * tilted_step_transform(mesh, m)
    knorm = np.sqrt((mesh ** 2).sum(axis=-1))
    c_lower = float(np.min(np.abs(ahat) / (knorm + m0) ** 2))
    chat = 1 / ahat
    h = 2 * np.pi / grid
    consts = {}
    for i in range(d):
        fwd = np.roll(chat, -1, axis=i)
        bwd = np.roll(chat, 1, axis=i)
        d1 = (fwd - bwd) / (2 * h)
        d2 = (fwd - 2 * chat + bwd) / h ** 2
        consts[f"d{i}"] = float(np.max(np.abs(d1) * (knorm + m0) ** 3))
        consts[f"d{i}d{i}"] = float(np.max(np.abs(d2) * (knorm + m0) ** 4))
        for j in range(i + 1, d):
            mixed = (np.roll(fwd, -1, axis=j) - np.roll(fwd, 1, axis=j)
                     - np.roll(bwd, -1, axis=j) + np.roll(bwd, 1, axis=j)) / (4 * h * h)
            consts[f"d{i}d{j}"] = float(np.max(np.abs(mixed) * (knorm + m0) ** 4))
    a0 = complex(1 - mu * omega * tilted_step_transform(np.zeros(d), m))
    return InfraredReport(m0=m0, m=m, c_lower=c_lower, derivative_constants=consts,
                          a_hat_at_zero=a0)
