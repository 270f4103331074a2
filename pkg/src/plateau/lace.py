"""Numerical lace expansion: recover Pi from enumerated G and assemble G = lambda C + f.

The irreducible kernel is defined by the convolution identity

    F_z = delta - z Omega D - Pi_z,        G_z * F_z = delta.

Order by order in z this determines Pi exactly from the coefficients of G:
each coefficient pi_n(x) is supported in ||x||_1 <= n, so a torus grid with
more than 2 nmax points per axis carries the series inversion without
aliasing.  The resulting power series for Pi converges well beyond the
radius where the raw G series is useful, and G is then rebuilt on a box as
1/F_hat by midpoint quadrature (the "resummed" two-point function).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .enumeration import SeriesTable, zc_estimate
from .lattice import (
    FieldTable,
    Geometry,
    canonical_points,
    half_midpoint_axis,
    half_torus_axis,
    octant_cosine_inverse,
    octant_cosine_transform,
    octant_multiplicity,
    tilt,
)
from .srw import GreenParams, green_series, loglinear_fit

__all__ = [
    "PiSeries",
    "pi_series",
    "pi_from_g",
    "PiResult",
    "solve_lambda_mu",
    "LaceSolution",
    "decompose",
    "resummed_two_point",
    "convolution_residual",
    "mass_identity_check",
    "MassIdentityReport",
    "octant_coefficients",
]


def octant_coefficients(series: SeriesTable) -> np.ndarray:
    """c_n(x) as octant arrays, shape (nmax+1,) + (nmax+1,)*d."""
    if series.geometry.is_torus:
        raise ValueError("octant coefficients are for Z^d tables")
    d, N = series.dim, series.nmax
    lookup = np.full((N + 1) ** d, -1, dtype=np.int64)
    pts = series.points
    lookup[np.ravel_multi_index(pts.T, (N + 1,) * d)] = np.arange(len(pts))
    cells = np.indices((N + 1,) * d).reshape(d, -1)
    keys = np.sort(cells, axis=0)
    b = lookup[np.ravel_multi_index(keys, (N + 1,) * d)]
    out = np.zeros((N + 1, cells.shape[1]))
    ok = b >= 0
    out[:, ok] = series.coeff[:, b[ok]]
    return out.reshape((N + 1,) + (N + 1,) * d)


def _default_grid(box: int) -> int:
    """Midpoint grid size leaving the nearest periodic image well outside the box."""
    return max(32, 2 * box + 16)


def _dhat(ks: np.ndarray, d: int) -> np.ndarray:
    c = np.cos(ks)
    out = np.zeros((len(ks),) * d)
    for j in range(d):
        shape = [1] * d
        shape[j] = len(ks)
        out = out + c.reshape(shape)
    return out / d


def _moment2(values: np.ndarray) -> float:
    d = values.ndim
    L = values.shape[0] - 1
    a2 = np.arange(L + 1) ** 2
    r2 = np.zeros((L + 1,) * d)
    for j in range(d):
        shape = [1] * d
        shape[j] = L + 1
        r2 = r2 + a2.reshape(shape)
    return float(np.sum(values * r2 * octant_multiplicity(d, L)))


@dataclass
class PiSeries:
    """Coefficients pi_n(x) (octant storage) with Pi_z = sum_n pi_n z^n."""

    dim: int
    beta: float
    nmax: int
    coeffs: np.ndarray

    def table(self, z: float, order: int | None = None) -> np.ndarray:
        N = self.nmax if order is None else order
        zp = z ** np.arange(N + 1)
        return np.tensordot(zp, self.coeffs[: N + 1], axes=(0, 0))

    def moments(self, z: float, order: int | None = None) -> tuple[float, float]:
        """(sum_x Pi_z(x), sum_x |x|^2 Pi_z(x))."""
        t = self.table(z, order)
        return float(np.sum(t * octant_multiplicity(self.dim, self.nmax))), _moment2(t)

    def f0_polynomial(self) -> np.ndarray:
        """Coefficients of F_hat_z(0) = 1 - z Omega - Pi_hat_z(0) in powers of z."""
        mult = octant_multiplicity(self.dim, self.nmax)
        p = -np.array([np.sum(c * mult) for c in self.coeffs])
        p[0] += 1.0
        p[1] -= 2 * self.dim
        return p

    def abs_sum(self, z: float) -> float:
        t = self.table(z)
        return float(np.sum(np.abs(t) * octant_multiplicity(self.dim, self.nmax)))


def pi_series(series: SeriesTable) -> PiSeries:
    """Invert G_hat = 1/F_hat coefficientwise on an alias-free torus grid."""
    d, N = series.dim, series.nmax
    M = 2 * N + 2
    ks, w = half_torus_axis(M)
    oc = octant_coefficients(series)
    ghat = np.stack([octant_cosine_transform(oc[n], ks) for n in range(N + 1)])
    f = np.zeros_like(ghat)
    f[0] = 1.0 / ghat[0]
    for n in range(1, N + 1):
        acc = np.zeros_like(ghat[0])
        for m in range(1, n + 1):
            acc += ghat[m] * f[n - m]
        f[n] = -acc / ghat[0]
    pihat = -f
    pihat[0] += 1.0
    if N >= 1:
        pihat[1] -= 2 * d * _dhat(ks, d)
    coeffs = np.stack([octant_cosine_inverse(pihat[n], ks, w, float(M) ** d, N)
                       for n in range(N + 1)])
    # the zeroth and first orders vanish identically; remove rounding noise
    coeffs[0] = 0.0
    if N >= 1:
        coeffs[1] = 0.0
    return PiSeries(d, series.beta, N, coeffs)


@dataclass
class PiResult:
    pi: FieldTable
    pihat: np.ndarray
    ks: np.ndarray
    sensitivity: float
    moment0: float
    moment2: float


def pi_from_g(series: SeriesTable, z: float, grid: int = 32,
              pis: PiSeries | None = None) -> PiResult:
    """Pi_z on the box and Pi_hat_z on the positive half of a midpoint grid.

    ``sensitivity`` is max_x |Pi_z(x) - Pi_z^{(nmax-2)}(x)|, the change from
    dropping the last two orders.
    """
    pis = pis or pi_series(series)
    d, N = pis.dim, pis.nmax
    t = pis.table(z)
    lower = pis.table(z, max(N - 2, 0))
    ks, _ = half_midpoint_axis(grid)
    hat = octant_cosine_transform(t, ks)
    if not np.all(np.isfinite(hat)):
        raise FloatingPointError("non-finite Pi_hat on the grid")
    m0, m2 = pis.moments(z)
    table = FieldTable(Geometry.zd(d), t, N, octant=True, symmetric=True)
    return PiResult(table, hat, ks, float(np.max(np.abs(t - lower))), m0, m2)


def solve_lambda_mu(pi_moment0: float, pi_moment2: float, chi: float, z: float,
                    d: int) -> tuple[float, float]:
    """(lambda_z, mu_z) from the two vanishing moments of E = A_mu - lambda F.

    sum E = 0 gives mu Omega = 1 - lambda / chi; sum |x|^2 E = 0 gives
    mu Omega = lambda (z Omega + sum |x|^2 Pi).
    """
    omega = 2 * d
    den = 1.0 / chi + z * omega + pi_moment2
    if den == 0:
        raise ZeroDivisionError("degenerate moment system")
    lam = 1.0 / den
    mu_omega = 1.0 - lam / chi
    return lam, mu_omega / omega


def resummed_two_point(series: SeriesTable, z: float, box: int = 16, grid: int | None = None,
                       pis: PiSeries | None = None) -> FieldTable:
    """G_z = (delta - z Omega D - Pi_z)^{-1} on the box ||x||_inf <= box."""
    pis = pis or pi_series(series)
    d = pis.dim
    M = grid or _default_grid(box)
    ks, w = half_midpoint_axis(M)
    fhat = 1.0 - z * 2 * d * _dhat(ks, d) - octant_cosine_transform(pis.table(z), ks)
    if np.any(fhat <= 0):
        raise FloatingPointError("F_hat is not positive on the grid: z is beyond the resummed critical point")
    g = octant_cosine_inverse(1.0 / fhat, ks, w, float(M) ** d, box)
    return FieldTable(Geometry.zd(d), g, box, octant=True, symmetric=True)


def convolution_residual(series: SeriesTable, pis: PiSeries, z: float) -> float:
    """max_x |sum_{n<=nmax} z^n [(G * F)_n - delta_{n0} delta](x)| computed in x-space.

    The order-n term of G*F only involves c_m and pi_l with m + l = n, so
    the truncated product must reproduce delta exactly.
    """
    from scipy.signal import fftconvolve

    d, N = series.dim, series.nmax
    oc = octant_coefficients(series)

    def full(a, radius):
        # order-n pieces are supported in ||x||_1 <= n, so radius n suffices
        idx = np.abs(np.arange(-radius, radius + 1))
        return a[np.ix_(*([idx] * d))]

    c = [full(oc[n], n) for n in range(N + 1)]
    f = [-full(pis.coeffs[n], n) for n in range(N + 1)]
    f[0][(0,) * d] += 1.0
    if N >= 1:
        for j in range(d):
            for s in (1, -1):
                pos = [1] * d
                pos[j] += s
                f[1][tuple(pos)] -= 1.0
    total = np.zeros((2 * N + 1,) * d)
    for n in range(N + 1):
        acc = np.zeros((2 * n + 1,) * d)
        for m in range(n + 1):
            acc += fftconvolve(c[m], f[n - m], mode="full")
        sl = (slice(N - n, N + n + 1),) * d
        total[sl] += z ** n * acc
    total[(N,) * d] -= 1.0
    return float(np.max(np.abs(total)))


def _weighted_sup(values: np.ndarray, d: int) -> float:
    L = values.shape[0] - 1
    r2 = np.zeros((L + 1,) * d)
    for j in range(d):
        shape = [1] * d
        shape[j] = L + 1
        r2 = r2 + (np.arange(L + 1) ** 2).reshape(shape)
    w = np.maximum(1.0, np.sqrt(r2)) ** (d - 2)
    return float(np.max(np.abs(values) * w))


@dataclass
class LaceSolution:
    z: float
    lam: float
    mu: float
    chi: float
    pi_moment0: float
    pi_moment2: float
    E: FieldTable
    f: FieldTable
    e_moment_residuals: tuple
    f_route_residual: float
    f_sup_weighted: float
    lambda_c_sup_weighted: float
    pi_sensitivity: float
    extra: dict = field(default_factory=dict)

    @property
    def mu_omega(self) -> float:
        return self.mu * 2 * self.E.dim

    def as_dict(self) -> dict:
        return {
            "z": self.z, "lambda": self.lam, "mu_omega": self.mu_omega, "chi": self.chi,
            "pi_moment0": self.pi_moment0, "pi_moment2": self.pi_moment2,
            "e_moment_residuals": list(self.e_moment_residuals),
            "f_route_residual": self.f_route_residual,
            "f_sup_weighted": self.f_sup_weighted,
            "lambda_c_sup_weighted": self.lambda_c_sup_weighted,
            "pi_sensitivity": self.pi_sensitivity, **self.extra,
        }


def decompose(series: SeriesTable, z: float, box: int = 12, grid: int | None = None,
              m: float = 0.0, pis: PiSeries | None = None,
              c_margin: int = 12) -> LaceSolution:
    """Assemble E and f = G - lambda C_mu, and f = C_mu * E * G on the grid.

    G is the resummed two-point function; C_mu on the box comes from the
    walk series on a larger box (independent of the quadrature), so the two
    assemblies of f agree only up to quadrature and truncation error.  With
    ``m > 0`` the returned f table is tilted by e^{m x1}.
    """
    pis = pis or pi_series(series)
    d, N = pis.dim, pis.nmax
    omega = 2 * d
    M = grid or _default_grid(box)
    ks, w = half_midpoint_axis(M)
    pi_t = pis.table(z)
    pihat = octant_cosine_transform(pi_t, ks)
    dh = _dhat(ks, d)
    fhat = 1.0 - z * omega * dh - pihat
    if np.any(fhat <= 0):
        raise FloatingPointError("F_hat is not positive on the grid")
    m0, m2 = pis.moments(z)
    chi = 1.0 / (1.0 - z * omega - m0)
    lam, mu = solve_lambda_mu(m0, m2, chi, z, d)
    a = mu * omega
    if not 0 < a < 1:
        raise ValueError(f"mu_z Omega = {a} outside (0, 1)")
    # E on the box of Pi
    E = lam * pi_t
    E[(0,) * d] += 1 - lam
    for j in range(d):
        e = [0] * d
        e[j] = 1
        E[tuple(e)] += (lam * z * omega - a) / omega
    mult = octant_multiplicity(d, N)
    res0 = float(np.sum(E * mult))
    res2 = _moment2(E)
    scale = max(abs(1 - lam), abs(lam * z * omega - a), float(np.sum(np.abs(lam * pi_t) * mult)), 1e-300)
    # f two ways
    ghat = 1.0 / fhat
    G = octant_cosine_inverse(ghat, ks, w, float(M) ** d, box)
    ehat = (1 - lam) + (lam * z * omega - a) * dh + lam * pihat
    chat = 1.0 / (1.0 - a * dh)
    f_conv = octant_cosine_inverse(chat * ehat * ghat, ks, w, float(M) ** d, box)
    nmax_c = int(math.ceil(math.log(1e-17 * (1 - a)) / math.log(a))) if a > 0 else 1
    params = GreenParams.from_mu_omega(d, a, box=box + c_margin, nmax=max(nmax_c, 1))
    C = np.zeros((box + 1,) * d)
    c_err = 0.0
    for p in canonical_points(d, box):
        v = green_series(params, tuple(p))
        c_err = max(c_err, v.error_bound)
        for perm in set(itertools.permutations(int(c) for c in p)):
            C[perm] = v.value
    f_direct = G - lam * C
    route_res = float(np.max(np.abs(f_direct - f_conv)))
    geo = Geometry.zd(d)
    f_tab = FieldTable(geo, f_direct, box, octant=True, symmetric=True)
    lc = lam * C
    if m > 0:
        f_tab = tilt(f_tab.full(), m)
        lc = tilt(FieldTable(geo, lc, box, octant=True).full(), m).values
        fs = _weighted_sup_full(f_tab.values, d)
        ls = _weighted_sup_full(lc, d)
    else:
        fs = _weighted_sup(f_direct, d)
        ls = _weighted_sup(lc, d)
    return LaceSolution(
        z=z, lam=lam, mu=mu, chi=chi, pi_moment0=m0, pi_moment2=m2,
        E=FieldTable(geo, E, N, octant=True, symmetric=True), f=f_tab,
        e_moment_residuals=(res0, res2, scale), f_route_residual=route_res,
        f_sup_weighted=fs, lambda_c_sup_weighted=ls,
        pi_sensitivity=float(np.max(np.abs(pi_t - pis.table(z, max(N - 2, 0))))),
        extra={"c_series_error": c_err, "grid": M, "box": box, "tilt": m})


def _weighted_sup_full(values: np.ndarray, d: int) -> float:
    L = (values.shape[0] - 1) // 2
    r2 = np.zeros(values.shape)
    for j in range(d):
        shape = [1] * d
        shape[j] = 2 * L + 1
        r2 = r2 + (np.arange(-L, L + 1) ** 2).reshape(shape)
    w = np.maximum(1.0, np.sqrt(r2)) ** (d - 2)
    return float(np.max(np.abs(values) * w))


# --------------------------------------------------------------------------
# Mass identity and chi asymptote
# --------------------------------------------------------------------------


@dataclass
class MassIdentityReport:
    zs: list
    masses: list
    exact_masses: list
    lhs: list
    rhs: list
    residuals: list
    zc: float
    zc_uncertainty: float
    zc_resummed: float | None
    omega_limit: float
    amplitude_fit: float
    amplitude_derivative: float
    failures: dict = field(default_factory=dict)


def _tilted_pi0(pi_t: np.ndarray, m: float) -> float:
    """Pi_hat^{(m)}(0) = sum_x Pi(x) cosh(m x1) for an octant table."""
    d = pi_t.ndim
    L = pi_t.shape[0] - 1
    mult = octant_multiplicity(d, L)
    shape = [1] * d
    shape[0] = L + 1
    ch = np.cosh(m * np.arange(L + 1)).reshape(shape)
    return float(np.sum(pi_t * mult * ch))


def _exact_mass(pis: PiSeries, z: float) -> float | None:
    """Root m of 1 - z(2 cosh m + 2(d-1)) - Pi_hat^{(m)}(0) (the resummed mass)."""
    from scipy.optimize import brentq

    d = pis.dim
    t = pis.table(z)

    def g(m):
        return 1 - z * (2 * math.cosh(m) + 2 * (d - 1)) - _tilted_pi0(t, m)

    if g(0.0) <= 0:
        return None
    hi = 1.0
    while g(hi) > 0:
        hi *= 2
        if hi > 100:
            return None
    return brentq(g, 0.0, hi, xtol=1e-14)


def mass_identity_check(series: SeriesTable, z_grid, window: tuple[int, int] = (6, 14),
                        box: int = 20, grid: int | None = None,
                        pis: PiSeries | None = None) -> MassIdentityReport:
    """Both sides of 1/chi = 2z(cosh m - 1) + Pi_hat^{(m)}(0) - Pi_hat(0) with the fitted mass.

    The mass m(z) is fitted on-axis from the resummed G with the (d-1)/2
    power pinned; the residual therefore mixes fit and truncation error.
    Also reports the fitted limit of m^2 / (1 - z/z_c) and the amplitude
    A of chi ~ A (1 - z/z_c)^{-1}, both by extrapolation and from
    A^{-1} = -z_c d/dz F_hat_z(0) at z_c.
    """
    pis = pis or pi_series(series)
    d = pis.dim
    zc = zc_estimate(series)
    poly = pis.f0_polynomial()
    from .enumeration import _smallest_positive_root

    zc_res = _smallest_positive_root(poly)
    zs, ms, exact, lhs, rhs, res = [], [], [], [], [], []
    failures = {}
    for z in z_grid:
        z = float(z)
        try:
            G = resummed_two_point(series, z, box=box, grid=grid, pis=pis)
            ns = np.arange(window[0], window[1] + 1)
            vals = np.array([G[(n,) + (0,) * (d - 1)] for n in ns])
            fit = loglinear_fit(ns, vals, power=(d - 1) / 2, window=window)
        except (ValueError, FloatingPointError) as exc:
            failures[z] = str(exc)
            continue
        m = fit.rate
        t = pis.table(z)
        m0, _ = pis.moments(z)
        left = 1 - z * 2 * d - m0
        right = 2 * z * (math.cosh(m) - 1) + _tilted_pi0(t, m) - m0
        zs.append(z)
        ms.append(m)
        exact.append(_exact_mass(pis, z))
        lhs.append(left)
        rhs.append(right)
        res.append(abs(right - left) / abs(left))
    zc_use = zc_res if zc_res is not None else zc.value
    if len(zs) >= 2:
        zz = np.array(zs)
        ratio = np.array(ms) ** 2 / (1 - zz / zc_use)
        omega_limit = float(np.polyval(np.polyfit(zz, ratio, 1), zc_use))
        chi = 1 / np.array(lhs)
        amp = chi * (1 - zz / zc_use)
        amplitude_fit = float(np.polyval(np.polyfit(zz, amp, 1), zc_use))
    else:
        omega_limit = amplitude_fit = math.nan
    dpoly = np.polynomial.polynomial.polyder(poly)
    deriv = float(np.polynomial.polynomial.polyval(zc_use, dpoly))
    amplitude_derivative = -1.0 / (zc_use * deriv)
    return MassIdentityReport(zs, ms, exact, lhs, rhs, res, zc.value, zc.uncertainty, zc_res,
                              omega_limit, amplitude_fit, amplitude_derivative, failures)
