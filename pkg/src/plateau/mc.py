"""Monte Carlo estimates of the WSAW torus two-point function.

Simple sampling with importance weights.  A simple random walk on the torus
is run for a random number of steps N; at every time t <= N the walker adds
the weight r^t K^T(omega[0..t]) to the site it occupies, where K^T is the
torus interaction weight of the prefix and r a length reweighting factor.

* ``estimator="geometric"``: P(N >= t) = s^t with survival s (default
  s = z Omega, r = 1).  Since P(N >= t) (z Omega / s)^t Omega^{-t} = z^t, the
  per-site average is an unbiased estimate of G^T_z(x) itself.  (Recording
  only the endpoint instead estimates (1 - z Omega) G^T_z(x).)  Any s < 1
  keeps the estimator unbiased, which is how z Omega >= 1 is reached without
  truncation.
* ``estimator="fixed"``: every walk has length ``ncut`` and r = z Omega;
  the estimate is the partial sum of G^T over lengths <= ncut.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from . import rng as _rng
from .lattice import Geometry
from .torus import McEstimate, torus_neighbours

__all__ = [
    "McEstimate",
    "WindowSpec",
    "TwoPointMc",
    "sample_two_point",
    "PlateauScan",
    "plateau_scan",
    "WindowReport",
    "window_susceptibility",
]

STEP_BUDGET = 1 << 22


@numba.njit(cache=True)
def _wsaw_kernel(lengths, steps, nbr, nsites, q, ratio, s1, s2, acc):
    """Accumulate per-site sums of Y_x and Y_x^2 and of the walk total.

    acc = [sum Y, sum Y^2, min positive weight, number of zero weights].
    """
    nmax = lengths.max() if lengths.size else 0
    visits = np.zeros(nsites, dtype=np.int64)
    y = np.zeros(nsites)
    path = np.empty(nmax + 1, dtype=np.int64)
    touched = np.empty(nmax + 1, dtype=np.int64)
    pos = 0
    for i in range(lengths.size):
        n = lengths[i]
        site = 0
        path[0] = 0
        visits[0] = 1
        w = 1.0
        fac = 1.0
        y[0] = 1.0
        touched[0] = 0
        ntouch = 1
        steps_done = 0
        for t in range(1, n + 1):
            site = nbr[site, steps[pos + t - 1]]
            v = visits[site]
            if v > 0:
                w *= q ** v
            visits[site] = v + 1
            path[t] = site
            steps_done = t
            fac *= ratio
            if w == 0.0:
                acc[3] += 1
                break
            if w < acc[2]:
                acc[2] = w
            c = fac * w
            if y[site] == 0.0:
                touched[ntouch] = site
                ntouch += 1
            y[site] += c
        pos += n
        total = 0.0
        for j in range(ntouch):
            s = touched[j]
            val = y[s]
            s1[s] += val
            s2[s] += val * val
            total += val
            y[s] = 0.0
        acc[0] += total
        acc[1] += total * total
        for t in range(steps_done + 1):
            visits[path[t]] = 0


@dataclass(frozen=True)
class _Job:
    d: int
    r: int
    q: float
    survival: float
    ratio: float
    ncut: int | None
    seed: int
    shard: int
    count: int


def _block_size(mean_len: float) -> int:
    return int(max(1, min(_rng.BLOCK_SIZE, STEP_BUDGET // max(1.0, mean_len))))


def _run_shard(job: _Job):
    nbr = torus_neighbours(job.d, job.r)
    n = job.r ** job.d
    s1 = np.zeros(n)
    s2 = np.zeros(n)
    acc = np.array([0.0, 0.0, 1.0, 0.0])
    mean_len = job.ncut if job.ncut is not None else job.survival / (1 - job.survival)
    for b, m in _rng.blocks(job.count, _block_size(mean_len)):
        g = _rng.stream(job.seed, job.shard, b)
        if job.ncut is not None:
            lengths = np.full(m, job.ncut, dtype=np.int64)
        elif job.survival > 0:
            lengths = g.geometric(1 - job.survival, size=m).astype(np.int64) - 1
        else:
            lengths = np.zeros(m, dtype=np.int64)
        steps = g.integers(0, 2 * job.d, size=int(lengths.sum()), dtype=np.int64)
        _wsaw_kernel(lengths, steps, nbr, n, job.q, job.ratio, s1, s2, acc)
    return s1, s2, acc


@dataclass
class TwoPointMc:
    """Per-site Monte Carlo estimates of G^T_z on the torus."""

    d: int
    r: int
    beta: float
    z: float
    estimator: str
    samples: int
    seed: int
    shards: int
    mean: np.ndarray
    stderr: np.ndarray
    n_eff: np.ndarray
    chi: McEstimate
    min_weight: float
    zero_weights: int
    config: dict = field(default_factory=dict)

    def __getitem__(self, x) -> McEstimate:
        idx = tuple(int(c) % self.r for c in x)
        return McEstimate(float(self.mean[idx]), float(self.stderr[idx]), self.samples,
                          float(self.n_eff[idx]), self.seed, self._stream())

    def _stream(self) -> str:
        return f"philox(seed={self.seed}, shards={self.shards}, {self.estimator})"

    def sites(self):
        return itertools.product(range(self.r), repeat=self.d)


def sample_two_point(d: int, r: int, beta: float, z: float, samples: int, seed: int,
                     shards: int = 1, workers: int = 1, estimator: str = "geometric",
                     survival: float | None = None, ncut: int | None = None) -> TwoPointMc:
    """Estimate G^T_z(x) at every torus site by weighted simple sampling."""
    Geometry.torus(d, r)
    if not 0 <= beta <= 1:
        raise ValueError("beta must lie in [0, 1]")
    if z < 0:
        raise ValueError("z must be >= 0")
    a = z * 2 * d
    if a > 1.05 * 1.0 and estimator == "geometric" and survival is None:
        raise ValueError("z Omega above the practical guard needs an explicit survival")
    if estimator == "geometric":
        s = a if survival is None else survival
        if s >= 1:
            raise ValueError("z Omega >= 1 needs estimator='fixed' or an explicit survival < 1")
        if s == 0 and a > 0:
            raise ValueError("survival must be positive when z > 0")
        ratio = a / s if s > 0 else 1.0
        cut = None
    elif estimator == "fixed":
        if ncut is None:
            raise ValueError("the fixed-length estimator needs an explicit ncut")
        s, ratio, cut = 1.0, a, int(ncut)
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    q = 1.0 - beta
    jobs = [_Job(d, r, q, s, ratio, cut, seed, k, hi - lo)
            for k, (lo, hi) in enumerate(_rng.shard_ranges(samples, shards))]
    if workers > 1 and shards > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_shard, jobs))
    else:
        parts = [_run_shard(j) for j in jobs]
    s1 = np.zeros(r ** d)
    s2 = np.zeros(r ** d)
    acc = np.array([0.0, 0.0, 1.0, 0.0])
    for p1, p2, pa in parts:
        s1 += p1
        s2 += p2
        acc[0] += pa[0]
        acc[1] += pa[1]
        acc[2] = min(acc[2], pa[2])
        acc[3] += pa[3]
    n = samples
    mean = s1 / n
    var = np.maximum(s2 / n - mean ** 2, 0.0) * n / max(n - 1, 1)
    err = np.sqrt(var / n)
    with np.errstate(invalid="ignore", divide="ignore"):
        neff = np.where(s2 > 0, s1 ** 2 / s2, float(n))
    neff = np.minimum(neff, n)
    cm = acc[0] / n
    cv = max(acc[1] / n - cm ** 2, 0.0) * n / max(n - 1, 1)
    stream = f"philox(seed={seed}, shards={shards}, {estimator})"
    chi = McEstimate(cm, math.sqrt(cv / n), n,
                     min(acc[0] ** 2 / acc[1], n) if acc[1] > 0 else float(n), seed, stream)
    shape = (r,) * d
    return TwoPointMc(d, r, beta, z, estimator, samples, seed, shards,
                      mean.reshape(shape), err.reshape(shape), neff.reshape(shape), chi,
                      float(acc[2]), int(acc[3]),
                      config={"survival": s, "ratio": ratio, "ncut": cut})


# --------------------------------------------------------------------------
# Plateau scan and scaling window
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowSpec:
    """How z is chosen for a torus of period r.

    rule: "fixed" (z = value), "power" (z = zc - c r^{-p}) or "window"
    (z = zc - c4 beta^{1/2} r^{-d/2}, d > 4).
    """

    r: int
    beta: float
    rule: str = "window"
    value: float | None = None
    zc: float | None = None
    c: float = 1.0
    p: float = 2.0
    c4: float = 1.0

    def resolve(self, d: int) -> float:
        if self.rule == "fixed":
            if self.value is None:
                raise ValueError("fixed rule needs a value")
            return float(self.value)
        if self.zc is None:
            raise ValueError(f"rule {self.rule!r} needs an estimated critical point")
        if self.rule == "power":
            z = self.zc - self.c * self.r ** (-self.p)
        elif self.rule == "window":
            if d <= 4:
                raise ValueError("the scaling-window rule needs d > 4")
            z = self.zc - self.c4 * math.sqrt(self.beta) * self.r ** (-d / 2)
        else:
            raise ValueError(f"unknown rule {self.rule!r}")
        if not z < self.zc:
            raise ValueError("window rule must resolve below the critical point")
        return z


@dataclass
class PlateauScan:
    d: int
    r: int
    beta: float
    z: float
    shells: list
    shell_mean: list
    shell_err: list
    A: float
    B: float
    B_err: float
    chi_hat: McEstimate
    scaled_plateau: float
    verdict: str
    monotone: bool
    rows: list = field(default_factory=list)


def _fit_profile(dist, mean, err, d):
    """Weighted least squares of G = A (1 v |x|)^{-(d-2)} + B."""
    x = np.maximum(1.0, dist) ** (-(d - 2))
    pos = err[err > 0]
    if pos.size == 0:
        return float(mean.max()), 0.0, math.inf
    # sites never reached carry the smallest resolved error rather than infinite weight
    w = 1.0 / np.maximum(err, pos.min())
    X = np.column_stack([x, np.ones_like(x)]) * w[:, None]
    y = mean * w
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    cov = np.linalg.pinv(X.T @ X)
    return float(coef[0]), float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0)))


def plateau_scan(d: int, r: int, beta: float, z: float, samples: int, seed: int,
                 shards: int = 1, workers: int = 1, **kw) -> PlateauScan:
    """Shell-binned G^T profile with the A (1 v |x|)^{-(d-2)} + B fit over x != 0.

    The verdict is "flat" when B exceeds three standard errors, "no plateau"
    when B is consistent with zero although a level chi/(50 r^d) would have
    been resolved, and "inconclusive" otherwise.
    """
    est = sample_two_point(d, r, beta, z, samples, seed, shards=shards, workers=workers, **kw)
    g = Geometry.torus(d, r)
    rows = []
    for x in est.sites():
        rep = g.representative(x)
        rows.append((x, rep, max(abs(c) for c in rep), math.sqrt(sum(c * c for c in rep)),
                     float(est.mean[x]), float(est.stderr[x]), float(est.n_eff[x])))
    dist = np.array([row[3] for row in rows])
    mean = np.array([row[4] for row in rows])
    err = np.array([row[5] for row in rows])
    # the origin is dominated by the zero-step walk and stays out of the fit
    far = dist > 0
    A, B, B_err = _fit_profile(dist[far], mean[far], err[far], d)
    shells = sorted({row[2] for row in rows})
    sm, se = [], []
    for s in shells:
        sel = [i for i, row in enumerate(rows) if row[2] == s]
        sm.append(float(mean[sel].mean()))
        se.append(float(np.sqrt(np.sum(err[sel] ** 2)) / len(sel)))
    monotone = all(sm[i + 1] <= sm[i] + 3 * math.hypot(se[i], se[i + 1]) for i in range(len(sm) - 1))
    chi = est.chi
    scaled = B * r ** d / chi.mean if chi.mean > 0 else math.nan
    if B > 3 * B_err:
        verdict = "flat"
    elif chi.mean > 0 and 3 * B_err < chi.mean / (50 * r ** d):
        # statistics would have resolved a plateau of the predicted order
        verdict = "no plateau"
    else:
        verdict = "inconclusive"
    return PlateauScan(d, r, beta, z, shells, sm, se, A, B, B_err, chi, scaled, verdict,
                       monotone, rows)


@dataclass
class WindowReport:
    d: int
    beta: float
    rs: list
    zs: list
    chi: list
    slope: float
    slope_err: float
    asserted: bool
    passed: bool | None
    chi_bound: list = field(default_factory=list)


def window_susceptibility(d: int, beta: float, rs, zc: float, samples: int, seed: int,
                          c4: float = 1.0, shards: int = 1, workers: int = 1,
                          survival_scale: float = 1.0, zd_chi=None,
                          tolerance: float = 0.75) -> WindowReport:
    """chi^T at z* = zc - c4 beta^{1/2} r^{-d/2} and the slope of log chi^T in log r.

    Walk lengths are drawn with survival s = 1 - 1/(survival_scale r^{d/2})
    and reweighted by (z Omega / s)^t, which is unbiased on both sides of
    z Omega = 1.  ``zd_chi`` (callable z -> chi(z) on Z^d) records the
    chi^T <= chi comparison when given.
    """
    rs = list(rs)
    zs, chis, bound = [], [], []
    for i, r in enumerate(rs):
        if beta == 0:
            # beta^{1/2} vanishes, so the control run keeps the r^{-d/2} width alone
            z = WindowSpec(r, beta, "power", zc=zc, c=c4, p=d / 2).resolve(d)
        else:
            z = WindowSpec(r, beta, "window", zc=zc, c4=c4).resolve(d)
        if beta == 0:
            chis.append(McEstimate(1 / (1 - z * 2 * d), 0.0, 0, 0.0, seed, "exact"))
            zs.append(z)
            continue
        s = 1 - 1 / (survival_scale * r ** (d / 2))
        est = sample_two_point(d, r, beta, z, samples, seed + i, shards=shards, workers=workers,
                               survival=s)
        zs.append(z)
        chis.append(est.chi)
        if zd_chi is not None:
            bound.append(float(zd_chi(z)))
    lr = np.log(rs)
    lc = np.log([c.mean for c in chis])
    if len(rs) >= 2:
        sig = np.array([max(c.stderr / c.mean, 1e-12) for c in chis])
        coef, cov = np.polyfit(lr, lc, 1, w=1 / sig, cov="unscaled") if len(rs) > 2 else (
            np.polyfit(lr, lc, 1), np.zeros((2, 2)))
        slope = float(coef[0])
        slope_err = float(math.sqrt(max(cov[0, 0], 0.0)))
    else:
        slope, slope_err = math.nan, math.nan
    asserted = len(rs) >= 3
    passed = (abs(slope - d / 2) <= tolerance) if asserted else None
    return WindowReport(d, beta, rs, zs, chis, slope, slope_err, asserted, passed, bound)
