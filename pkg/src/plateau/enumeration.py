"""Exact enumeration of the weakly self-avoiding walk two-point function.

A walk omega of length n carries the weight prod_{s<t} (1 - beta U_st) with
U_st = 1 when omega(s) = omega(t).  Grouping the pairs by their later time t,
a step into a site already visited v times contributes exactly v new
intersecting pairs, so the depth-first search only has to keep a visit table
and a running pair count j.  The enumerator stores integer counts
N[n, x, j] of walks by number of intersecting pairs, so coefficients are the
polynomials sum_j N[n, x, j] (1 - beta)^j and comparisons with the literal
pair-product oracle are exact.

On Z^d the first step is fixed to +e1 and the endpoints are binned by
hyperoctahedral class; the per-point count for a class O with first-step total
T is 2d T / |O|.  On the torus the first-step table is symmetrized over the 2d
group elements sending e1 to the other unit vectors.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .lattice import FieldTable, Geometry, canonical_points, orbit_size
from .srw import DecayFit, loglinear_fit, mass_m0

__all__ = [
    "BudgetError",
    "WsawParams",
    "SeriesTable",
    "enumerate_two_point",
    "estimate_nodes",
    "brute_force_walks",
    "pair_exponents",
    "brute_force_counts",
    "table_as_counts",
    "evaluate",
    "susceptibility",
    "SusceptibilityValue",
    "bubble",
    "mass_estimate",
    "zc_estimate",
    "ZcEstimate",
    "walk_record",
    "WalkRecord",
    "unfolding_check",
    "UnfoldingReport",
    "torus_two_point",
    "chi_comparison",
    "ChiComparison",
]

NODE_BUDGET = 5e9


class BudgetError(RuntimeError):
    """Enumeration would exceed the node budget."""


@dataclass(frozen=True)
class WsawParams:
    dim: int
    beta: float
    nmax: int
    period: int | None = None

    def __post_init__(self):
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if self.dim < 1 or self.nmax < 0:
            raise ValueError("need dim >= 1 and nmax >= 0")
        if self.period is not None and self.period < 3:
            raise ValueError("torus period must be >= 3")

    @property
    def geometry(self) -> Geometry:
        if self.period is None:
            return Geometry.zd(self.dim)
        return Geometry.torus(self.dim, self.period)


# --------------------------------------------------------------------------
# Series tables
# --------------------------------------------------------------------------


def _poly_eval(counts: np.ndarray, q: float) -> np.ndarray:
    """sum_j counts[..., j] q^j, with 0^0 = 1."""
    J = counts.shape[-1]
    powers = np.ones(J)
    for j in range(1, J):
        powers[j] = powers[j - 1] * q
    return counts.astype(float) @ powers


@dataclass
class SeriesTable:
    """Exact coefficients c_n(x) of G_z(x) = sum_n c_n(x) z^n for n <= nmax.

    ``points`` lists one representative per bin: canonical sorted |x| on Z^d,
    every site (indices in [0, r)) on the torus.  ``counts[n, b, j]`` is the
    per-point number of length-n walks ending in bin b with j intersecting
    pairs; ``coeff`` is the coefficient at this table's beta.
    """

    geometry: Geometry
    nmax: int
    beta: float
    points: np.ndarray
    multiplicity: np.ndarray
    counts: np.ndarray
    pruned: bool = False
    coeff: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {tuple(int(c) for c in p): i for i, p in enumerate(self.points)}
        self.coeff = _poly_eval(self.counts, 1.0 - self.beta)

    @property
    def dim(self) -> int:
        return self.geometry.dim

    def bin_of(self, x) -> int | None:
        g = self.geometry
        if g.is_torus:
            key = tuple(int(c) % g.period for c in x)
        else:
            key = tuple(sorted(abs(int(c)) for c in x))
        return self._index.get(key)

    def coefficient(self, n: int, x) -> float:
        b = self.bin_of(x)
        if b is None or n > self.nmax:
            return 0.0
        return float(self.coeff[n, b])

    def polynomial(self, n: int, x) -> np.ndarray:
        """Integer coefficients of c_n(x) as a polynomial in q = 1 - beta."""
        b = self.bin_of(x)
        if b is None:
            return np.zeros(self.counts.shape[-1], dtype=np.int64)
        return self.counts[n, b].copy()

    def at_beta(self, beta: float) -> "SeriesTable":
        """Re-evaluate the stored polynomials at another beta."""
        if self.pruned and beta != 1.0:
            raise ValueError("a table enumerated with beta = 1 pruning cannot be re-evaluated")
        return SeriesTable(self.geometry, self.nmax, beta, self.points, self.multiplicity,
                           self.counts, self.pruned)

    def truncated(self, nmax: int) -> "SeriesTable":
        return SeriesTable(self.geometry, nmax, self.beta, self.points, self.multiplicity,
                           self.counts[: nmax + 1], self.pruned)

    def chi_coefficients(self) -> np.ndarray:
        """chi_n = sum_x c_n(x)."""
        return self.coeff @ self.multiplicity

    def chi_counts(self) -> np.ndarray:
        """Exact integer polynomials of chi_n, shape (nmax+1, J)."""
        return np.einsum("nbj,b->nj", self.counts, self.multiplicity.astype(np.int64))

    def values(self, z: float) -> np.ndarray:
        """Per-bin partial sums of G_z."""
        zp = z ** np.arange(self.nmax + 1)
        return zp @ self.coeff

    def on_axis(self, z: float) -> tuple[np.ndarray, np.ndarray]:
        """(n, G_z(n e1)) for n = 0..nmax (Z^d tables)."""
        vals = self.values(z)
        ns = np.arange(self.nmax + 1)
        out = np.array([vals[self.bin_of((n,) + (0,) * (self.dim - 1))] for n in ns])
        return ns, out

    def iter_points(self):
        """Yield (x, bin) over every lattice point in the support."""
        if self.geometry.is_torus:
            for i, p in enumerate(self.points):
                yield tuple(int(c) for c in p), i
            return
        for i, p in enumerate(self.points):
            for sigma in _orbit(p):
                yield sigma, i


def _orbit(p):
    pts = set()
    for perm in set(itertools.permutations(int(c) for c in p)):
        for signs in itertools.product((1, -1), repeat=len(perm)):
            pts.add(tuple(s * c for s, c in zip(signs, perm)))
    return sorted(pts)


# --------------------------------------------------------------------------
# Depth-first enumerator
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def _dfs(nmax, origin, first, second, nbr, offsets, use_table, bin_of, nbins, jmax, prune):
    """Count walks with a fixed first step (and optionally a fixed second step).

    ``second`` < 0 enumerates all second steps.  Returns counts[n, bin, j] for n >= 1.
    """
    counts = np.zeros((nmax + 1, nbins, jmax + 1), dtype=np.int64)
    if nmax < 1:
        return counts
    nsites = bin_of.size
    ndir = offsets.size
    visits = np.zeros(nsites, dtype=np.uint8)
    path = np.empty(nmax + 1, dtype=np.int64)
    dirs = np.empty(nmax + 1, dtype=np.int64)
    js = np.empty(nmax + 1, dtype=np.int64)
    path[0] = origin
    visits[origin] = 1
    js[0] = 0
    if use_table:
        s1 = nbr[origin, first]
    else:
        s1 = origin + offsets[first]
    v = visits[s1]
    if prune and v > 0:
        return counts
    path[1] = s1
    js[1] = v
    visits[s1] += 1
    # with the second step split across jobs, only one job records length 1
    if second <= 0:
        counts[1, bin_of[s1], js[1]] += 1
    dirs[1] = -1
    depth = 1
    while depth > 0:
        if depth < nmax and dirs[depth] < ndir - 1:
            dirs[depth] += 1
            if depth == 1 and second >= 0 and dirs[1] != second:
                continue
            cur = path[depth]
            if use_table:
                nxt = nbr[cur, dirs[depth]]
            else:
                nxt = cur + offsets[dirs[depth]]
            v = visits[nxt]
            if prune and v > 0:
                continue
            depth += 1
            path[depth] = nxt
            js[depth] = js[depth - 1] + v
            visits[nxt] += 1
            counts[depth, bin_of[nxt], js[depth]] += 1
            dirs[depth] = -1
        else:
            visits[path[depth]] -= 1
            depth -= 1
    return counts


def estimate_nodes(dim: int, nmax: int, beta: float) -> float:
    """Upper estimate of DFS nodes with the first step fixed."""
    branch = 2 * dim - 1 if beta == 1.0 else 2 * dim
    return float(sum(branch ** (n - 1) for n in range(1, nmax + 1)))


def _zd_layout(dim: int, nmax: int):
    R = nmax
    side = 2 * R + 1
    strides = np.array([side ** (dim - 1 - j) for j in range(dim)], dtype=np.int64)
    offsets = np.empty(2 * dim, dtype=np.int64)
    for j in range(dim):
        offsets[2 * j] = strides[j]
        offsets[2 * j + 1] = -strides[j]
    pts = canonical_points(dim, R, l1_max=nmax)
    lookup = np.zeros((R + 1) ** dim, dtype=np.int64)
    lookup[np.ravel_multi_index(pts.T, (R + 1,) * dim)] = np.arange(len(pts))
    # small integer dtypes keep the (2R+1)^d layout affordable in five dimensions
    grid = np.abs(np.indices((side,) * dim, dtype=np.int16).reshape(dim, -1) - R)
    reach = grid.sum(axis=0, dtype=np.int32) <= nmax
    grid.sort(axis=0)
    # sites with ||x||_1 > nmax are unreachable and get bin 0, which is never written
    codes = np.ravel_multi_index(grid, (R + 1,) * dim)
    del grid
    bin_of = np.where(reach, lookup[codes], 0)
    origin = int(R * strides.sum())
    return origin, offsets, bin_of, pts


def _torus_layout(dim: int, r: int):
    from .torus import torus_neighbours

    nbr = torus_neighbours(dim, r)
    pts = np.array(list(itertools.product(range(r), repeat=dim)), dtype=np.int64).reshape(-1, dim)
    return nbr, np.arange(r ** dim, dtype=np.int64), pts


def _run_prefixes(args_list, workers):
    if workers > 1 and len(args_list) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_dfs_star, args_list))
    else:
        parts = [_dfs_star(a) for a in args_list]
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def _dfs_star(args):
    return _dfs(*args)


def enumerate_two_point(params: WsawParams, allow_over_budget: bool = False,
                        workers: int = 1) -> SeriesTable:
    """Exact coefficients of the WSAW two-point function up to ``params.nmax``.

    Raises :class:`BudgetError` (with the node estimate) above 5e9 nodes unless
    ``allow_over_budget``.  ``workers > 1`` splits the search over the second
    step and merges the integer tables in a fixed order.
    """
    d, nmax, beta = params.dim, params.nmax, params.beta
    nodes = estimate_nodes(d, nmax, beta)
    if nodes > NODE_BUDGET and not allow_over_budget:
        raise BudgetError(f"estimated {nodes:.3g} nodes exceeds the budget of {NODE_BUDGET:.0e}")
    prune = beta == 1.0
    jmax = 0 if prune else nmax * (nmax + 1) // 2
    seconds = list(range(2 * d)) if workers > 1 else [-1]
    if params.period is None:
        origin, offsets, bin_of, pts = _zd_layout(d, nmax)
        dummy = np.zeros((1, 1), dtype=np.int64)
        jobs = [(nmax, origin, 0, s, dummy, offsets, False, bin_of, len(pts), jmax, prune)
                for s in seconds]
        first = _run_prefixes(jobs, workers)
        mult = np.array([orbit_size(p) for p in pts], dtype=np.int64)
        scaled = 2 * d * first
        if np.any(scaled % mult[None, :, None]):
            raise AssertionError("class totals not divisible by orbit sizes")
        counts = scaled // mult[None, :, None]
        counts[0, 0, 0] = 1
    else:
        r = params.period
        nbr, bin_of, pts = _torus_layout(d, r)
        offsets = np.zeros(2 * d, dtype=np.int64)
        jobs = [(nmax, 0, 0, s, nbr, offsets, True, bin_of, len(pts), jmax, prune)
                for s in seconds]
        first = _run_prefixes(jobs, workers)
        counts = _symmetrize_torus(first, d, r)
        counts[0, 0, 0] = 1
        mult = np.ones(len(pts), dtype=np.int64)
    counts = _trim_j(counts)
    return SeriesTable(params.geometry, nmax, beta, pts, mult, counts, pruned=prune)


def _trim_j(counts: np.ndarray) -> np.ndarray:
    nz = np.nonzero(counts.reshape(-1, counts.shape[-1]).any(axis=0))[0]
    J = int(nz.max()) + 1 if nz.size else 1
    return np.ascontiguousarray(counts[..., :J])


def _symmetrize_torus(first: np.ndarray, d: int, r: int) -> np.ndarray:
    """Sum the +e1 table over the group elements g with g(e1) = +-e_k."""
    shp = first.shape
    a = first.reshape((shp[0],) + (r,) * d + (shp[2],))
    neg = (-np.arange(r)) % r
    out = np.zeros_like(a)
    for k in range(d):
        perm = list(range(d))
        perm[0], perm[k] = perm[k], perm[0]
        t = np.transpose(a, [0] + [p + 1 for p in perm] + [d + 1])
        out += t
        out += np.take(t, neg, axis=k + 1)
    return out.reshape(shp)


# --------------------------------------------------------------------------
# Literal brute-force oracle
# --------------------------------------------------------------------------


def brute_force_walks(dim: int, n: int) -> np.ndarray:
    """All (2d)^n walks of length n from the origin, shape (W, n+1, d)."""
    steps = np.zeros((2 * dim, dim), dtype=np.int64)
    for j in range(dim):
        steps[2 * j, j] = 1
        steps[2 * j + 1, j] = -1
    if n == 0:
        return np.zeros((1, 1, dim), dtype=np.int64)
    base = 2 * dim
    idx = np.arange(base ** n, dtype=np.int64)
    choice = (idx[:, None] // base ** np.arange(n - 1, -1, -1, dtype=np.int64)) % base
    pos = np.zeros((len(choice), n + 1, dim), dtype=np.int64)
    pos[:, 1:] = np.cumsum(steps[choice], axis=1)
    return pos


def pair_exponents(pos: np.ndarray, period: int | None = None) -> dict:
    """Per-walk numbers of intersecting pairs, from the literal pair definition.

    Returns ``U`` (pairs equal in Z^d) and, when ``period`` is given, ``UT``
    (pairs equal on the torus) and ``Uplus`` (pairs equal on the torus only).
    """
    W, n1, d = pos.shape
    U = np.zeros(W, dtype=np.int64)
    UT = np.zeros(W, dtype=np.int64)
    UP = np.zeros(W, dtype=np.int64)
    # encode each site as one integer so that a pair test is a single comparison
    span = 2 * n1 + 1
    code = np.zeros((W, n1), dtype=np.int64)
    tcode = np.zeros((W, n1), dtype=np.int64)
    for j in range(d):
        code = code * span + (pos[:, :, j] + n1)
        if period is not None:
            tcode = tcode * period + pos[:, :, j] % period
    for s in range(n1):
        eq = code[:, s + 1:] == code[:, s:s + 1]
        U += eq.sum(axis=1)
        if period is not None:
            eqt = tcode[:, s + 1:] == tcode[:, s:s + 1]
            UT += eqt.sum(axis=1)
            UP += (eqt & ~eq).sum(axis=1)
    out = {"U": U}
    if period is not None:
        out["UT"] = UT
        out["Uplus"] = UP
    return out


def brute_force_counts(dim: int, nmax: int, period: int | None = None) -> dict:
    """Exact counts {(n, x, j): number of walks} by brute force, all walks n <= nmax."""
    out: dict = {}
    for n in range(nmax + 1):
        pos = brute_force_walks(dim, n)
        ex = pair_exponents(pos, period)
        j = ex["UT"] if period is not None else ex["U"]
        ends = pos[:, -1] % period if period is not None else pos[:, -1] + n
        span = period if period is not None else 2 * n + 1
        key = np.zeros(len(pos), dtype=np.int64)
        for c in range(dim):
            key = key * span + ends[:, c]
        jspan = n * (n + 1) // 2 + 1
        keys, cnt = np.unique(key * jspan + j, return_counts=True)
        for k, c in zip(keys, cnt):
            site, jj = divmod(int(k), jspan)
            x = []
            for _ in range(dim):
                site, v = divmod(site, span)
                x.append(v if period is not None else v - n)
            out[(n, tuple(reversed(x)), jj)] = int(c)
    return out


def table_as_counts(series: SeriesTable) -> dict:
    """Expand a SeriesTable into the same {(n, x, j): count} form as the oracle."""
    out = {}
    nz = np.argwhere(series.counts)
    pts = {}
    for n, b, j in nz:
        if b not in pts:
            if series.geometry.is_torus:
                pts[b] = [tuple(int(c) for c in series.points[b])]
            else:
                pts[b] = _orbit(series.points[b])
        for x in pts[b]:
            out[(int(n), x, int(j))] = int(series.counts[n, b, j])
    return out


# --------------------------------------------------------------------------
# Observables
# --------------------------------------------------------------------------


def evaluate(series: SeriesTable, z: float) -> FieldTable:
    """Partial sums G_z(x) = sum_{n <= nmax} c_n(x) z^n as a FieldTable."""
    vals = series.values(z)
    g = series.geometry
    if g.is_torus:
        return FieldTable(g, vals.reshape((g.period,) * g.dim), symmetric=True)
    L = series.nmax
    oct_ = np.zeros((L + 1,) * g.dim)
    for p, v in zip(series.points, vals):
        for perm in set(itertools.permutations(int(c) for c in p)):
            oct_[perm] = v
    return FieldTable(g, oct_, L, octant=True, symmetric=True)


@dataclass(frozen=True)
class SusceptibilityValue:
    value: float
    last_terms: tuple
    tail_flag: bool


def susceptibility(series: SeriesTable, z: float) -> SusceptibilityValue:
    """chi(z) partial sum; the tail flag is raised when the last three terms do not decrease."""
    terms = series.chi_coefficients() * z ** np.arange(series.nmax + 1)
    last = tuple(float(t) for t in terms[-3:])
    flag = len(last) == 3 and not (last[0] > last[1] > last[2])
    return SusceptibilityValue(float(terms.sum()), last, bool(flag and z > 0))


def bubble(series: SeriesTable, z: float, m: float = 0.0) -> float:
    """Tilted bubble sum_x (G_z(x) e^{m x1})^2 over the enumerated support.

    Over a hyperoctahedral orbit O of |x| = (a_1..a_d), x1 is +-a_j with each
    slot and sign equally likely, so sum_O e^{2 m x1} = |O|/d sum_j cosh(2 m a_j).
    """
    if series.geometry.is_torus:
        raise ValueError("bubble is defined on Z^d")
    if m < 0:
        raise ValueError("tilt must be >= 0")
    g = series.values(z)
    w = series.multiplicity / series.dim * np.cosh(2 * m * series.points).sum(axis=1)
    return float(np.sum(w * g * g))


def mass_estimate(series: SeriesTable, z: float, window: tuple[int, int],
                  power: float | None = None, route: str = "series",
                  box: int | None = None, grid: int | None = None) -> DecayFit:
    """On-axis exponential rate of G_z with the (d-1)/2 power pinned by default.

    ``route="series"`` fits the enumerated partial sums; ``route="resummed"``
    rebuilds G from the enumerated irreducible kernel (see
    :func:`plateau.lace.resummed_two_point`), which removes most of the length
    truncation at distances close to nmax.
    """
    if series.geometry.is_torus:
        raise ValueError("mass estimates use Z^d tables")
    lo, hi = window
    d = series.dim
    if power is None:
        power = (d - 1) / 2
    if route == "series":
        if hi > series.nmax:
            raise ValueError("window exceeds the enumerated support")
        ns, vals = series.on_axis(z)
    elif route == "resummed":
        from .lace import resummed_two_point

        table = resummed_two_point(series, z, box=box or max(2 * hi, 16), grid=grid)
        if hi > table.radius:
            raise ValueError("window exceeds the resummation box")
        ns = np.arange(table.radius + 1)
        vals = np.array([table[(n,) + (0,) * (d - 1)] for n in ns])
    else:
        raise ValueError(f"unknown route {route!r}")
    sel = (ns >= lo) & (ns <= hi)
    fit = loglinear_fit(ns[sel], vals[sel], power=power, window=window)
    fit.extra["route"] = route
    if series.beta == 0 and z > 0:
        fit.extra["m0"] = mass_m0(d, z)
    return fit


@dataclass(frozen=True)
class ZcEstimate:
    value: float
    uncertainty: float
    raw: tuple
    accelerated: tuple
    monotone: bool
    inverse_root: float | None

    def interval(self) -> tuple[float, float]:
        return self.value - self.uncertainty, self.value + self.uncertainty


def _aitken(seq: np.ndarray) -> np.ndarray:
    out = []
    for i in range(len(seq) - 2):
        x0, x1, x2 = seq[i], seq[i + 1], seq[i + 2]
        den = x2 - 2 * x1 + x0
        if den == 0:
            out.append(x2)
        else:
            out.append(x2 - (x2 - x1) ** 2 / den)
    return np.array(out)


def _inverse_series(a: np.ndarray) -> np.ndarray:
    """Coefficients of 1/sum a_n z^n (a_0 != 0) to the same order."""
    b = np.zeros_like(a, dtype=float)
    b[0] = 1.0 / a[0]
    for n in range(1, len(a)):
        b[n] = -np.dot(a[1:n + 1], b[n - 1::-1]) / a[0]
    return b


def _smallest_positive_root(coeffs: np.ndarray) -> float | None:
    roots = np.roots(coeffs[::-1])
    real = roots[(np.abs(roots.imag) < 1e-9) & (roots.real > 0)].real
    return float(real.min()) if real.size else None


def zc_estimate(series: SeriesTable) -> ZcEstimate:
    """Ratio estimate of the radius of convergence of chi, Aitken-accelerated.

    Raw estimates are z_n = sqrt(chi_{n-2}/chi_n), which cancels the
    alternating correction from the singularity at -z_c.  The uncertainty is
    half the spread of the last three accelerated values, widened to the raw
    spread when the raw sequence is not monotone.
    """
    if series.nmax < 8:
        raise ValueError("zc estimate needs nmax >= 8")
    chi = series.chi_coefficients()
    raw = np.sqrt(chi[:-2] / chi[2:])[1:]
    acc = _aitken(raw)
    tail = acc[-3:]
    value = float(tail[-1])
    unc = 0.5 * float(tail.max() - tail.min())
    diffs = np.diff(raw[-5:])
    monotone = bool(np.all(diffs >= 0) or np.all(diffs <= 0))
    if not monotone:
        unc = max(unc, 0.5 * float(raw[-5:].max() - raw[-5:].min()))
    inv = _inverse_series(chi)
    root = _smallest_positive_root(inv)
    return ZcEstimate(value, unc, tuple(map(float, raw)), tuple(map(float, acc)), monotone, root)


# --------------------------------------------------------------------------
# Unfolding on the torus
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WalkRecord:
    sites: tuple
    K: float
    KT: float
    Kplus: float
    exponents: tuple


def walk_record(walk, period: int, beta: float) -> WalkRecord:
    """Z^d, torus and cross weights of one unfolded walk."""
    pos = np.asarray(walk, dtype=np.int64)
    if pos.ndim == 1:
        pos = pos[:, None]
    ex = pair_exponents(pos[None], period)
    q = 1.0 - beta
    u, ut, up = int(ex["U"][0]), int(ex["UT"][0]), int(ex["Uplus"][0])
    return WalkRecord(tuple(map(tuple, pos.tolist())), q ** u, q ** ut, q ** up, (u, ut, up))


@dataclass
class UnfoldingReport:
    dim: int
    period: int
    nmax: int
    walks: int
    factorization_ok: bool
    ggg_ok: bool
    pigeonhole_ok: bool
    worst_ggg_ratio: float
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.factorization_ok and self.ggg_ok and self.pigeonhole_ok


def unfolding_check(dim: int, period: int, nmax: int, betas=(0.0, 0.3, 1.0)) -> UnfoldingReport:
    """Per-walk checks of the torus/Z^d weight relations for all walks n <= nmax.

    * K^T = K K^+ as integer exponents: #U^T = #U + #U^+.
    * Torus coefficients <= unfolded image sums (each K^+ <= 1), for each beta.
    * Pigeonhole: some torus site is visited ceil(n / r^d) times, so
      K^T <= (1 - beta)^{binom(N_n, 2)}.
    """
    r = period
    fact = ggg = pig = True
    walks = 0
    worst = 0.0
    violations = []
    for n in range(nmax + 1):
        pos = brute_force_walks(dim, n)
        walks += len(pos)
        ex = pair_exponents(pos, r)
        if np.any(ex["UT"] != ex["U"] + ex["Uplus"]):
            fact = False
            violations.append(("factorization", n))
        Nn = -(-n // r ** dim)
        if np.any(ex["UT"] < Nn * (Nn - 1) // 2):
            pig = False
            violations.append(("pigeonhole", n))
        ends = pos[:, -1] % r
        code = np.ravel_multi_index(ends.T, (r,) * dim) if dim > 0 else np.zeros(len(pos), int)
        for beta in betas:
            q = 1.0 - beta
            kt = q ** ex["UT"].astype(float)
            k = q ** ex["U"].astype(float)
            torus = np.bincount(code, weights=kt, minlength=r ** dim)
            unfolded = np.bincount(code, weights=k, minlength=r ** dim)
            if np.any(torus > unfolded * (1 + 1e-12)):
                ggg = False
                violations.append(("ggg", n, beta))
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio = np.where(unfolded > 0, torus / unfolded, 0.0)
            worst = max(worst, float(ratio.max()))
    return UnfoldingReport(dim, r, nmax, walks, fact, ggg, pig, worst, violations)


def torus_two_point(dim: int, period: int, beta: float, nmax: int, **kw) -> SeriesTable:
    """Exact torus coefficients with the U^T weights."""
    return enumerate_two_point(WsawParams(dim, beta, nmax, period), **kw)


@dataclass
class ChiComparison:
    z: float
    chi: float
    chi_torus: float
    coefficientwise_ok: bool
    c2: float
    max_excess: float


def chi_comparison(torus: SeriesTable, zd: SeriesTable, z: float) -> ChiComparison:
    """chi^T_n <= chi_n coefficientwise, and c2 = max_x (G^T - G)(x) r^d / chi."""
    if torus.nmax != zd.nmax or torus.beta != zd.beta:
        raise ValueError("tables must share nmax and beta")
    g = torus.geometry
    r, d = g.period, g.dim
    ct = torus.chi_counts()
    cz = zd.chi_counts()
    J = max(ct.shape[1], cz.shape[1])
    ct = np.pad(ct, ((0, 0), (0, J - ct.shape[1])))
    cz = np.pad(cz, ((0, 0), (0, J - cz.shape[1])))
    q = 1.0 - torus.beta
    ok = bool(np.all(_poly_eval(ct, q) <= _poly_eval(cz, q) * (1 + 1e-13)))
    chi_t = susceptibility(torus, z).value
    chi = susceptibility(zd, z).value
    gt = torus.values(z)
    gz = zd.values(z)
    excess = -math.inf
    for i, p in enumerate(torus.points):
        rep = g.representative(p)
        b = zd.bin_of(rep)
        excess = max(excess, gt[i] - (gz[b] if b is not None else 0.0))
    return ChiComparison(z, chi, chi_t, ok, excess * r ** d / chi, excess)
