"""Lattice geometry, tabulated lattice functions and their Fourier transforms.

Functions on Z^d live on an explicit box ``||x||_inf <= L``; functions on the
discrete torus T_r^d live on all ``r**d`` sites.  Tables that are invariant
under coordinate reflections may be stored on the nonnegative octant only
(``octant=True``), which is what makes five-dimensional work tractable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "Geometry",
    "FieldTable",
    "DualGrid",
    "GeometryError",
    "norm_sup",
    "norm_euclid",
    "norm_1",
    "delta",
    "step_distribution",
    "convolve",
    "tilt",
    "fourier",
    "inverse_fourier",
    "torus_dual_grid",
    "quadrature_grid",
    "tilted_step_transform",
    "canonical_points",
    "orbit_size",
    "orbit_points",
    "octant_multiplicity",
    "cosine_matrix",
    "octant_cosine_transform",
    "octant_cosine_inverse",
]


class GeometryError(ValueError):
    """Raised for invalid or mismatched geometries."""


def norm_sup(x) -> int:
    return int(max((abs(int(c)) for c in x), default=0))


def norm_euclid(x) -> float:
    return math.sqrt(sum(int(c) ** 2 for c in x))


def norm_1(x) -> int:
    return int(sum(abs(int(c)) for c in x))


@dataclass(frozen=True)
class Geometry:
    """Either the full lattice Z^d (``kind="zd"``) or the torus T_r^d."""

    kind: str
    dim: int
    period: int | None = None

    def __post_init__(self):
        if self.kind not in ("zd", "torus"):
            raise GeometryError(f"unknown geometry kind {self.kind!r}")
        if self.dim < 1:
            raise GeometryError("dimension must be >= 1")
        if self.kind == "torus":
            if self.period is None or self.period < 3:
                raise GeometryError("torus period must be >= 3")
        elif self.period is not None:
            raise GeometryError("Z^d geometry takes no period")

    @classmethod
    def zd(cls, dim: int) -> "Geometry":
        return cls("zd", dim)

    @classmethod
    def torus(cls, dim: int, period: int) -> "Geometry":
        return cls("torus", dim, period)

    @property
    def is_torus(self) -> bool:
        return self.kind == "torus"

    @property
    def degree(self) -> int:
        return 2 * self.dim

    def project(self, x) -> tuple[int, ...]:
        """Canonical projection Z^d -> T_r^d, as indices in [0, r)."""
        if not self.is_torus:
            return tuple(int(c) for c in x)
        r = self.period
        return tuple(int(c) % r for c in x)

    def representative(self, x) -> tuple[int, ...]:
        """Unique representative of a torus point in [-r/2, r/2)^d."""
        if not self.is_torus:
            return tuple(int(c) for c in x)
        r = self.period
        return tuple(((int(c) + r // 2) % r) - r // 2 for c in x)

    def unfold(self, torus_walk: Sequence[Sequence[int]]) -> list[tuple[int, ...]]:
        """Lift a torus walk starting at 0 to the corresponding Z^d walk."""
        if not self.is_torus:
            return [tuple(int(c) for c in p) for p in torus_walk]
        out = [tuple(0 for _ in range(self.dim))]
        for prev, cur in zip(torus_walk[:-1], torus_walk[1:]):
            stepped = self.representative([int(b) - int(a) for a, b in zip(prev, cur)])
            out.append(tuple(o + s for o, s in zip(out[-1], stepped)))
        return out

    def unit_vectors(self) -> list[tuple[int, ...]]:
        vs = []
        for j in range(self.dim):
            for s in (1, -1):
                v = [0] * self.dim
                v[j] = s
                vs.append(tuple(v))
        return vs


@dataclass(frozen=True)
class FieldTable:
    """A real or complex function on a finite box of Z^d or on a torus.

    Storage conventions (``values`` is a dense ndarray):

    * Z^d, full box: shape ``(2L+1,)*d``, value at x sits at ``x + L``.
    * Z^d, octant: shape ``(L+1,)*d``, value at x sits at ``|x|``; the table
      is by construction invariant under coordinate reflections.
    * torus: shape ``(r,)*d``, value at x sits at ``x mod r``.
    """

    geometry: Geometry
    values: np.ndarray
    radius: int | None = None
    octant: bool = False
    symmetric: bool = False

    def __post_init__(self):
        g = self.geometry
        v = self.values
        if v.ndim != g.dim:
            raise GeometryError(f"values have {v.ndim} axes, geometry has dim {g.dim}")
        if g.is_torus:
            if v.shape != (g.period,) * g.dim:
                raise GeometryError("torus table must have shape (r,)*d")
            if self.octant:
                raise GeometryError("octant storage is for Z^d tables only")
        else:
            if self.radius is None:
                raise GeometryError("Z^d tables need an explicit box radius")
            L = self.radius
            want = (L + 1,) * g.dim if self.octant else (2 * L + 1,) * g.dim
            if v.shape != want:
                raise GeometryError(f"expected shape {want}, got {v.shape}")

    @property
    def dim(self) -> int:
        return self.geometry.dim

    def _index(self, x):
        g = self.geometry
        if len(x) != g.dim:
            raise GeometryError("point has wrong dimension")
        if g.is_torus:
            return tuple(int(c) % g.period for c in x)
        if norm_sup(x) > self.radius:
            return None
        if self.octant:
            return tuple(abs(int(c)) for c in x)
        return tuple(int(c) + self.radius for c in x)

    def __getitem__(self, x):
        idx = self._index(x)
        if idx is None:
            return 0.0 * self.values.flat[0]
        return self.values[idx]

    def points(self) -> Iterator[tuple[int, ...]]:
        g = self.geometry
        if g.is_torus:
            yield from itertools.product(range(g.period), repeat=g.dim)
        else:
            rng = range(-self.radius, self.radius + 1)
            yield from itertools.product(rng, repeat=g.dim)

    def items(self):
        for x in self.points():
            yield x, self[x]

    def full(self) -> "FieldTable":
        """Return the same table with full-box storage."""
        if not self.octant:
            return self
        idx = np.abs(np.arange(-self.radius, self.radius + 1))
        vals = self.values[np.ix_(*([idx] * self.dim))]
        return FieldTable(self.geometry, vals, self.radius, octant=False,
                          symmetric=self.symmetric)

    def total(self):
        """Sum of the table over its support."""
        if self.octant:
            return np.sum(self.values * octant_multiplicity(self.dim, self.radius))
        return self.values.sum()

    def restrict(self, radius: int) -> "FieldTable":
        """Re-truncate a Z^d table to a smaller (or pad to a larger) box."""
        if self.geometry.is_torus:
            raise GeometryError("restrict applies to Z^d tables")
        L = self.radius
        if self.octant:
            out = np.zeros((radius + 1,) * self.dim, dtype=self.values.dtype)
            k = min(L, radius) + 1
            out[(slice(0, k),) * self.dim] = self.values[(slice(0, k),) * self.dim]
            return FieldTable(self.geometry, out, radius, octant=True, symmetric=self.symmetric)
        out = np.zeros((2 * radius + 1,) * self.dim, dtype=self.values.dtype)
        k = min(L, radius)
        src = (slice(L - k, L + k + 1),) * self.dim
        dst = (slice(radius - k, radius + k + 1),) * self.dim
        out[dst] = self.values[src]
        return FieldTable(self.geometry, out, radius, symmetric=self.symmetric)

    def is_symmetric(self, atol: float = 0.0) -> bool:
        """Check invariance under all coordinate permutations and reflections."""
        v = self.full().values
        for axis in range(self.dim):
            if not np.allclose(v, np.flip(v, axis=axis), rtol=0, atol=atol):
                if not self.geometry.is_torus:
                    return False
        if self.geometry.is_torus:
            r = self.geometry.period
            neg = v[np.ix_(*([(-np.arange(r)) % r] * self.dim))]
            if not np.allclose(v, neg, rtol=0, atol=atol):
                return False
        for perm in itertools.permutations(range(self.dim)):
            if not np.allclose(v, np.transpose(v, perm), rtol=0, atol=atol):
                return False
        return True


def delta(geometry: Geometry, radius: int = 0) -> FieldTable:
    """Kronecker delta at the origin."""
    if geometry.is_torus:
        v = np.zeros((geometry.period,) * geometry.dim)
        v[(0,) * geometry.dim] = 1.0
        return FieldTable(geometry, v, symmetric=True)
    v = np.zeros((2 * radius + 1,) * geometry.dim)
    v[(radius,) * geometry.dim] = 1.0
    return FieldTable(geometry, v, radius, symmetric=True)


def step_distribution(geometry: Geometry) -> FieldTable:
    """Simple random walk one-step law D(x) = 1/(2d) on nearest neighbours."""
    d = geometry.dim
    p = 1.0 / (2 * d)
    if geometry.is_torus:
        r = geometry.period
        if r < 3:
            raise GeometryError("torus period must be >= 3 so that +e_j and -e_j differ")
        v = np.zeros((r,) * d)
        for e in geometry.unit_vectors():
            v[geometry.project(e)] += p
        return FieldTable(geometry, v, symmetric=True)
    v = np.zeros((3,) * d)
    for e in geometry.unit_vectors():
        v[tuple(c + 1 for c in e)] = p
    return FieldTable(geometry, v, 1, symmetric=True)


def convolve(f: FieldTable, g: FieldTable) -> FieldTable:
    """(f*g)(x) = sum_y f(y) g(x-y); wraps on the torus, grows the box on Z^d."""
    if f.geometry != g.geometry:
        raise GeometryError("convolution needs identical geometries")
    geo = f.geometry
    a, b = f.full().values, g.full().values
    dtype = np.result_type(a, b)
    if geo.is_torus:
        out = np.zeros(a.shape, dtype=dtype)
        for idx in zip(*np.nonzero(a)):
            out += a[idx] * np.roll(b, shift=idx, axis=tuple(range(geo.dim)))
        return FieldTable(geo, out, symmetric=f.symmetric and g.symmetric)
    from scipy.signal import convolve as _conv

    out = _conv(a, b, mode="full", method="direct")
    return FieldTable(geo, out.astype(dtype, copy=False), f.radius + g.radius,
                      symmetric=f.symmetric and g.symmetric)


def tilt(f: FieldTable, m: float) -> FieldTable:
    """Exponential tilt f(x) e^{m x_1}; Z^d only."""
    if f.geometry.is_torus:
        raise GeometryError("the exponential tilt is not defined on the torus")
    if m < 0:
        raise ValueError("tilt parameter must be >= 0")
    full = f.full()
    L = full.radius
    shape = [1] * f.dim
    shape[0] = 2 * L + 1
    factor = np.exp(m * np.arange(-L, L + 1)).reshape(shape)
    return FieldTable(f.geometry, full.values * factor, L, symmetric=False)


# --------------------------------------------------------------------------
# Dual grids
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DualGrid:
    """Values on a grid of frequencies in [-pi, pi)^d.

    ``kind="torus"``: the dual of T_r^d, frequencies 2*pi*j/r with
    j in {-floor((r-1)/2), ..., ceil((r-1)/2)}.
    ``kind="quadrature"``: the midpoint grid -pi + 2*pi*(j+1/2)/M.
    """

    kind: str
    dim: int
    size: int
    values: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("torus", "quadrature"):
            raise GeometryError(f"unknown grid kind {self.kind!r}")
        if self.size < 1:
            raise GeometryError("grid size must be positive")
        if self.kind == "quadrature" and self.size % 2:
            raise GeometryError("quadrature grids use an even number of points per axis")
        if self.values is not None and self.values.shape != (self.size,) * self.dim:
            raise GeometryError("grid values have the wrong shape")

    def axis(self) -> np.ndarray:
        M = self.size
        if self.kind == "torus":
            j = np.arange(-((M - 1) // 2), (M - 1) // 2 + (M - 1) % 2 + 1)
            return 2 * np.pi * j / M
        return -np.pi + 2 * np.pi * (np.arange(M) + 0.5) / M

    def frequencies(self) -> Iterator[tuple[float, ...]]:
        ax = self.axis()
        yield from itertools.product(ax, repeat=self.dim)

    def with_values(self, values: np.ndarray) -> "DualGrid":
        return DualGrid(self.kind, self.dim, self.size, values)

    def __len__(self) -> int:
        return self.size ** self.dim


def torus_dual_grid(dim: int, r: int) -> DualGrid:
    return DualGrid("torus", dim, r)


def quadrature_grid(dim: int, M: int) -> DualGrid:
    return DualGrid("quadrature", dim, M)


def _contract(values: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Apply a matrix along every axis: out[j...] = sum_x values[x...] prod mats[a][x_a, j_a]."""
    out = values
    for m in mats:
        out = np.tensordot(out, m, axes=([0], [0]))
    return out


def fourier(f: FieldTable, grid: DualGrid) -> DualGrid:
    """f_hat(k) = sum_x f(x) e^{i k.x} on every frequency of ``grid``."""
    if grid.dim != f.dim:
        raise GeometryError("grid and table dimensions differ")
    if f.geometry.is_torus and grid.kind == "torus" and grid.size != f.geometry.period:
        raise GeometryError("torus transform needs the dual grid of the same period")
    full = f.full()
    if f.geometry.is_torus:
        xs = np.arange(f.geometry.period)
    else:
        xs = np.arange(-full.radius, full.radius + 1)
    ks = grid.axis()
    mat = np.exp(1j * np.outer(xs, ks))
    return grid.with_values(_contract(full.values.astype(complex), [mat] * f.dim))


def inverse_fourier(grid: DualGrid, x) -> complex:
    """Grid average of f_hat(k) e^{-ik.x}.

    On a torus dual grid this is the exact inverse transform; on a
    quadrature grid it is the midpoint rule for the integral over [-pi,pi)^d.
    """
    if grid.values is None:
        raise ValueError("grid carries no values")
    if len(x) != grid.dim:
        raise GeometryError("point has wrong dimension")
    ks = grid.axis()
    mats = [np.exp(-1j * ks * int(c))[:, None] for c in x]
    return complex(_contract(grid.values, mats).reshape(()) / len(grid))


def tilted_step_transform(k: np.ndarray, m: float) -> np.ndarray:
    """Closed form of the tilted step transform, k has shape (..., d)."""
    k = np.asarray(k, dtype=float)
    d = k.shape[-1]
    out = (1j * np.sinh(m) * np.sin(k[..., 0]) + np.cosh(m) * np.cos(k[..., 0])) / d
    if d > 1:
        out = out + np.cos(k[..., 1:]).sum(axis=-1) / d
    return out


# --------------------------------------------------------------------------
# Hyperoctahedral symmetry helpers
# --------------------------------------------------------------------------


def canonical_points(dim: int, radius: int, l1_max: int | None = None) -> np.ndarray:
    """Sorted nonnegative points 0 <= a_1 <= ... <= a_d <= radius (rows)."""
    pts = np.array(list(itertools.combinations_with_replacement(range(radius + 1), dim)),
                   dtype=np.int64).reshape(-1, dim)
    if l1_max is not None:
        pts = pts[pts.sum(axis=1) <= l1_max]
    return pts


def orbit_size(a) -> int:
    """Size of the hyperoctahedral orbit of a point."""
    a = [abs(int(c)) for c in a]
    n = math.factorial(len(a))
    for v in set(a):
        n //= math.factorial(a.count(v))
    return n * 2 ** sum(1 for c in a if c != 0)


def orbit_points(a) -> list[tuple[int, ...]]:
    pts = set()
    for perm in set(itertools.permutations([abs(int(c)) for c in a])):
        for signs in itertools.product((1, -1), repeat=len(perm)):
            pts.add(tuple(s * c for s, c in zip(signs, perm)))
    return sorted(pts)


def octant_multiplicity(dim: int, radius: int) -> np.ndarray:
    """Number of Z^d points represented by each octant cell |x| = a."""
    m1 = np.full(radius + 1, 2.0)
    m1[0] = 1.0
    out = m1
    for _ in range(dim - 1):
        out = np.multiply.outer(out, m1)
    return out


def cosine_matrix(radius: int, ks: np.ndarray) -> np.ndarray:
    """cos(k * a) for a = 0..radius (rows) and k in ``ks`` (columns)."""
    return np.cos(np.outer(np.arange(radius + 1), ks))


def octant_cosine_transform(values: np.ndarray, ks: np.ndarray) -> np.ndarray:
    """Fourier transform of a reflection-invariant octant table on a product grid.

    Returns f_hat on the product grid ``ks**d``; only nonnegative frequencies
    are needed since f_hat is itself even in every k_j.
    """
    dim = values.ndim
    radius = values.shape[0] - 1
    weighted = values * octant_multiplicity(dim, radius)
    return _contract(weighted, [cosine_matrix(radius, ks)] * dim)


def octant_cosine_inverse(hat: np.ndarray, ks: np.ndarray, weights: np.ndarray,
                          norm: float, radius: int) -> np.ndarray:
    """Inverse of :func:`octant_cosine_transform` for an even f_hat.

    ``weights`` are the per-axis multiplicities of the nonnegative frequencies
    in the full grid and ``norm`` the total number of grid points.
    """
    dim = hat.ndim
    mat = (weights[:, None] * np.cos(np.outer(ks, np.arange(radius + 1))))
    return _contract(hat, [mat] * dim) / norm


def half_torus_axis(M: int) -> tuple[np.ndarray, np.ndarray]:
    """Nonnegative torus-dual frequencies 2*pi*l/M (l = 0..floor(M/2)) and multiplicities."""
    ls = np.arange(M // 2 + 1)
    w = np.full(ls.shape, 2.0)
    w[0] = 1.0
    if M % 2 == 0:
        w[-1] = 1.0
    return 2 * np.pi * ls / M, w


def half_midpoint_axis(M: int) -> tuple[np.ndarray, np.ndarray]:
    """Positive midpoint frequencies (M even); each stands for +k and -k."""
    if M % 2:
        raise GeometryError("midpoint grids use an even number of points per axis")
    ks = 2 * np.pi * (np.arange(M // 2) + 0.5) / M
    return ks, np.full(ks.shape, 2.0)
