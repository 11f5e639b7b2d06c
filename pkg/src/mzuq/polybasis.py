"""Orthogonal polynomial families, product tensors and quadrature rules.

Legendre polynomials live on [-1, 1] with the uniform half weight dxi/2.
Hermite polynomials are the probabilists' family, standardized per
coordinate by a Gaussian measure and divided by sqrt(n!) so the tensor
products are orthonormal under that measure.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, MeasureError, OrderError

ZERO_TOL = 1e-14

STANDARD = "standard"
ORTHONORMAL = "orthonormal"

E_NORMALIZED = "e-normalized"
C_RATIO = "c-ratio"


# ---------------------------------------------------------------------------
# Legendre


@dataclass(frozen=True)
class LegendreFamily:
    max_order: int
    normalization: str = STANDARD

    def __post_init__(self):
        if self.normalization not in (STANDARD, ORTHONORMAL):
            raise ConfigError(f"unknown Legendre normalization {self.normalization!r}")
        if self.max_order < 0:
            raise OrderError("max_order must be nonnegative")

    def norm_sq(self, n):
        """E[phi_n^2] under the half weight."""
        n = np.asarray(n)
        if self.normalization == ORTHONORMAL:
            return np.ones_like(n, dtype=float)
        return 1.0 / (2.0 * n + 1.0)

    def table(self, xi) -> np.ndarray:
        """Values of phi_0..phi_M at xi; shape ``xi.shape + (M+1,)``."""
        xi = np.asarray(xi, dtype=float)
        M = self.max_order
        out = np.empty(xi.shape + (M + 1,))
        out[..., 0] = 1.0
        if M >= 1:
            out[..., 1] = xi
        for n in range(1, M):
            out[..., n + 1] = ((2 * n + 1) * xi * out[..., n] - n * out[..., n - 1]) / (n + 1)
        if self.normalization == ORTHONORMAL:
            out *= np.sqrt(2.0 * np.arange(M + 1) + 1.0)
        return out


def legendre_eval(family: LegendreFamily, n: int, xi):
    """phi_n(xi) by the three-term recurrence."""
    if not 0 <= n <= family.max_order:
        raise OrderError(f"order {n} outside [0, {family.max_order}]")
    sub = LegendreFamily(n, family.normalization)
    val = sub.table(xi)[..., n]
    return float(val) if np.ndim(val) == 0 else val


def gauss_legendre(n: int):
    """n-point Gauss-Legendre nodes and weights on [-1, 1] (weights sum to 2)."""
    if n < 1:
        raise ConfigError("Gauss-Legendre needs at least one point")
    return np.polynomial.legendre.leggauss(n)


def _half_weight_rule(degree: int):
    # Gauss-Legendre exact for the requested polynomial degree, half weight.
    n = degree // 2 + 1
    x, w = gauss_legendre(n)
    return x, 0.5 * w


def _clean(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a[np.abs(a) < ZERO_TOL] = 0.0
    return a


def _symmetrize(T: np.ndarray) -> np.ndarray:
    # every entry takes the value stored at its sorted index, so permutations agree bitwise
    grids = np.meshgrid(*[np.arange(n) for n in T.shape], indexing="ij")
    srt = np.sort(np.stack(grids), axis=0)
    return T[tuple(srt)]


def _triangle_mask(M: int) -> np.ndarray:
    """True where E[P_l P_m P_r] may be nonzero (triangle + parity rule)."""
    idx = np.arange(M + 1)
    l, m, r = np.meshgrid(idx, idx, idx, indexing="ij")
    return (l + m >= r) & (l + r >= m) & (m + r >= l) & ((l + m + r) % 2 == 0)


def triple_tensor(family: LegendreFamily, M: int, convention: str = E_NORMALIZED) -> np.ndarray:
    """Dense (M+1)^3 array of triple-product integrals.

    ``e-normalized`` gives E[phi_i phi_j phi_k]; ``c-ratio`` divides by
    E[phi_r^2] along the last axis.  The sparsity pattern is imposed before
    integration so structural zeros are exact.
    """
    if M < 0:
        raise OrderError("M must be nonnegative")
    if convention not in (E_NORMALIZED, C_RATIO):
        raise ConfigError(f"unknown triple-tensor convention {convention!r}")
    fam = LegendreFamily(M, family.normalization)
    x, w = _half_weight_rule(3 * M)
    P = fam.table(x)
    T = np.einsum("q,qi,qj,qk->ijk", w, P, P, P)
    T = np.where(_triangle_mask(M), _symmetrize(T), 0.0)
    if convention == C_RATIO:
        T = T / fam.norm_sq(np.arange(M + 1))[None, None, :]
    return _clean(T)


def quad_tensor(family: LegendreFamily, M: int) -> np.ndarray:
    """Dense (M+1)^4 array of E[phi_a phi_b phi_c phi_d] under the half weight."""
    if M < 0:
        raise OrderError("M must be nonnegative")
    fam = LegendreFamily(M, family.normalization)
    x, w = _half_weight_rule(4 * M)
    P = fam.table(x)
    D = _symmetrize(np.einsum("q,qa,qb,qc,qd->abcd", w, P, P, P, P))
    idx = np.arange(M + 1)
    odd = (idx[:, None, None, None] + idx[None, :, None, None]
           + idx[None, None, :, None] + idx[None, None, None, :]) % 2 == 1
    D[odd] = 0.0
    return _clean(D)


def nonzero_entries(T: np.ndarray):
    """(index tuple, value) pairs for nonzero entries, in C order."""
    return [(tuple(int(i) for i in ix), float(T[ix])) for ix in zip(*np.nonzero(T))]


# ---------------------------------------------------------------------------
# Multi-indices and Hermite bases


@dataclass(frozen=True)
class MultiIndex:
    exponents: tuple

    @property
    def order(self) -> int:
        return sum(self.exponents)

    def __iter__(self):
        return iter(self.exponents)

    def __str__(self):
        return "".join(str(e) for e in self.exponents)


def total_degree_indices(d: int, p: int) -> list[MultiIndex]:
    """All multi-indices with |mu| <= p, graded then reverse-lexicographic.

    In two dimensions this gives 00, 10, 01, 20, 11, 02, ...
    """
    out = []
    for order in range(p + 1):
        level = [c for c in itertools.product(range(order + 1), repeat=d) if sum(c) == order]
        level.sort(reverse=True)
        out.extend(MultiIndex(tuple(c)) for c in level)
    return out


@dataclass(frozen=True)
class GaussianMeasure:
    means: tuple
    variances: tuple

    def __post_init__(self):
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        object.__setattr__(self, "variances", tuple(float(v) for v in self.variances))
        if len(self.means) != len(self.variances):
            raise MeasureError("means and variances differ in length")
        if any(not v > 0 for v in self.variances):
            raise MeasureError("all variances must be strictly positive")

    @property
    def dim(self) -> int:
        return len(self.means)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.array(self.variances))

    def marginal(self, coords: Sequence[int]) -> "GaussianMeasure":
        return GaussianMeasure([self.means[i] for i in coords], [self.variances[i] for i in coords])


def _hermite_table(z: np.ndarray, n: int) -> np.ndarray:
    """Normalized probabilists' Hermite He_k(z)/sqrt(k!) for k = 0..n."""
    out = np.empty(z.shape + (n + 1,))
    out[..., 0] = 1.0
    if n >= 1:
        out[..., 1] = z
    for k in range(1, n):
        # He_{k+1} = z He_k - k He_{k-1}, rescaled by sqrt((k+1)!)
        out[..., k + 1] = (z * out[..., k] - math.sqrt(k) * out[..., k - 1]) / math.sqrt(k + 1)
    return out


@dataclass(frozen=True)
class HermiteBasisSet:
    measure: GaussianMeasure
    indices: tuple
    _exps: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_exps", np.array([tuple(m) for m in self.indices], dtype=int))

    def __len__(self):
        return len(self.indices)

    @property
    def p(self) -> int:
        return int(self._exps.sum(axis=1).max())

    def _tables(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.measure.dim:
            raise MeasureError(f"expected {self.measure.dim} coordinates, got {x.shape[-1]}")
        z = (x - np.array(self.measure.means)) / self.measure.std
        return [_hermite_table(z[..., i], self.p) for i in range(self.measure.dim)]

    def evaluate(self, x) -> np.ndarray:
        """h^nu(x) for every basis index; shape ``x.shape[:-1] + (len(self),)``."""
        tabs = self._tables(x)
        out = np.ones(np.shape(x)[:-1] + (len(self),))
        for i, tab in enumerate(tabs):
            out *= tab[..., self._exps[:, i]]
        return out

    def gradient(self, x) -> np.ndarray:
        """dh^nu/dx_i; shape ``x.shape[:-1] + (len(self), dim)``."""
        tabs = self._tables(x)
        d = self.measure.dim
        std = self.measure.std
        vals = [tab[..., self._exps[:, i]] for i, tab in enumerate(tabs)]
        ders = []
        for i, tab in enumerate(tabs):
            e = self._exps[:, i]
            lower = tab[..., np.maximum(e - 1, 0)]
            ders.append(np.sqrt(e) * lower / std[i])
        out = np.empty(np.shape(x)[:-1] + (len(self), d))
        for i in range(d):
            prod = ders[i].copy()
            for j in range(d):
                if j != i:
                    prod *= vals[j]
            out[..., i] = prod
        return out


def hermite_basis(measure: GaussianMeasure, p: int) -> HermiteBasisSet:
    if p < 0:
        raise OrderError("basis order must be nonnegative")
    if measure.dim < 1:
        raise MeasureError("measure needs at least one coordinate")
    return HermiteBasisSet(measure, tuple(total_degree_indices(measure.dim, p)))


# ---------------------------------------------------------------------------
# Quadrature


GAUSS_LEGENDRE = "gauss-legendre"
GH_TENSOR = "gauss-hermite-tensor"
SMOLYAK = "smolyak-gauss-hermite"


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    kind: str

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def __len__(self):
        return len(self.weights)

    def integrate(self, f: Callable) -> float:
        return float(self.weights @ f(self.nodes))


def _gh_standard(n: int):
    z, w = np.polynomial.hermite_e.hermegauss(n)
    return z, w / math.sqrt(2.0 * math.pi)


def smolyak_points(level: int) -> int:
    """Univariate Gauss-Hermite size used at a Smolyak level (1, 3, 5, ...)."""
    return 2 * level - 1


def _tensor(rules):
    nodes = np.array(list(itertools.product(*[r[0] for r in rules])), dtype=float)
    weights = np.array([math.prod(c) for c in itertools.product(*[r[1] for r in rules])])
    return nodes.reshape(len(weights), len(rules)), weights


def _smolyak_standard(d: int, level: int):
    # Combination formula over multi-levels i with d <= |i| <= d + level - 1.
    q = d + level - 1
    acc: dict = {}
    for i in itertools.product(range(1, level + 1), repeat=d):
        s = sum(i)
        if not (max(q - d + 1, d) <= s <= q):
            continue
        coef = (-1) ** (q - s) * math.comb(d - 1, q - s)
        nodes, weights = _tensor([_gh_standard(smolyak_points(l)) for l in i])
        for x, w in zip(nodes, weights):
            key = tuple(np.round(x, 12) + 0.0)
            acc[key] = acc.get(key, 0.0) + coef * w
    keys = sorted(acc)
    nodes = np.array(keys, dtype=float).reshape(len(keys), d)
    weights = np.array([acc[k] for k in keys])
    keep = np.abs(weights) > 1e-15
    return nodes[keep], weights[keep]


def quadrature(kind: str, dimension: int, level: int, measure: GaussianMeasure | None = None) -> QuadratureRule:
    """Build a quadrature rule.

    ``level`` is the point count per dimension for the tensor rules and the
    Smolyak level (1 = single centre point) for the sparse grid.  Hermite
    rules integrate against ``measure`` (standard normal by default) with
    weights summing to one.
    """
    if dimension < 1 or level < 1:
        raise ConfigError("dimension and level must be >= 1")
    if kind == GAUSS_LEGENDRE:
        x, w = gauss_legendre(level)
        nodes, weights = _tensor([(x, w)] * dimension)
        return QuadratureRule(nodes, weights, kind)
    if kind not in (GH_TENSOR, SMOLYAK):
        raise ConfigError(f"unsupported quadrature kind {kind!r}")
    if measure is None:
        measure = GaussianMeasure([0.0] * dimension, [1.0] * dimension)
    if measure.dim != dimension:
        raise MeasureError("measure dimension does not match rule dimension")
    if kind == GH_TENSOR:
        nodes, weights = _tensor([_gh_standard(level)] * dimension)
    else:
        nodes, weights = _smolyak_standard(dimension, level)
    nodes = np.array(measure.means) + nodes * measure.std
    return QuadratureRule(nodes, weights, kind)


def product_rule(parts: Sequence[tuple[Sequence[int], QuadratureRule]], dimension: int) -> QuadratureRule:
    """Tensor product of rules acting on disjoint coordinate groups."""
    covered = sorted(i for coords, _ in parts for i in coords)
    if covered != list(range(dimension)):
        raise ConfigError("coordinate groups must partition the dimension")
    idx = [np.arange(len(r)) for _, r in parts]
    combos = np.array(list(itertools.product(*idx)), dtype=int).reshape(-1, len(parts))
    nodes = np.empty((len(combos), dimension))
    weights = np.ones(len(combos))
    for g, (coords, rule) in enumerate(parts):
        nodes[:, list(coords)] = rule.nodes[combos[:, g]]
        weights *= rule.weights[combos[:, g]]
    kind = "+".join(r.kind for _, r in parts)
    return QuadratureRule(nodes, weights, kind)


def inner_product(f: Callable, g: Callable, rule: QuadratureRule, arity: int | None = None) -> float:
    """Sum of weights * f(node) * g(node)."""
    if arity is not None and arity != rule.dim:
        raise MeasureError(f"function arity {arity} does not match rule dimension {rule.dim}")
    return float(np.sum(rule.weights * f(rule.nodes) * g(rule.nodes)))
