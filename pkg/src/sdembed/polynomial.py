"""Sparse multivariate polynomials over exponent multi-indices.

A multi-index is a tuple of non-negative integer exponents, one per
coordinate, naming the monomial x^n = prod_i x_i^{n_i}.  A Polynomial maps
multi-indices to float coefficients.  Terms whose coefficient is exactly
0.0 are never stored, and pruning uses an exact-zero test only, so the
sparsity pattern is never altered by epsilon thresholds.  Instances are
immutable after construction; every operation returns a new value.

Multi-index sets are enumerated in graded lexicographic order (total
degree first, then x_1 before x_2 before ...), which fixes the vector
layout used by the coefficient solver and the least-squares residuals.
"""

from __future__ import annotations

import itertools
import math
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

MultiIndex = tuple[int, ...]

__all__ = [
    "MultiIndex",
    "Polynomial",
    "grlex_key",
    "multi_index_set",
    "multinomial",
    "monomial_eval",
]


def grlex_key(index: MultiIndex):
    """Sort key for graded lexicographic order: degree, then x_1 > x_2 > ..."""
    return (sum(index), tuple(-e for e in index))


def multi_index_set(dim: int, order: int, mode: str = "total-degree") -> list[MultiIndex]:
    """Enumerate multi-indices up to an order cap, in graded lexicographic order.

    mode "total-degree" keeps sum(n) <= order, giving C(order+dim, dim)
    indices; mode "max-degree" keeps max(n) <= order, giving (order+1)**dim.
    """
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    if mode not in ("total-degree", "max-degree"):
        raise ValueError(f"unknown mode {mode!r}")
    indices = itertools.product(range(order + 1), repeat=dim)
    if mode == "total-degree":
        out = [n for n in indices if sum(n) <= order]
    else:
        out = list(indices)
    out.sort(key=grlex_key)
    return out


def multinomial(k: int, parts: Iterable[int]) -> int:
    """Number of ways to split k items into groups of the given sizes.

    Exact integer k! / prod(parts_i!); the parts must be non-negative and
    sum to k.
    """
    parts = tuple(int(p) for p in parts)
    if any(p < 0 for p in parts):
        raise ValueError(f"parts must be non-negative, got {parts}")
    if sum(parts) != k:
        raise ValueError(f"parts {parts} do not sum to k={k}")
    out = math.factorial(k)
    for p in parts:
        out //= math.factorial(p)
    return out


def monomial_eval(index: MultiIndex, x) -> float | np.ndarray:
    """Evaluate x^index with the 0**0 = 1 convention.

    x may be a single point of shape (dim,) or a batch (..., dim); the
    result is a float or an array of shape (...,).
    """
    x = np.asarray(x, dtype=float)
    exps = np.asarray(index, dtype=np.int64)
    if x.shape[-1] != exps.shape[0]:
        raise ValueError(f"point dimension {x.shape[-1]} != index dimension {exps.shape[0]}")
    out = np.prod(x**exps, axis=-1)
    return float(out) if out.ndim == 0 else out


class Polynomial:
    """Immutable sparse polynomial with float coefficients."""

    __slots__ = ("_dim", "_terms")

    def __init__(self, dim: int, terms: Mapping[MultiIndex, float] | None = None):
        dim = int(dim)
        if dim < 1:
            raise ValueError(f"dimension must be >= 1, got {dim}")
        clean: dict[MultiIndex, float] = {}
        for index, coef in (terms or {}).items():
            index = tuple(int(e) for e in index)
            if len(index) != dim:
                raise ValueError(f"index {index} has length {len(index)}, expected {dim}")
            if any(e < 0 for e in index):
                raise ValueError(f"negative exponent in index {index}")
            coef = float(coef)
            if coef != 0.0:
                clean[index] = coef
        self._dim = dim
        # canonical term order makes evaluation and repr deterministic
        self._terms = dict(sorted(clean.items(), key=lambda kv: grlex_key(kv[0])))

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def terms(self) -> Mapping[MultiIndex, float]:
        return MappingProxyType(self._terms)

    @classmethod
    def zero(cls, dim: int) -> "Polynomial":
        return cls(dim, {})

    @classmethod
    def constant(cls, dim: int, value: float) -> "Polynomial":
        return cls(dim, {(0,) * dim: value})

    @classmethod
    def variable(cls, dim: int, axis: int) -> "Polynomial":
        """The coordinate polynomial x_axis (axis is 0-based)."""
        if not 0 <= axis < dim:
            raise ValueError(f"axis {axis} out of range for dimension {dim}")
        index = tuple(1 if d == axis else 0 for d in range(dim))
        return cls(dim, {index: 1.0})

    @classmethod
    def monomial(cls, dim: int, index: MultiIndex, coef: float = 1.0) -> "Polynomial":
        return cls(dim, {tuple(index): coef})

    def coefficient(self, index: MultiIndex) -> float:
        return self._terms.get(tuple(index), 0.0)

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        """Total degree; the zero polynomial reports degree 0."""
        return max((sum(n) for n in self._terms), default=0)

    def _coerce(self, other) -> "Polynomial | None":
        if isinstance(other, Polynomial):
            if other._dim != self._dim:
                raise ValueError(f"dimension mismatch: {self._dim} vs {other._dim}")
            return other
        if isinstance(other, (int, float)):
            return Polynomial.constant(self._dim, other)
        return None

    def __add__(self, other) -> "Polynomial":
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        acc = dict(self._terms)
        for index, coef in other._terms.items():
            acc[index] = acc.get(index, 0.0) + coef
        return Polynomial(self._dim, acc)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self._dim, {n: -c for n, c in self._terms.items()})

    def __sub__(self, other) -> "Polynomial":
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "Polynomial":
        return (-self) + other

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            return Polynomial(self._dim, {n: c * other for n, c in self._terms.items()})
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        acc: dict[MultiIndex, list[float]] = {}
        for na, ca in self._terms.items():
            for nb, cb in other._terms.items():
                key = tuple(a + b for a, b in zip(na, nb))
                acc.setdefault(key, []).append(ca * cb)
        # fsum is exactly rounded, so the result is independent of term order
        # and multiplication commutes bit-for-bit
        return Polynomial(self._dim, {key: math.fsum(vals) for key, vals in acc.items()})

    __rmul__ = __mul__

    def __pow__(self, exponent: int) -> "Polynomial":
        if not isinstance(exponent, int) or exponent < 0:
            raise ValueError("exponent must be a non-negative integer")
        out = Polynomial.constant(self._dim, 1.0)
        for _ in range(exponent):
            out = out * self
        return out

    def derivative(self, axis: int) -> "Polynomial":
        """Partial derivative with respect to x_axis (axis is 0-based)."""
        if not 0 <= axis < self._dim:
            raise ValueError(f"axis {axis} out of range for dimension {self._dim}")
        acc: dict[MultiIndex, float] = {}
        for index, coef in self._terms.items():
            e = index[axis]
            if e == 0:
                continue
            lowered = tuple(v - 1 if d == axis else v for d, v in enumerate(index))
            acc[lowered] = acc.get(lowered, 0.0) + coef * e
        return Polynomial(self._dim, acc)

    def shift(self, offset) -> "Polynomial":
        """Re-expand around a translated origin: returns q with q(y) = p(y + offset)."""
        offset = tuple(float(c) for c in offset)
        if len(offset) != self._dim:
            raise ValueError(f"offset length {len(offset)} != dimension {self._dim}")
        acc: dict[MultiIndex, float] = {}
        for index, coef in self._terms.items():
            for sub in itertools.product(*(range(e + 1) for e in index)):
                w = coef
                for e, j, c in zip(index, sub, offset):
                    w *= math.comb(e, j) * c ** (e - j)
                if w != 0.0:
                    acc[sub] = acc.get(sub, 0.0) + w
        return Polynomial(self._dim, acc)

    def evaluate(self, x) -> float | np.ndarray:
        """Evaluate at a point (dim,) or a batch (..., dim) of points."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self._dim:
            raise ValueError(f"point dimension {x.shape[-1]} != polynomial dimension {self._dim}")
        out = np.zeros(x.shape[:-1])
        for index, coef in self._terms.items():
            out = out + coef * np.prod(x ** np.asarray(index, dtype=np.int64), axis=-1)
        return float(out) if out.ndim == 0 else out

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._dim == other._dim and self._terms == other._terms

    __hash__ = None  # mutable-looking value semantics; not hashable

    def allclose(self, other: "Polynomial", rel_tol: float = 1e-12, abs_tol: float = 0.0) -> bool:
        """Coefficient-wise closeness over the union of term indices."""
        if self._dim != other._dim:
            return False
        for index in self._terms.keys() | other._terms.keys():
            a = self._terms.get(index, 0.0)
            b = other._terms.get(index, 0.0)
            if abs(a - b) > max(abs_tol, rel_tol * max(abs(a), abs(b))):
                return False
        return True

    def __repr__(self) -> str:
        if not self._terms:
            return f"Polynomial({self._dim}, 0)"
        bits = []
        for index, coef in self._terms.items():
            mono = "*".join(f"x{d + 1}^{e}" for d, e in enumerate(index) if e > 0)
            bits.append(f"{coef:g}*{mono}" if mono else f"{coef:g}")
        return f"Polynomial({self._dim}, {' + '.join(bits)})"
