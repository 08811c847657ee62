"""Multivariate monomial bases in graded-lexicographic order.

A basis of order ``Q`` in ``d`` dimensions holds every exponent vector
``alpha`` with ``0 < |alpha| <= Q``; there are ``C(Q + d, d) - 1`` of them.
Monomials of order 1 come first, then order 2, and so on, so the monomials
up to any lower order form a prefix of the basis.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DimensionError

_INT64_MAX = np.iinfo(np.int64).max
# enumerating beyond this many monomials is never what a caller wants
MAX_BASIS_SIZE = 5_000_000


@dataclass(frozen=True)
class MultiIndex:
    """Exponent vector of a single monomial ``theta^alpha``."""

    exponents: tuple[int, ...]

    def __post_init__(self):
        exps = tuple(int(a) for a in self.exponents)
        if any(a < 0 for a in exps):
            raise ValueError(f"exponents must be non-negative, got {exps}")
        object.__setattr__(self, "exponents", exps)

    @property
    def dim(self) -> int:
        return len(self.exponents)

    @property
    def order(self) -> int:
        return sum(self.exponents)

    def __len__(self):
        return len(self.exponents)

    def __iter__(self):
        return iter(self.exponents)

    def __getitem__(self, i):
        return self.exponents[i]


def _as_exponents(alpha) -> tuple[int, ...]:
    if isinstance(alpha, MultiIndex):
        return alpha.exponents
    return MultiIndex(tuple(alpha)).exponents


def _checked(value: int) -> int:
    if value > _INT64_MAX:
        raise OverflowError(f"monomial count {value} does not fit in a 64-bit integer")
    return value


def count_exact_order(d: int, q: int) -> int:
    """Number of monomials in ``d`` variables of total order exactly ``q``."""
    if d < 1 or q < 1:
        raise ValueError(f"need d >= 1 and q >= 1, got d={d}, q={q}")
    return _checked(math.comb(d + q - 1, q))


def basis_size(d: int, Q: int) -> int:
    """``C(Q + d, d) - 1``: monomials with ``0 < |alpha| <= Q``."""
    if d < 1 or Q < 1:
        raise ValueError(f"need d >= 1 and Q >= 1, got d={d}, Q={Q}")
    return _checked(math.comb(Q + d, d) - 1)


@dataclass(frozen=True)
class PolynomialBasis:
    """Ordered monomial basis of a polynomial class of maximum order ``max_order``."""

    dim: int
    max_order: int
    indices: tuple[MultiIndex, ...]

    def __len__(self):
        return len(self.indices)

    @cached_property
    def exponents(self) -> np.ndarray:
        """``(J, d)`` integer array of exponents, one row per monomial."""
        arr = np.array([m.exponents for m in self.indices], dtype=np.int64)
        arr = arr.reshape(len(self.indices), self.dim)
        arr.setflags(write=False)
        return arr

    @cached_property
    def orders(self) -> np.ndarray:
        out = self.exponents.sum(axis=1)
        out.setflags(write=False)
        return out

    def prefix_size(self, q: int) -> int:
        """Number of leading monomials with order ``<= q``."""
        if q >= self.max_order:
            return len(self)
        return basis_size(self.dim, q) if q >= 1 else 0

    def evaluate(self, thetas) -> np.ndarray:
        """Evaluate all monomials at the rows of ``thetas``; returns ``(S, J)``."""
        thetas = _as_points(thetas, self.dim)
        return monomial_table(thetas, self.exponents)


def enumerate_basis(d: int, Q: int) -> PolynomialBasis:
    """All multi-indices with ``0 < |alpha| <= Q`` in graded-lex order.

    Within one order block exponents are sorted in descending lexicographic
    order, e.g. ``(2,0), (1,1), (0,2)``.
    """
    if d < 1 or Q < 1:
        raise ValueError(f"need d >= 1 and Q >= 1, got d={d}, Q={Q}")
    J = basis_size(d, Q)
    if J > MAX_BASIS_SIZE:
        raise OverflowError(f"basis with d={d}, Q={Q} has {J} monomials (limit {MAX_BASIS_SIZE})")
    indices = []
    for q in range(1, Q + 1):
        # combinations_with_replacement over variable slots yields exactly
        # descending-lex exponent vectors
        for combo in itertools.combinations_with_replacement(range(d), q):
            exps = [0] * d
            for i in combo:
                exps[i] += 1
            indices.append(MultiIndex(tuple(exps)))
    return PolynomialBasis(dim=d, max_order=Q, indices=tuple(indices))


def _as_point(theta, d: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (d,):
        raise DimensionError(f"expected a point of dimension {d}, got shape {theta.shape}")
    return theta


def _as_points(thetas, d: int) -> np.ndarray:
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim == 1 and d == 1:
        thetas = thetas[:, None]
    if thetas.ndim != 2 or thetas.shape[1] != d:
        raise DimensionError(f"expected an (S, {d}) array, got shape {thetas.shape}")
    return thetas


def power_table(thetas: np.ndarray, max_power: int) -> np.ndarray:
    """``P[s, i, p] = thetas[s, i] ** p`` for ``p = 0..max_power`` (0**0 = 1)."""
    S, d = thetas.shape
    table = np.empty((S, d, max_power + 1))
    table[:, :, 0] = 1.0
    for p in range(1, max_power + 1):
        table[:, :, p] = table[:, :, p - 1] * thetas
    return table


def monomial_table(thetas: np.ndarray, exponents: np.ndarray, table: np.ndarray | None = None) -> np.ndarray:
    """Monomial values ``theta_s^alpha_j`` as an ``(S, J)`` array.

    Negative exponents are clamped to zero; callers multiply such entries by
    a zero coefficient.
    """
    exponents = np.maximum(exponents, 0)
    if table is None:
        table = power_table(thetas, int(exponents.max(initial=0)))
    S, d = thetas.shape
    out = np.ones((S, exponents.shape[0]))
    for i in range(d):
        out *= table[:, i, exponents[:, i]]
    return out


def eval_monomial(alpha, theta) -> float:
    """``prod_i theta_i ** alpha_i`` with ``0 ** 0 = 1``."""
    exps = _as_exponents(alpha)
    theta = _as_point(theta, len(exps))
    out = 1.0
    for t, a in zip(theta, exps):
        out *= t**a
    return float(out)


def monomial_grad(alpha, theta) -> np.ndarray:
    """Gradient of ``theta^alpha``; component ``j`` is ``alpha_j theta^(alpha - e_j)``."""
    exps = _as_exponents(alpha)
    theta = _as_point(theta, len(exps))
    grad = np.zeros(len(exps))
    for j, a in enumerate(exps):
        if a == 0:
            continue
        lowered = list(exps)
        lowered[j] -= 1
        grad[j] = a * eval_monomial(lowered, theta)
    return grad


def monomial_laplacian(alpha, theta) -> float:
    """``sum_j alpha_j (alpha_j - 1) theta^(alpha - 2 e_j)``."""
    exps = _as_exponents(alpha)
    theta = _as_point(theta, len(exps))
    total = 0.0
    for j, a in enumerate(exps):
        if a < 2:
            continue
        lowered = list(exps)
        lowered[j] -= 2
        total += a * (a - 1) * eval_monomial(lowered, theta)
    return float(total)


def expected_srswor_order(d: int, Q: int) -> float:
    """Mean total order of one column drawn uniformly from the order-``Q`` basis."""
    counts = [count_exact_order(d, q) for q in range(1, Q + 1)]
    return sum(q * c for q, c in zip(range(1, Q + 1), counts)) / sum(counts)


def order_counts(d: int, Q: int) -> Sequence[int]:
    return [count_exact_order(d, q) for q in range(1, Q + 1)]
