"""Second-order Langevin-Stein operator and the ZVCV design matrix.

For a scalar ``u`` the operator is ``L2 u = laplacian(u) + grad(u) . grad log pi``.
Under mild tail conditions ``E_pi[L2 u] = 0``, so every column of the design
matrix is a mean-zero control variate.  Whether the target's tails decay
fast enough for this to hold cannot be checked from samples; that is the
caller's responsibility.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .basis import PolynomialBasis, _as_exponents, _as_point, monomial_grad, monomial_laplacian, monomial_table, power_table
from .errors import DimensionError


@dataclass(frozen=True)
class SampleSet:
    """Samples ``thetas`` (S, d) paired with ``grads`` = grad log pi at each row."""

    thetas: np.ndarray
    grads: np.ndarray

    def __post_init__(self):
        thetas = np.array(self.thetas, dtype=float)
        grads = np.array(self.grads, dtype=float)
        if thetas.ndim == 1:
            thetas = thetas[:, None]
        if grads.ndim == 1:
            grads = grads[:, None]
        if thetas.ndim != 2 or thetas.shape != grads.shape:
            raise DimensionError(f"thetas {thetas.shape} and grads {grads.shape} must have the same 2-d shape")
        if thetas.shape[0] < 1 or thetas.shape[1] < 1:
            raise DimensionError("a SampleSet needs at least one row and one column")
        if not np.all(np.isfinite(thetas)):
            raise ValueError("thetas contain non-finite values")
        if not np.all(np.isfinite(grads)):
            raise ValueError("grads contain non-finite values")
        thetas.setflags(write=False)
        grads.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "grads", grads)

    @property
    def n_samples(self) -> int:
        return self.thetas.shape[0]

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]

    def take(self, rows) -> "SampleSet":
        return SampleSet(self.thetas[rows], self.grads[rows])


@dataclass(frozen=True)
class DesignMatrix:
    """``values[i, j] = L2 theta^alpha_j`` evaluated at sample ``i``."""

    values: np.ndarray
    basis: PolynomialBasis

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.basis):
            raise DimensionError(f"design matrix of shape {values.shape} does not match a basis of {len(self.basis)} monomials")
        if not np.all(np.isfinite(values)):
            raise ValueError("design matrix contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    def columns(self, mask) -> np.ndarray:
        return self.values[:, np.asarray(mask, dtype=bool)]


def stein_l2(alpha, theta, grad) -> float:
    """Apply the second-order Langevin-Stein operator to ``theta^alpha`` at one point."""
    exps = _as_exponents(alpha)
    d = len(exps)
    theta = _as_point(theta, d)
    grad = _as_point(grad, d)
    return float(monomial_laplacian(exps, theta) + monomial_grad(exps, theta) @ grad)


def _l2_block(thetas: np.ndarray, grads: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    S, d = thetas.shape
    table = power_table(thetas, int(exponents.max(initial=0)))
    out = np.zeros((S, exponents.shape[0]))
    for j in range(d):
        a = exponents[:, j].astype(float)
        lowered = exponents.copy()
        lowered[:, j] -= 1
        out += monomial_table(thetas, lowered, table) * (a * grads[:, j : j + 1])
        lowered[:, j] -= 1
        out += monomial_table(thetas, lowered, table) * (a * (a - 1.0))
    return out


def build_design_matrix(samples: SampleSet, basis: PolynomialBasis, threads: int = 1) -> DesignMatrix:
    """Assemble the ``S x J`` ZVCV design matrix.

    Rows are independent, so with ``threads > 1`` they are computed in
    contiguous chunks; the entries are elementwise identical either way.
    """
    if samples.dim != basis.dim:
        raise DimensionError(f"samples have dimension {samples.dim} but the basis has dimension {basis.dim}")
    S = samples.n_samples
    exps = basis.exponents
    if threads <= 1 or S < 2 * threads:
        values = _l2_block(samples.thetas, samples.grads, exps)
    else:
        bounds = np.linspace(0, S, threads + 1).astype(int)
        chunks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        values = np.empty((S, len(basis)))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(lambda b: _l2_block(samples.thetas[b[0] : b[1]], samples.grads[b[0] : b[1]], exps), chunks)
            for (lo, hi), part in zip(chunks, parts):
                values[lo:hi] = part
    return DesignMatrix(values, basis)


@dataclass(frozen=True)
class ZeroMeanDiagnostic:
    """Per-column sample means, standard errors and ``|mean| <= 5 se`` flags."""

    mean: np.ndarray
    std_error: np.ndarray
    passed: np.ndarray

    @property
    def failed_columns(self) -> list[int]:
        return [int(j) for j in np.flatnonzero(~self.passed)]


def check_zero_mean(dm, n_se: float = 5.0) -> ZeroMeanDiagnostic:
    """Check each design column for the zero-mean property.

    The standard error assumes independent rows, so for MCMC output the
    check is optimistic.  A column that is identically zero passes.
    """
    values = dm.values if isinstance(dm, DesignMatrix) else np.asarray(dm, dtype=float)
    S = values.shape[0]
    mean = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / np.sqrt(S) if S > 1 else np.zeros(values.shape[1])
    passed = np.abs(mean) <= n_se * se
    return ZeroMeanDiagnostic(mean=mean, std_error=se, passed=passed)
