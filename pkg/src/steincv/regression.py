"""Linear solvers behind ZVCV: OLS, ridge, LASSO and k-fold cross-validation.

Every solver fits ``f ~ Z beta + alpha`` column by column for an ``(S, T)``
integrand matrix.  The intercept is never penalised; it is recovered from
column means after fitting on centred data.

Penalised objectives use the raw residual sum of squares::

    ||Z beta + alpha - f||^2 + lam * ||beta||_1        (lasso)
    ||Z beta + alpha - f||^2 + lam * ||beta||_2^2      (ridge)

Libraries that scale the loss by ``1 / (2 S)`` (scikit-learn, glmnet) use
``lam_lib = lam / (2 S)`` for the same lasso problem.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, DimensionError, IdentifiabilityError, SingularDesignError

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
LASSO_TOL = 1e-7
LASSO_MAX_SWEEPS = 10_000
DEFAULT_N_LAMBDAS = 100
DEFAULT_LAMBDA_MIN = 1e-8


@dataclass(frozen=True)
class FitResult:
    """Coefficients of one linear fit per integrand column.

    Attributes:
        intercept: ``(T,)`` fitted intercepts.
        coefficients: ``(J, T)`` fitted slopes in the original column scale.
        method: ``"ols"``, ``"ridge"`` or ``"lasso"``.
        lam: penalty per column (``None`` for OLS).
    """

    intercept: np.ndarray
    coefficients: np.ndarray
    method: str = "ols"
    lam: np.ndarray | None = None
    info: dict = field(default_factory=dict, compare=False)

    def predict(self, Z) -> np.ndarray:
        return _design_values(Z) @ self.coefficients + self.intercept

    def residuals(self, Z, F) -> np.ndarray:
        return _as_targets(F, _design_values(Z).shape[0]) - self.predict(Z)


def _design_values(Z) -> np.ndarray:
    values = getattr(Z, "values", Z)
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise DimensionError(f"design matrix must be 2-d, got shape {values.shape}")
    return values


def _as_targets(F, S: int) -> np.ndarray:
    F = np.asarray(getattr(F, "values", F), dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if F.ndim != 2 or F.shape[0] != S:
        raise DimensionError(f"integrand matrix of shape {F.shape} does not have {S} rows")
    if not np.all(np.isfinite(F)):
        raise ValueError("integrand matrix contains non-finite values")
    return F


def _prepare(Z, F):
    Zv = _design_values(Z)
    return Zv, _as_targets(F, Zv.shape[0])


def _check_lambda(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(~np.isfinite(lam) & ~np.isposinf(lam)) or np.any(lam < 0):
        raise ValueError(f"penalty must be non-negative, got {lam}")
    return lam


def _standardise(Zv: np.ndarray):
    """Centre columns and scale them to unit (population) standard deviation.

    Constant columns keep scale 1 and become exactly zero.
    """
    mean = Zv.mean(axis=0)
    centred = Zv - mean
    scale = np.sqrt(np.mean(centred**2, axis=0))
    scale = np.where(scale > 0, scale, 1.0)
    return centred / scale, mean, scale


def solve_ols(Z, F) -> FitResult:
    """Least squares with intercept via one pivoted QR shared by all columns.

    Raises:
        IdentifiabilityError: ``S <= J``.
        SingularDesignError: the centred design is rank deficient; the
            error lists the pivoted-out columns.
    """
    Zv, Fv = _prepare(Z, F)
    S, J = Zv.shape
    if S <= J:
        raise IdentifiabilityError(f"OLS needs more samples than columns: S={S}, J={J}")
    zmean = Zv.mean(axis=0)
    fmean = Fv.mean(axis=0)
    Zc = Zv - zmean
    Fc = Fv - fmean
    if J == 0:
        return FitResult(fmean, np.zeros((0, Fv.shape[1])), "ols")
    Qm, R, perm = scipy.linalg.qr(Zc, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[0] == 0 or np.any(diag < RANK_TOL * diag[0]):
        bad = perm[diag < RANK_TOL * max(diag[0], np.finfo(float).tiny)] if diag[0] > 0 else perm
        raise SingularDesignError(f"design matrix is rank deficient; dependent columns {sorted(bad.tolist())}", columns=sorted(bad.tolist()))
    coef_perm = scipy.linalg.solve_triangular(R, Qm.T @ Fc)
    coef = np.empty_like(coef_perm)
    coef[perm] = coef_perm
    intercept = fmean - zmean @ coef
    return FitResult(intercept, coef, "ols")


def _ridge_coefs(U, s, Vt, Fs, lam):
    """Ridge solution on standardised data from a thin SVD, one ``lam`` for all columns."""
    if lam == 0:
        keep = s > RANK_TOL * (s[0] if s.size else 0.0)
        shrink = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    else:
        shrink = s / (s**2 + lam)
    return Vt.T @ (shrink[:, None] * (U.T @ Fs))


def solve_ridge(Z, F, lam, standardize: bool = True) -> FitResult:
    """Ridge regression with unpenalised intercept.

    ``lam`` may be a scalar or one value per integrand column.  With
    ``standardize`` the penalty acts on coefficients of unit-variance
    columns; coefficients are returned in the original scale.  ``lam = 0``
    is plain OLS and inherits its identifiability checks.
    """
    Zv, Fv = _prepare(Z, F)
    S, J = Zv.shape
    T = Fv.shape[1]
    lams = np.broadcast_to(_check_lambda(lam), (T,)).astype(float)
    if np.all(lams == 0):
        ols = solve_ols(Zv, Fv)
        return FitResult(ols.intercept, ols.coefficients, "ridge", lams)
    if standardize:
        Zs, zmean, zscale = _standardise(Zv)
    else:
        zmean = Zv.mean(axis=0)
        Zs, zscale = Zv - zmean, np.ones(J)
    fmean = Fv.mean(axis=0)
    Fc = Fv - fmean
    U, s, Vt = np.linalg.svd(Zs, full_matrices=False)
    coef = np.empty((J, T))
    for lam_value in np.unique(lams):
        cols = np.flatnonzero(lams == lam_value)
        if np.isposinf(lam_value):
            coef[:, cols] = 0.0
        else:
            coef[:, cols] = _ridge_coefs(U, s, Vt, Fc[:, cols], lam_value)
    coef = coef / zscale[:, None]
    intercept = fmean - zmean @ coef
    return FitResult(intercept, coef, "ridge", lams)


def _lasso_cd(G, c, lam, beta0=None, tol=LASSO_TOL, max_sweeps=LASSO_MAX_SWEEPS):
    """Cyclic coordinate descent on ``b' G b - 2 c' b + lam |b|_1``.

    ``G`` is the Gram matrix of the (centred, scaled) design and ``c`` the
    cross-products with the centred response; ``c`` may have several
    columns sharing ``lam``.
    """
    J, T = c.shape
    beta = np.zeros((J, T)) if beta0 is None else beta0.copy()
    grad = c - G @ beta
    diag = np.diag(G).copy()
    active = np.flatnonzero(diag > 0)
    half = 0.5 * lam
    for sweep in range(1, max_sweeps + 1):
        max_change = 0.0
        for j in active:
            old = beta[j]
            rho = grad[j] + diag[j] * old
            new = np.sign(rho) * np.maximum(np.abs(rho) - half, 0.0) / diag[j]
            delta = new - old
            change = np.max(np.abs(delta))
            if change > 0.0:
                beta[j] = new
                grad -= np.outer(G[:, j], delta)
                if change > max_change:
                    max_change = change
        if max_change < tol:
            return beta, sweep
    raise ConvergenceError(
        f"lasso coordinate descent did not converge in {max_sweeps} sweeps (last max change {max_change:.3g})",
        iterations=max_sweeps,
        max_change=max_change,
    )


def solve_lasso(Z, F, lam, standardize: bool = True, tol: float = LASSO_TOL, max_sweeps: int = LASSO_MAX_SWEEPS) -> FitResult:
    """LASSO with unpenalised intercept by cyclic coordinate descent.

    Converges when no coefficient (on the standardised scale) moves by more
    than ``tol`` in a sweep; raises :class:`ConvergenceError` after
    ``max_sweeps`` sweeps.
    """
    Zv, Fv = _prepare(Z, F)
    S, J = Zv.shape
    T = Fv.shape[1]
    lams = np.broadcast_to(_check_lambda(lam), (T,)).astype(float)
    if standardize:
        Zs, zmean, zscale = _standardise(Zv)
    else:
        zmean = Zv.mean(axis=0)
        Zs, zscale = Zv - zmean, np.ones(J)
    fmean = Fv.mean(axis=0)
    Fc = Fv - fmean
    G = Zs.T @ Zs
    C = Zs.T @ Fc
    coef = np.zeros((J, T))
    sweeps = {}
    for lam_value in np.unique(lams):
        cols = np.flatnonzero(lams == lam_value)
        if np.isposinf(lam_value):
            continue
        coef[:, cols], sweeps[float(lam_value)] = _lasso_cd(G, C[:, cols], lam_value, tol=tol, max_sweeps=max_sweeps)
    coef = coef / zscale[:, None]
    intercept = fmean - zmean @ coef
    return FitResult(intercept, coef, "lasso", lams, info={"sweeps": sweeps})


def lambda_max(Z, F) -> np.ndarray:
    """Per column, the smallest lasso penalty giving ``beta = 0``: ``2 max_j |z_j' f|``."""
    Zv, Fv = _prepare(Z, F)
    Zs, _, _ = _standardise(Zv)
    return 2.0 * np.max(np.abs(Zs.T @ (Fv - Fv.mean(axis=0))), axis=0, initial=0.0)


def default_lambda_grid(Z, F, n: int = DEFAULT_N_LAMBDAS, lam_min: float = DEFAULT_LAMBDA_MIN) -> np.ndarray:
    """``(n, T)`` grids, log-spaced from ``lam_min`` to each column's ``lambda_max``."""
    top = np.maximum(lambda_max(Z, F), lam_min)
    return np.stack([np.geomspace(lam_min, t, n) for t in top], axis=1)


def fold_blocks(S: int, folds: int, seed=0) -> list[np.ndarray]:
    """Split ``range(S)`` into ``folds`` contiguous blocks.

    Block sizes differ by at most one; the seed decides which blocks get the
    extra rows.
    """
    if folds < 2:
        raise ValueError(f"need at least 2 folds, got {folds}")
    if S < folds:
        raise IdentifiabilityError(f"cannot split {S} samples into {folds} folds")
    sizes = np.full(folds, S // folds)
    extra = S - sizes.sum()
    if extra:
        rng = np.random.default_rng(seed)
        sizes[rng.choice(folds, size=extra, replace=False)] += 1
    edges = np.concatenate([[0], np.cumsum(sizes)])
    return [np.arange(lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]


@dataclass(frozen=True)
class CVResult:
    """Chosen penalty per column plus the full error curves."""

    chosen: np.ndarray
    grid: np.ndarray
    cv_error: np.ndarray
    solver: str
    folds: int


def _lasso_path_fold(Ztr, Ftr, Zte, Fte, grid):
    Zs, zmean, zscale = _standardise(Ztr)
    fmean = Ftr.mean(axis=0)
    G = Zs.T @ Zs
    C = Zs.T @ (Ftr - fmean)
    Zte_s = (Zte - zmean) / zscale
    n, T = grid.shape
    err = np.empty((n, T))
    for t in range(T):
        beta = None
        for i in range(n - 1, -1, -1):
            beta, _ = _lasso_cd(G, C[:, t : t + 1], grid[i, t], beta0=beta)
            pred = fmean[t] + Zte_s @ beta[:, 0]
            err[i, t] = np.sum((Fte[:, t] - pred) ** 2)
    return err


def _ridge_path_fold(Ztr, Ftr, Zte, Fte, grid):
    Zs, zmean, zscale = _standardise(Ztr)
    fmean = Ftr.mean(axis=0)
    Fc = Ftr - fmean
    Zte_s = (Zte - zmean) / zscale
    U, s, Vt = np.linalg.svd(Zs, full_matrices=False)
    UtF = U.T @ Fc
    n, T = grid.shape
    err = np.empty((n, T))
    for i in range(n):
        shrink = s[:, None] / (s[:, None] ** 2 + grid[i][None, :])
        beta = Vt.T @ (shrink * UtF)
        pred = fmean + Zte_s @ beta
        err[i] = np.sum((Fte - pred) ** 2, axis=0)
    return err


def cross_validate(Z, F, solver: str = "ridge", lambdas=None, folds: int = 10, seed=0) -> CVResult:
    """Choose a penalty per integrand column by k-fold CV on contiguous blocks.

    Args:
        lambdas: a 1-d grid shared by all columns, a ``(n, T)`` array of
            per-column grids, or ``None`` for :func:`default_lambda_grid`.
        seed: only decides which blocks receive leftover rows.

    Returns:
        CVResult whose ``chosen`` holds the penalty minimising pooled
        held-out squared error; exact ties go to the larger penalty.
    """
    if solver not in ("ridge", "lasso"):
        raise ValueError(f"unknown solver {solver!r}; expected 'ridge' or 'lasso'")
    Zv, Fv = _prepare(Z, F)
    S, T = Fv.shape
    if lambdas is None:
        grid = default_lambda_grid(Zv, Fv)
    else:
        grid = np.asarray(lambdas, dtype=float)
        if grid.size == 0:
            raise ValueError("empty lambda grid")
        if grid.ndim == 1:
            grid = np.repeat(grid[:, None], T, axis=1)
        if grid.shape[1] != T:
            raise DimensionError(f"lambda grid of shape {grid.shape} does not match {T} columns")
    _check_lambda(grid)
    order = np.argsort(grid, axis=0, kind="stable")
    grid = np.take_along_axis(grid, order, axis=0)
    path = _ridge_path_fold if solver == "ridge" else _lasso_path_fold
    total = np.zeros(grid.shape)
    for block in fold_blocks(S, folds, seed):
        train = np.ones(S, dtype=bool)
        train[block] = False
        total += path(Zv[train], Fv[train], Zv[block], Fv[block], grid)
    cv_error = total / S
    best = cv_error.min(axis=0)
    chosen = np.empty(T)
    for t in range(T):
        hits = np.flatnonzero(cv_error[:, t] <= best[t] * (1 + 1e-12))
        chosen[t] = grid[hits[-1], t]
    return CVResult(chosen=chosen, grid=grid, cv_error=cv_error, solver=solver, folds=folds)
