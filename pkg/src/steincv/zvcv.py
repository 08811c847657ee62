"""Single-learner estimators: vanilla Monte Carlo, ZVCV and regularised ZVCV."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import PolynomialBasis, basis_size, enumerate_basis
from .errors import IdentifiabilityError
from .regression import FitResult, _as_targets, cross_validate, solve_lasso, solve_ols, solve_ridge
from .stein import DesignMatrix, SampleSet, build_design_matrix

INTERCEPT_TOL = 1e-8


@dataclass(frozen=True)
class Estimate:
    """Expectation estimates for ``T`` integrands.

    ``fit`` and ``basis`` are kept so the fitted control variate can be
    re-evaluated on other samples.
    """

    values: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)
    fit: FitResult | None = field(default=None, repr=False)
    basis: PolynomialBasis | None = field(default=None, repr=False)

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if not np.all(np.isfinite(values)):
            raise ValueError(f"non-finite estimate {values}")
        object.__setattr__(self, "values", values)

    def evaluate(self, samples: SampleSet, F) -> np.ndarray:
        """Apply the fitted control variate to fresh samples: ``mean(f - Z beta)``."""
        if self.fit is None or self.basis is None:
            raise ValueError(f"estimate from {self.method!r} carries no fitted control variate")
        Z = build_design_matrix(samples, self.basis)
        F = _as_targets(F, samples.n_samples)
        return np.mean(F - Z.values @ self.fit.coefficients, axis=0)


def vanilla_mc(F) -> Estimate:
    """Column means of the integrand matrix."""
    F = np.asarray(getattr(F, "values", F), dtype=float)
    F = F[:, None] if F.ndim == 1 else F
    if F.shape[0] < 1:
        raise ValueError("vanilla Monte Carlo needs at least one sample")
    return Estimate(F.mean(axis=0), "mc", {"S": F.shape[0]})


def _split_constant(F):
    """Boolean mask of integrand columns that vary across samples."""
    return np.ptp(F, axis=0) > 0


def check_order(d: int, Q: int, S: int) -> int:
    """Validate ``C(Q + d, d) < S`` (intercept plus ``J`` slopes identifiable); returns ``J``."""
    J = basis_size(d, Q)
    if not J + 1 < S:
        raise IdentifiabilityError(f"order Q={Q} in d={d} needs C(Q+d,d)={J + 1} < S, but S={S}")
    return J


def _assemble(F, varying, fit_varying, J):
    T = F.shape[1]
    intercept = F[0].copy()
    coef = np.zeros((J, T))
    if fit_varying is not None:
        intercept[varying] = fit_varying.intercept
        coef[:, varying] = fit_varying.coefficients
    return intercept, coef


def fit_zvcv(samples: SampleSet, F, Q: int, threads: int = 1, design: DesignMatrix | None = None) -> Estimate:
    """ZVCV with a fixed polynomial order ``Q`` fitted by OLS.

    The estimate is the OLS intercept.  The residual-mean form
    ``mean(f - Z beta)`` is computed as well and must agree to 1e-8.
    Integrands that are constant across samples are returned as is.
    """
    S, d = samples.n_samples, samples.dim
    J = check_order(d, Q, S)
    F = _as_targets(F, S)
    Z = design if design is not None else build_design_matrix(samples, enumerate_basis(d, Q), threads=threads)
    varying = _split_constant(F)
    fit = solve_ols(Z, F[:, varying]) if varying.any() else None
    intercept, coef = _assemble(F, varying, fit, J)
    residuals = F - Z.values @ coef
    residual_mean = residuals.mean(axis=0)
    gap = np.abs(residual_mean - intercept)
    if np.any(gap > INTERCEPT_TOL * (1.0 + np.abs(intercept))):
        raise RuntimeError(f"intercept and residual-mean estimates disagree by {gap.max():.3g}")
    return Estimate(
        intercept,
        f"zv{Q}",
        {"J": J, "Q": Q, "S": S, "residual_variance": residuals.var(axis=0), "intercept_gap": gap},
        fit=FitResult(intercept, coef, "ols"),
        basis=Z.basis,
    )


def fit_zvcv_regularised(
    samples: SampleSet,
    F,
    Q: int,
    penalty: str = "ridge",
    lam=None,
    folds: int = 10,
    lambdas=None,
    seed=0,
    threads: int = 1,
    design: DesignMatrix | None = None,
) -> Estimate:
    """Ridge- or LASSO-regularised ZVCV; usable when ``S <= J``.

    Pass ``lam`` (scalar or per-integrand) for a fixed penalty, otherwise
    each integrand gets its own penalty from ``folds``-fold CV.
    """
    if penalty not in ("ridge", "lasso"):
        raise ValueError(f"penalty must be 'ridge' or 'lasso', got {penalty!r}")
    S, d = samples.n_samples, samples.dim
    if S < 2:
        raise IdentifiabilityError("regularised ZVCV needs at least 2 samples")
    F = _as_targets(F, S)
    Z = design if design is not None else build_design_matrix(samples, enumerate_basis(d, Q), threads=threads)
    J = Z.shape[1]
    varying = _split_constant(F)
    Fv = F[:, varying]
    chosen = np.full(F.shape[1], np.nan)
    fit = None
    if varying.any():
        if lam is None:
            cv = cross_validate(Z, Fv, penalty, lambdas=lambdas, folds=folds, seed=seed)
            lam_v = cv.chosen
        else:
            lam_v = np.broadcast_to(np.asarray(lam, dtype=float), (F.shape[1],))[varying]
        solver = solve_ridge if penalty == "ridge" else solve_lasso
        fit = solver(Z, Fv, lam_v)
        chosen[varying] = lam_v
    intercept, coef = _assemble(F, varying, fit, J)
    residuals = F - Z.values @ coef
    tag = "r" if penalty == "ridge" else "l"
    return Estimate(
        intercept,
        f"{tag}-zv{Q}",
        {"J": J, "Q": Q, "S": S, "lambda": chosen, "cv_folds": folds if lam is None else None, "residual_variance": residuals.var(axis=0)},
        fit=FitResult(intercept, coef, penalty, chosen),
        basis=Z.basis,
    )
