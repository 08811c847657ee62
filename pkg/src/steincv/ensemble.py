"""Ensemble ZVCV: averages of OLS learners fitted on random column subsets.

Each learner sees a subset of the columns of one shared order-``q_max``
design matrix (and optionally a subset of rows).  Learner coefficients are
embedded back into length-``J`` vectors and the ensemble estimate is
``mean(f - Z @ sum_i w_i beta_i)`` over all samples.

Semi-exact selection always keeps every monomial of order ``<= q_base``, so
for a Gaussian target and a polynomial integrand of order ``<= q_base``
every learner, and hence the ensemble, is exact.

Presets (reconstructed, not taken verbatim from a reference implementation):

``sa``
    semi-exact columns, all rows, uniform weights.
``do``
    semi-exact columns, a row subsample without replacement per learner,
    uniform weights.
``mo``
    semi-exact columns, all rows, weights proportional to inverse residual
    variance.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import PolynomialBasis, basis_size, enumerate_basis
from .errors import DimensionError, IdentifiabilityError, SingularDesignError
from .regression import _as_targets, solve_ols
from .stein import DesignMatrix, SampleSet, build_design_matrix
from .zvcv import Estimate

UNIFORM = "uniform"
INVERSE_VARIANCE = "inverse-variance"
WEIGHT_SCHEMES = (UNIFORM, INVERSE_VARIANCE)

PRESETS = {
    "sa": {"selection": "semi-exact", "row_fraction": 1.0, "weight_scheme": UNIFORM},
    "do": {"selection": "semi-exact", "row_fraction": 0.8, "weight_scheme": UNIFORM},
    "mo": {"selection": "semi-exact", "row_fraction": 1.0, "weight_scheme": INVERSE_VARIANCE},
}


def default_q_base(d: int, S: int) -> int:
    """Largest ``q`` in ``{1, 2}`` with ``C(d + q, d) < S``."""
    if S <= d + 1:
        raise IdentifiabilityError(f"S={S} samples cannot identify even a first-order fit in d={d}")
    return 2 if math.comb(d + 2, d) < S else 1


def default_j_star(S: int, J: int, J_base: int) -> int:
    """Columns per learner: ``min(J, max(J_base, floor(0.7 S)))``, capped at ``S - 2``."""
    if not J_base < S - 2:
        raise IdentifiabilityError(f"J_base={J_base} base columns need J_base < S - 2 (S={S})")
    return min(J, max(J_base, math.floor(0.7 * S)), S - 2)


def select_srswor(J: int, j_star: int, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask with ``j_star`` of ``J`` columns drawn without replacement."""
    if not 1 <= j_star <= J:
        raise ValueError(f"need 1 <= j_star <= J, got j_star={j_star}, J={J}")
    mask = np.zeros(J, dtype=bool)
    mask[rng.choice(J, size=j_star, replace=False)] = True
    return mask


def select_semi_exact(basis: PolynomialBasis, q_base: int, j_star: int, rng: np.random.Generator) -> np.ndarray:
    """Keep the order-``<= q_base`` prefix and fill up to ``j_star`` by SRSWOR."""
    J = len(basis)
    J_base = basis.prefix_size(q_base)
    if not J_base <= j_star <= J:
        raise ValueError(f"need J_base={J_base} <= j_star <= J={J}, got j_star={j_star}")
    mask = np.zeros(J, dtype=bool)
    mask[:J_base] = True
    n_extra = j_star - J_base
    if n_extra:
        mask[J_base + rng.choice(J - J_base, size=n_extra, replace=False)] = True
    return mask


def compute_weights(residual_variances, scheme: str = UNIFORM) -> np.ndarray:
    """Normalised learner weights.

    ``inverse-variance`` uses ``w_i ~ 1 / (v_i + eps)`` with
    ``eps = 1e-12 max(v)``; if every variance is zero it falls back to
    uniform weights.
    """
    v = np.asarray(residual_variances, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("need a non-empty 1-d array of residual variances")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("residual variances must be finite and non-negative")
    k = v.size
    if scheme == UNIFORM:
        return np.full(k, 1.0 / k)
    if scheme != INVERSE_VARIANCE:
        raise ValueError(f"unknown weight scheme {scheme!r}")
    top = v.max()
    if top == 0:
        return np.full(k, 1.0 / k)
    inv = 1.0 / (v + 1e-12 * top)
    return inv / inv.sum()


@dataclass(frozen=True)
class EnsembleConfig:
    """Hyper-parameters of an ensemble ZVCV fit.

    ``q_base`` and ``j_star`` may be ``None`` for the automatic rules.  The
    preset fills ``selection``, ``row_fraction`` and ``weight_scheme`` unless
    ``preset="custom"``; see :meth:`from_preset`.
    """

    k: int = 25
    q_max: int = 5
    q_base: int | None = None
    j_star: int | None = None
    row_fraction: float = 1.0
    weight_scheme: str = UNIFORM
    selection: str = "semi-exact"
    seed: int = 0
    preset: str = "custom"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.q_max < 1:
            raise ValueError(f"q_max must be >= 1, got {self.q_max}")
        if self.q_base is not None and not 1 <= self.q_base <= self.q_max:
            raise ValueError(f"q_base must lie in [1, q_max], got {self.q_base}")
        if not 0 < self.row_fraction <= 1:
            raise ValueError(f"row_fraction must lie in (0, 1], got {self.row_fraction}")
        if self.weight_scheme not in WEIGHT_SCHEMES:
            raise ValueError(f"unknown weight scheme {self.weight_scheme!r}")
        if self.selection not in ("semi-exact", "srswor"):
            raise ValueError(f"unknown selection {self.selection!r}")
        if self.preset not in (*PRESETS, "custom"):
            raise ValueError(f"unknown preset {self.preset!r}")

    @classmethod
    def from_preset(cls, preset: str, **overrides) -> "EnsembleConfig":
        preset = preset.lower()
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        params = dict(PRESETS[preset])
        params.update(overrides)
        return cls(preset=preset, **params)

    def resolve(self, d: int, S: int) -> "EnsembleConfig":
        """Fill in automatic ``q_base`` and ``j_star`` for ``S`` samples in ``d`` dimensions."""
        rows = learner_rows(S, self.row_fraction)
        q_base = self.q_base if self.q_base is not None else min(default_q_base(d, rows), max(self.q_max - 1, 1))
        J = basis_size(d, self.q_max)
        J_base = basis_size(d, min(q_base, self.q_max))
        j_star = self.j_star if self.j_star is not None else default_j_star(rows, J, J_base)
        return replace(self, q_base=q_base, j_star=j_star)


def learner_rows(S: int, row_fraction: float) -> int:
    return S if row_fraction >= 1 else max(1, math.floor(row_fraction * S))


@dataclass(frozen=True)
class Learner:
    """One OLS learner: its column mask, rows used, and embedded coefficients."""

    mask: np.ndarray
    rows: np.ndarray | None
    coefficients: np.ndarray
    intercept: np.ndarray
    residual_variance: np.ndarray
    retried: bool = False


@dataclass(frozen=True)
class EnsembleModel:
    """Fitted ensemble: ``k`` learners, a ``(k, T)`` weight matrix and the shared basis."""

    learners: tuple[Learner, ...]
    weights: np.ndarray
    basis: PolynomialBasis
    config: EnsembleConfig
    info: dict = field(default_factory=dict, compare=False)

    @property
    def k(self) -> int:
        return len(self.learners)

    def aggregate_coefficients(self) -> np.ndarray:
        """``sum_i w_i beta_i`` per integrand, summed in learner order."""
        total = np.zeros_like(self.learners[0].coefficients)
        for i, learner in enumerate(self.learners):
            total += learner.coefficients * self.weights[i]
        return total

    def aggregate_intercept(self) -> np.ndarray:
        total = np.zeros_like(self.learners[0].intercept)
        for i, learner in enumerate(self.learners):
            total += learner.intercept * self.weights[i]
        return total


def learner_rng(seed, index: int, attempt: int = 0) -> np.random.Generator:
    """Independent stream for learner ``index``; does not depend on ``k``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index), int(attempt)]))


def _draw_learner(config: EnsembleConfig, basis: PolynomialBasis, Zv: np.ndarray, Fv: np.ndarray, index: int) -> Learner:
    S = Zv.shape[0]
    J = Zv.shape[1]
    rows_per = learner_rows(S, config.row_fraction)
    last_error = None
    for attempt in range(2):
        rng = learner_rng(config.seed, index, attempt)
        if config.selection == "semi-exact":
            mask = select_semi_exact(basis, config.q_base, config.j_star, rng)
        else:
            mask = select_srswor(J, config.j_star, rng)
        rows = None
        if rows_per < S:
            rows = np.sort(rng.choice(S, size=rows_per, replace=False))
        Zsub = Zv[:, mask] if rows is None else Zv[rows][:, mask]
        Fsub = Fv if rows is None else Fv[rows]
        try:
            fit = solve_ols(Zsub, Fsub)
        except SingularDesignError as exc:
            last_error = exc
            continue
        coef = np.zeros((J, Fv.shape[1]))
        coef[mask] = fit.coefficients
        residuals = Fv - Zv @ coef - fit.intercept
        return Learner(mask, rows, coef, fit.intercept, residuals.var(axis=0), retried=attempt > 0)
    raise SingularDesignError(f"learner {index} has a singular sub-design after one retry: {last_error}", columns=last_error.columns)


def fit_ensemble(samples: SampleSet, F, config: EnsembleConfig, threads: int = 1, design: DesignMatrix | None = None) -> EnsembleModel:
    """Fit ``config.k`` OLS learners on random column subsets of one design matrix.

    Learners are independent and may be fitted on ``threads`` worker
    threads; the model is identical for any thread count.
    """
    S, d = samples.n_samples, samples.dim
    if S < 10:
        raise IdentifiabilityError(f"ensemble ZVCV needs at least 10 samples, got {S}")
    F = _as_targets(F, S)
    config = config.resolve(d, S)
    basis = design.basis if design is not None else enumerate_basis(d, config.q_max)
    if basis.dim != d or basis.max_order != config.q_max:
        raise DimensionError("design matrix basis does not match the ensemble configuration")
    Z = design if design is not None else build_design_matrix(samples, basis, threads=threads)
    rows_per = learner_rows(S, config.row_fraction)
    if not config.j_star < rows_per:
        raise IdentifiabilityError(f"j_star={config.j_star} columns need more than {rows_per} rows per learner")
    Zv = Z.values

    def fit_one(i):
        return _draw_learner(config, basis, Zv, F, i)

    if threads > 1 and config.k > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            learners = tuple(pool.map(fit_one, range(config.k)))
    else:
        learners = tuple(fit_one(i) for i in range(config.k))

    variances = np.stack([lr.residual_variance for lr in learners])
    weights = np.stack([compute_weights(variances[:, t], config.weight_scheme) for t in range(F.shape[1])], axis=1)
    return EnsembleModel(
        learners,
        weights,
        basis,
        config,
        info={"J": len(basis), "J_base": basis.prefix_size(config.q_base), "rows_per_learner": rows_per, "retries": sum(lr.retried for lr in learners)},
    )


def _design_and_targets(model, Z, F):
    Zv = np.asarray(getattr(Z, "values", Z), dtype=float)
    if Zv.ndim != 2 or Zv.shape[1] != len(model.basis):
        raise DimensionError(f"design of shape {Zv.shape} does not match a basis of {len(model.basis)} monomials")
    Fv = _as_targets(F, Zv.shape[0])
    if Fv.shape[1] != model.weights.shape[1]:
        raise DimensionError(f"model was fitted to {model.weights.shape[1]} integrands, got {Fv.shape[1]}")
    return Zv, Fv


def ensemble_estimate(model: EnsembleModel, Z, F) -> Estimate:
    """``mean(f - Z sum_i w_i beta_i)`` over all rows of ``Z``."""
    Zv, Fv = _design_and_targets(model, Z, F)
    beta = model.aggregate_coefficients()
    values = np.mean(Fv - Zv @ beta, axis=0)
    cfg = model.config
    name = f"{cfg.preset}{model.k}" if cfg.preset != "custom" else f"ens{model.k}"
    return Estimate(
        values,
        name,
        {
            "k": model.k,
            "q_max": cfg.q_max,
            "q_base": cfg.q_base,
            "j_star": cfg.j_star,
            "row_fraction": cfg.row_fraction,
            "weight_scheme": cfg.weight_scheme,
            "weights": model.weights,
            **model.info,
        },
    )


def learner_estimates(model: EnsembleModel, Z, F) -> np.ndarray:
    """``(k, T)`` array of each learner's own estimate ``mean(f - Z beta_i)``."""
    Zv, Fv = _design_and_targets(model, Z, F)
    return np.stack([np.mean(Fv - Zv @ lr.coefficients, axis=0) for lr in model.learners])


def fit_ensemble_zvcv(samples: SampleSet, F, config: EnsembleConfig, threads: int = 1) -> Estimate:
    """Convenience wrapper: fit the ensemble and evaluate it on the same samples."""
    S, d = samples.n_samples, samples.dim
    resolved = config.resolve(d, S)
    Z = build_design_matrix(samples, enumerate_basis(d, resolved.q_max), threads=threads)
    model = fit_ensemble(samples, F, resolved, threads=threads, design=Z)
    return ensemble_estimate(model, Z, F)
