"""Stein-operator control variates for post-processing Monte Carlo output.

The package turns samples, log-density gradients and integrand evaluations
into lower-variance estimates of expectations using zero-variance control
variates (ZVCV), their ridge/LASSO regularised variants, and ensembles of
OLS learners with semi-exact column selection.
"""

from .basis import (
    MultiIndex,
    PolynomialBasis,
    count_exact_order,
    enumerate_basis,
    eval_monomial,
    monomial_grad,
    monomial_laplacian,
)
from .errors import (
    ConvergenceError,
    DimensionError,
    IdentifiabilityError,
    SingularDesignError,
    SpecParseError,
    SteinCVError,
)
from .stein import DesignMatrix, SampleSet, build_design_matrix, check_zero_mean, stein_l2
from .regression import FitResult, cross_validate, solve_lasso, solve_ols, solve_ridge
from .zvcv import Estimate, fit_zvcv, fit_zvcv_regularised, vanilla_mc
from .ensemble import (
    EnsembleConfig,
    EnsembleModel,
    compute_weights,
    default_j_star,
    default_q_base,
    ensemble_estimate,
    fit_ensemble,
    select_semi_exact,
    select_srswor,
)
from .targets import (
    Chain,
    TargetModel,
    banana_target,
    gaussian_target,
    mala_sample,
    sample_iid,
    sample_iid_gaussian,
)

__version__ = "0.1.0"

__all__ = [
    "MultiIndex",
    "PolynomialBasis",
    "count_exact_order",
    "enumerate_basis",
    "eval_monomial",
    "monomial_grad",
    "monomial_laplacian",
    "SteinCVError",
    "DimensionError",
    "IdentifiabilityError",
    "SingularDesignError",
    "ConvergenceError",
    "SpecParseError",
    "SampleSet",
    "DesignMatrix",
    "stein_l2",
    "build_design_matrix",
    "check_zero_mean",
    "FitResult",
    "solve_ols",
    "solve_ridge",
    "solve_lasso",
    "cross_validate",
    "Estimate",
    "fit_zvcv",
    "fit_zvcv_regularised",
    "vanilla_mc",
    "EnsembleConfig",
    "EnsembleModel",
    "compute_weights",
    "default_j_star",
    "default_q_base",
    "ensemble_estimate",
    "fit_ensemble",
    "select_semi_exact",
    "select_srswor",
    "TargetModel",
    "Chain",
    "gaussian_target",
    "banana_target",
    "sample_iid",
    "sample_iid_gaussian",
    "mala_sample",
]
