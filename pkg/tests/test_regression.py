import numpy as np
import pytest
from sklearn.linear_model import Lasso

from steincv.errors import ConvergenceError, IdentifiabilityError, SingularDesignError
from steincv.regression import (
    cross_validate,
    default_lambda_grid,
    fold_blocks,
    lambda_max,
    solve_lasso,
    solve_ols,
    solve_ridge,
)


def normal_equations(Z, F):
    Zc = Z - Z.mean(axis=0)
    Fc = F - F.mean(axis=0)
    beta = np.linalg.solve(Zc.T @ Zc, Zc.T @ Fc)
    return F.mean(axis=0) - Z.mean(axis=0) @ beta, beta


def standardised(Z):
    mu = Z.mean(axis=0)
    sd = np.sqrt(((Z - mu) ** 2).mean(axis=0))
    return (Z - mu) / sd, mu, sd


def ridge_closed_form(Z, f, lam):
    Zs, mu, sd = standardised(Z)
    fc = f - f.mean()
    bs = np.linalg.solve(Zs.T @ Zs + lam * np.eye(Z.shape[1]), Zs.T @ fc)
    beta = bs / sd
    return f.mean() - mu @ beta, beta


def sklearn_lasso(Z, f, lam):
    Zs, mu, sd = standardised(Z)
    model = Lasso(alpha=lam / (2 * len(f)), fit_intercept=True, tol=1e-14, max_iter=1_000_000).fit(Zs, f)
    beta = model.coef_ / sd
    return f.mean() - mu @ beta, beta


@pytest.fixture
def problem(rng):
    Z = rng.standard_normal((50, 5)) @ np.diag([1.0, 2.0, 0.5, 3.0, 1.5]) + 0.3
    F = Z @ rng.standard_normal((5, 2)) + 1.5 + rng.standard_normal((50, 2))
    return Z, F


def test_ols_two_points():
    fit = solve_ols(np.array([[1.0], [-1.0]]), np.array([2.0, 0.0]))
    assert fit.coefficients[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert fit.intercept[0] == pytest.approx(1.0, abs=1e-15)


def test_ols_constant_target(rng):
    Z = rng.standard_normal((20, 3))
    fit = solve_ols(Z, np.full(20, 4.25))
    np.testing.assert_allclose(fit.coefficients, 0.0, atol=1e-14)
    assert fit.intercept[0] == pytest.approx(4.25, abs=1e-13)


def test_ols_matches_normal_equations(problem):
    Z, F = problem
    fit = solve_ols(Z, F)
    alpha, beta = normal_equations(Z, F)
    np.testing.assert_allclose(fit.coefficients, beta, atol=1e-10)
    np.testing.assert_allclose(fit.intercept, alpha, atol=1e-10)


def test_ols_residuals_sum_to_zero(problem):
    Z, F = problem
    resid = solve_ols(Z, F).residuals(Z, F)
    assert np.all(np.abs(resid.sum(axis=0)) <= 1e-8 * len(F) * F.std(axis=0))


def test_ols_shift_and_scale_equivariance(problem):
    Z, F = problem
    base = solve_ols(Z, F)
    shifted = solve_ols(Z, F + 3.0)
    np.testing.assert_allclose(shifted.coefficients, base.coefficients, atol=1e-12)
    np.testing.assert_allclose(shifted.intercept, base.intercept + 3.0, atol=1e-12)
    scaled = solve_ols(Z, -2.5 * F)
    np.testing.assert_allclose(scaled.coefficients, -2.5 * base.coefficients, atol=1e-12)
    np.testing.assert_allclose(scaled.intercept, -2.5 * base.intercept, atol=1e-12)


def test_ols_multi_rhs_consistency(problem):
    Z, F = problem
    joint = solve_ols(Z, F)
    for t in range(F.shape[1]):
        single = solve_ols(Z, F[:, t])
        np.testing.assert_allclose(joint.coefficients[:, t], single.coefficients[:, 0], rtol=0, atol=1e-12)
        assert joint.intercept[t] == pytest.approx(single.intercept[0], abs=1e-12)


def test_ols_underdetermined_raises(rng):
    with pytest.raises(IdentifiabilityError):
        solve_ols(rng.standard_normal((4, 4)), rng.standard_normal(4))


def test_ols_singular_names_columns(rng):
    Z = rng.standard_normal((30, 3))
    Z = np.column_stack([Z, 2.0 * Z[:, 1]])
    with pytest.raises(SingularDesignError) as info:
        solve_ols(Z, rng.standard_normal(30))
    assert set(info.value.columns) & {1, 3}
    assert len(info.value.columns) == 1


def test_ridge_zero_equals_ols(problem):
    Z, F = problem
    np.testing.assert_allclose(solve_ridge(Z, F, 0.0).coefficients, solve_ols(Z, F).coefficients, atol=1e-10)


def test_ridge_huge_penalty(problem):
    Z, F = problem
    fit = solve_ridge(Z, F, 1e12)
    assert np.linalg.norm(fit.coefficients) <= 1e-6
    np.testing.assert_allclose(fit.intercept, F.mean(axis=0), atol=1e-6)


def test_ridge_matches_closed_form(rng):
    Z = rng.standard_normal((40, 6)) * rng.uniform(0.5, 3, 6) + rng.standard_normal(6)
    f = Z @ rng.standard_normal(6) + rng.standard_normal(40)
    fit = solve_ridge(Z, f, 2.0)
    alpha, beta = ridge_closed_form(Z, f, 2.0)
    np.testing.assert_allclose(fit.coefficients[:, 0], beta, atol=1e-8)
    assert fit.intercept[0] == pytest.approx(alpha, abs=1e-8)


def test_ridge_norm_non_increasing(problem):
    Z, F = problem
    norms = [np.linalg.norm(solve_ridge(Z, F[:, 0], lam).coefficients) for lam in np.geomspace(1e-4, 1e4, 30)]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))


def test_ridge_rejects_negative(problem):
    with pytest.raises(ValueError):
        solve_ridge(*problem, -1.0)


def test_lasso_zero_equals_ols(problem):
    Z, F = problem
    np.testing.assert_allclose(solve_lasso(Z, F, 0.0).coefficients, solve_ols(Z, F).coefficients, atol=1e-6)


def test_lasso_huge_penalty(problem):
    Z, F = problem
    fit = solve_lasso(Z, F, 1e9)
    assert np.all(fit.coefficients == 0)
    np.testing.assert_allclose(fit.intercept, F.mean(axis=0), atol=1e-12)


def test_lasso_at_lambda_max_is_zero(problem):
    Z, F = problem
    top = lambda_max(Z, F)
    assert np.all(solve_lasso(Z, F, top).coefficients == 0)
    assert np.any(solve_lasso(Z, F, 0.99 * top).coefficients != 0)


def test_lasso_soft_threshold_single_column():
    z = np.array([1.0, -1.0, 1.0, -1.0]) / 2.0  # centred, unit norm
    f = 1.0 * z + 0.7
    fit = solve_lasso(z[:, None], f, 0.4, standardize=False)
    assert fit.coefficients[0, 0] == pytest.approx(0.8, abs=1e-8)
    assert fit.intercept[0] == pytest.approx(0.7, abs=1e-12)


def test_lasso_soft_threshold_orthonormal(rng):
    S, J, lam = 40, 4, 0.9
    Q, _ = np.linalg.qr(rng.standard_normal((S, J)) - 0)
    Q -= Q.mean(axis=0)
    Q, _ = np.linalg.qr(Q)  # re-orthonormalise after centring
    Q -= Q.mean(axis=0)
    ols = np.array([2.0, -0.3, 0.1, -1.5])
    f = Q @ ols + 0.25
    b = Q.T @ (f - f.mean())
    expected = np.sign(b) * np.maximum(np.abs(b) - lam / 2, 0.0)
    fit = solve_lasso(Q, f, lam, standardize=False)
    np.testing.assert_allclose(fit.coefficients[:, 0], expected, atol=1e-8)


def test_lasso_matches_sklearn(rng):
    Z = rng.standard_normal((60, 5)) * rng.uniform(0.5, 2, 5)
    f = Z @ np.array([1.0, 0.0, -2.0, 0.5, 0.0]) + 0.5 * rng.standard_normal(60)
    for lam in (0.5, 5.0, 40.0):
        fit = solve_lasso(Z, f, lam, tol=1e-12)
        alpha, beta = sklearn_lasso(Z, f, lam)
        np.testing.assert_allclose(fit.coefficients[:, 0], beta, atol=1e-8)
        assert fit.intercept[0] == pytest.approx(alpha, abs=1e-8)


def test_lasso_l1_non_increasing(problem):
    Z, F = problem
    norms = [np.abs(solve_lasso(Z, F[:, 0], lam, tol=1e-10).coefficients).sum() for lam in np.geomspace(1e-3, 1e3, 30)]
    assert all(b <= a + 1e-8 for a, b in zip(norms, norms[1:]))


def test_shift_equivariance_all_solvers(problem):
    Z, F = problem
    for solver, lam in ((solve_ridge, 3.0), (solve_lasso, 3.0)):
        base, shifted = solver(Z, F, lam), solver(Z, F - 7.0, lam)
        np.testing.assert_allclose(shifted.coefficients, base.coefficients, atol=1e-10)
        np.testing.assert_allclose(shifted.intercept, base.intercept - 7.0, atol=1e-10)


def test_lasso_non_convergence_reports_diagnostics(rng):
    Z = rng.standard_normal((30, 3))
    Z[:, 2] = Z[:, 0] + 1e-3 * Z[:, 2]
    with pytest.raises(ConvergenceError) as info:
        solve_lasso(Z, rng.standard_normal(30), 1e-6, max_sweeps=2)
    assert info.value.iterations == 2
    assert info.value.max_change > 0


def test_lasso_rejects_negative(problem):
    with pytest.raises(ValueError):
        solve_lasso(*problem, -0.1)


def test_fold_blocks_are_contiguous_partition():
    blocks = fold_blocks(23, 5, seed=3)
    assert np.array_equal(np.concatenate(blocks), np.arange(23))
    assert {len(b) for b in blocks} <= {4, 5}
    assert all(np.all(np.diff(b) == 1) for b in blocks)
    assert [len(b) for b in blocks] == [len(b) for b in fold_blocks(23, 5, seed=3)]


def test_cv_single_lambda(problem):
    Z, F = problem
    assert np.all(cross_validate(Z, F, "ridge", lambdas=[0.37], folds=5).chosen == 0.37)


def test_cv_rejects_empty_grid(problem):
    with pytest.raises(ValueError):
        cross_validate(*problem, "lasso", lambdas=[], folds=5)


def _sweep_oracle(Z, f, grid, folds, fitter):
    S = len(f)
    blocks = fold_blocks(S, folds, seed=0)
    errors = []
    for lam in grid:
        total = 0.0
        for block in blocks:
            train = np.setdiff1d(np.arange(S), block)
            alpha, beta = fitter(Z[train], f[train], lam)
            total += np.sum((f[block] - alpha - Z[block] @ beta) ** 2)
        errors.append(total / S)
    errors = np.array(errors)
    return grid[np.flatnonzero(errors <= errors.min() * (1 + 1e-12))[-1]], errors


@pytest.mark.parametrize("solver,fitter", [("ridge", ridge_closed_form), ("lasso", sklearn_lasso)])
def test_cv_noiseless_picks_smallest(rng, solver, fitter):
    Z = rng.standard_normal((60, 4))
    f = Z @ np.array([1.0, -2.0, 0.5, 3.0]) + 2.0
    grid = np.geomspace(1e-6, 10.0, 8)
    res = cross_validate(Z, f, solver, lambdas=grid, folds=5)
    oracle, errors = _sweep_oracle(Z, f, grid, 5, fitter)
    assert np.all(np.diff(errors) > 0)
    assert res.chosen[0] == oracle == grid[0]


def test_cv_matches_direct_sweep_oracle(rng):
    Z = rng.standard_normal((50, 4))
    f = Z @ np.array([0.3, 0.0, -0.2, 0.0]) + rng.standard_normal(50)
    grid = np.geomspace(1e-3, 200.0, 12)
    for solver, fitter in (("ridge", ridge_closed_form), ("lasso", sklearn_lasso)):
        res = cross_validate(Z, f, solver, lambdas=grid, folds=5)
        oracle, errors = _sweep_oracle(Z, f, grid, 5, fitter)
        np.testing.assert_allclose(res.cv_error[:, 0], errors, rtol=1e-6)
        assert res.chosen[0] == oracle


def _noise_problem(seed):
    r = np.random.default_rng(1000 + seed)
    return r.standard_normal((60, 5)), r.standard_normal(60)


def test_cv_pure_noise_ridge_picks_largest_lambda():
    hits = 0
    for seed in range(50):
        Z, f = _noise_problem(seed)
        res = cross_validate(Z, f, "ridge", folds=10, seed=seed)
        hits += res.chosen[0] == res.grid[-1, 0]
    assert hits >= 45


def test_cv_pure_noise_lasso_stays_near_lambda_max():
    # per-fold lambda_max exceeds the full-data value, so lasso often settles
    # a few grid points below the top; it still shrinks to (almost) nothing
    near_top = 0
    for seed in range(50):
        Z, f = _noise_problem(seed)
        res = cross_validate(Z, f, "lasso", folds=10, seed=seed)
        near_top += res.chosen[0] >= res.grid[-1, 0] / 10
    assert near_top >= 45


def test_default_grid_spans_to_lambda_max(problem):
    Z, F = problem
    grid = default_lambda_grid(Z, F)
    assert grid.shape == (100, 2)
    np.testing.assert_allclose(grid[0], 1e-8)
    np.testing.assert_allclose(grid[-1], lambda_max(Z, F))
