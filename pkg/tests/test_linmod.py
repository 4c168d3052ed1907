import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from damvol import linmod
from damvol.linmod import (
    PenaltySpec, RankDeficientError, cv_select_lambda, default_grid, elasticnet_path,
    fit_elasticnet, fit_lasso, fit_ols, fit_ridge, lambda_max, predict, soft_threshold,
)


def _problem(seed, n=40, p=4, noise=0.5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p)) * rng.uniform(0.5, 20, p) + rng.uniform(-50, 50, p)
    beta = rng.normal(size=p) * 3
    y = 7 + X @ beta + rng.normal(0, noise, n)
    return X, y


def _orthonormal(seed, n=32, p=3):
    """Centered columns, mutually orthogonal, with sum(z**2) == n."""
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, p))
    A = np.column_stack([np.ones(n), A])
    Q, _ = np.linalg.qr(A)
    Z = Q[:, 1:] * np.sqrt(n)
    y = 3 + Z @ rng.normal(0, 2, p) + rng.normal(0, 0.3, n)
    return Z, y


def test_soft_threshold():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-0.5, 1.0) == 0.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    assert soft_threshold(1.7, 0.0) == 1.7
    with pytest.raises(ValueError):
        soft_threshold(1.0, -1.0)


def test_ols_exact_line():
    x = np.linspace(0, 10, 11)
    fit = fit_ols(x[:, None], 3 + 2 * x)
    b0, b = fit.original_coefficients()
    assert b0 == pytest.approx(3, abs=1e-12) and b[0] == pytest.approx(2, abs=1e-12)
    np.testing.assert_allclose(predict(fit, x[:, None]), 3 + 2 * x, atol=1e-12)


def test_ols_constant_target():
    X, _ = _problem(0)
    fit = fit_ols(X, np.full(40, 4.5))
    assert np.all(np.abs(fit.coefficients) < 1e-12) and fit.intercept == 4.5


def test_ols_collinear():
    rng = np.random.default_rng(1)
    x1 = rng.normal(size=20)
    with pytest.raises(RankDeficientError, match="dependent"):
        fit_ols(np.column_stack([x1, 2 * x1]), rng.normal(size=20), columns=["a", "b"])


def test_ols_matches_lstsq_oracle():
    X, y = _problem(2)
    fit = fit_ols(X, y)
    A = np.column_stack([np.ones(len(y)), X])
    ref = np.linalg.lstsq(A, y, rcond=None)[0]
    b0, b = fit.original_coefficients()
    np.testing.assert_allclose(np.r_[b0, b], ref, rtol=1e-9, atol=1e-9)


def test_constant_column_zero_coefficient():
    X, y = _problem(3)
    X = np.column_stack([X, np.full(len(y), 999.38)])
    for fit in (fit_ols(X, y), fit_ridge(X, y, 0.1), fit_lasso(X, y, 0.1)):
        assert fit.coefficients[-1] == 0.0
        assert np.all(np.isfinite(predict(fit, X)))


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_enet_lambda_zero_is_ols(alpha):
    X, y = _problem(4)
    en = fit_elasticnet(X, y, PenaltySpec(0.0, alpha))
    assert en.converged
    np.testing.assert_allclose(en.coefficients, fit_ols(X, y).coefficients, atol=1e-6)


def test_lasso_orthonormal_soft_threshold():
    Z, y = _orthonormal(5)
    n = len(y)
    ols = Z.T @ (y - y.mean()) / n
    for lam in (0.05, 0.5, 1.5):
        fit = fit_lasso(Z, y, lam)
        # standardizer on an already standardized design is the identity up to rounding
        b0, b = fit.original_coefficients()
        np.testing.assert_allclose(b, soft_threshold(ols, lam), atol=1e-8)


def test_lasso_full_shrinkage():
    X, y = _problem(6)
    fit = fit_lasso(X, y, lambda_max(X, y) * 1.0001)
    assert np.all(fit.coefficients == 0)
    assert fit.intercept == pytest.approx(y.mean())


def test_ridge_single_feature_halves():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(30, 1)) * 4 + 10
    y = 2 * x[:, 0] + rng.normal(size=30)
    ols = fit_ols(x, y).coefficients[0]
    assert fit_ridge(x, y, 1.0).coefficients[0] == pytest.approx(ols / 2, rel=1e-12)


def test_ridge_zero_is_ols():
    X, y = _problem(8)
    np.testing.assert_allclose(fit_ridge(X, y, 0.0).coefficients, fit_ols(X, y).coefficients)


def test_ridge_shrinks_monotonically():
    X, y = _problem(9)
    norms = [np.linalg.norm(fit_ridge(X, y, lam).coefficients) for lam in np.geomspace(1e-3, 1e4, 20)]
    assert all(b <= a for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-2


@pytest.mark.parametrize("seed", range(5))
def test_ridge_two_routes(seed):
    X, y = _problem(seed)
    for lam in (0.01, 0.3, 2.0):
        cf = fit_ridge(X, y, lam)
        cd = fit_elasticnet(X, y, PenaltySpec(lam, 0.0), tol=1e-12)
        np.testing.assert_allclose(cd.coefficients, cf.coefficients, atol=1e-6)


@pytest.mark.parametrize("alpha", [0.3, 1.0])
def test_objective_monotone(alpha):
    X, y = _problem(10, p=6)
    X[:, 1] = X[:, 0] * 0.9 + X[:, 1] * 0.1  # correlated design, slower convergence
    fit = fit_elasticnet(X, y, PenaltySpec(0.05, alpha), track_objective=True)
    h = np.array(fit.objective_history)
    assert len(h) == fit.iterations_used + 1
    assert np.all(np.diff(h) <= 1e-12 * np.abs(h[:-1]))


def _kkt_ok(fit, X, y, tol=1e-6):
    Z = fit.standardizer.apply(X)
    r = (y - y.mean()) - Z @ fit.coefficients
    g = Z.T @ r / len(y)
    lam = fit.penalty.lam
    live = ~fit.standardizer.constant
    active = (fit.coefficients != 0) & live
    inactive = (fit.coefficients == 0) & live
    ok_active = np.all(np.abs(np.abs(g[active]) - lam) <= tol)
    signs = np.all(np.sign(g[active]) == np.sign(fit.coefficients[active]))
    ok_inactive = np.all(np.abs(g[inactive]) <= lam + tol)
    return ok_active and signs and ok_inactive


def test_kkt_along_path():
    X, y = _problem(11, p=8)
    for fit in elasticnet_path(X, y, 1.0, default_grid(X, y, 20)):
        assert fit.converged and _kkt_ok(fit, X, y)


def test_sparsity_monotone():
    X, y = _problem(12, p=8, noise=5)
    grid = np.sort(default_grid(X, y, 30))  # ascending lambda
    sizes = [np.count_nonzero(fit_lasso(X, y, lam).coefficients) for lam in grid]
    assert all(b <= a for a, b in zip(sizes, sizes[1:]))


def test_warm_equals_cold():
    X, y = _problem(13, p=5)
    grid = default_grid(X, y, 15)
    warm = elasticnet_path(X, y, 0.7, grid)
    for lam, w in zip(grid, warm):
        cold = fit_elasticnet(X, y, PenaltySpec(lam, 0.7))
        np.testing.assert_allclose(w.coefficients, cold.coefficients, atol=1e-6)


def test_nonfinite_rejected():
    X, y = _problem(14)
    y[3] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        fit_elasticnet(X, y, PenaltySpec(0.1, 0.5))


def test_nonconvergence_flag():
    X, y = _problem(15)
    X[:, 1] = X[:, 0] + 1e-3 * X[:, 1]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = fit_elasticnet(X, y, PenaltySpec(1e-6, 0.5), max_iter=3)
    assert not fit.converged and fit.iterations_used == 3


def test_destandardized_prediction_matches():
    X, y = _problem(16)
    fit = fit_elasticnet(X, y, PenaltySpec(0.2, 0.5))
    b0, b = fit.original_coefficients()
    np.testing.assert_allclose(predict(fit, X), b0 + X @ b, rtol=0, atol=1e-10 * np.abs(y).max())


def test_predict_row_vs_batch_and_schema():
    X, y = _problem(17)
    fit = fit_ridge(X, y, 0.1)
    batch = predict(fit, X)
    rows = np.array([predict(fit, X[i:i + 1])[0] for i in range(len(X))])
    np.testing.assert_array_equal(batch, rows)
    with pytest.raises(ValueError, match="columns"):
        predict(fit, X[:, :2])


def test_predict_all_zero_coefficients():
    X, y = _problem(18)
    fit = fit_lasso(X, y, 1e6)
    assert np.all(predict(fit, X) == fit.intercept)


def test_json_roundtrip_bitwise():
    X, y = _problem(19)
    fit = fit_elasticnet(X, y, PenaltySpec(0.1, 0.5), columns=list("abcd"))
    doc = json.loads(json.dumps(linmod.to_dict(fit)))
    again = linmod.from_dict(doc)
    assert np.array_equal(predict(again, X), predict(fit, X))
    assert list(doc["coefficients"]) == list("abcd")


def test_cv_singleton_zero_grid():
    X, y = _problem(20)
    lam, table = cv_select_lambda(X, y, 1.0, grid=[0.0], k=4)
    assert lam == 0.0 and len(table) == 1
    # OLS CV computed by hand on the same contiguous folds
    folds = np.array_split(np.arange(len(y)), 4)
    errs = []
    for f in folds:
        tr = np.setdiff1d(np.arange(len(y)), f)
        fit = fit_ols(X[tr], y[tr])
        errs.append(np.sqrt(np.mean((y[f] - predict(fit, X[f])) ** 2)))
    assert table[0]["mean_rmse"] == pytest.approx(np.mean(errs), rel=1e-6)


def test_cv_noise_picks_largest():
    rng = np.random.default_rng(123)
    X = rng.normal(size=(60, 5))
    y = rng.normal(size=60)
    grid = [10.0, 1.0, 0.1, 0.01]
    lam, table = cv_select_lambda(X, y, 1.0, grid=grid, k=5)
    # oracle: the folds run explicitly
    folds = np.array_split(np.arange(60), 5)
    means = []
    for g in grid:
        errs = []
        for f in folds:
            tr = np.setdiff1d(np.arange(60), f)
            fit = fit_lasso(X[tr], y[tr], g)
            errs.append(np.sqrt(np.mean((y[f] - predict(fit, X[f])) ** 2)))
        means.append(np.mean(errs))
    assert grid[int(np.argmin(means))] == 10.0
    assert lam == 10.0


def test_cv_duplicates_warn():
    X, y = _problem(21)
    with pytest.warns(UserWarning, match="duplicate"):
        lam, table = cv_select_lambda(X, y, 0.0, grid=[1.0, 1.0, 0.1], k=3)
    assert [row["lambda"] for row in table] == [1.0, 0.1]


def test_cv_tie_prefers_larger():
    X, y = _problem(22)
    big = lambda_max(X, y) * 10
    lam, _ = cv_select_lambda(X, y, 1.0, grid=[big * 2, big], k=3)
    assert lam == big * 2


def test_cv_fold_too_small():
    X, y = _problem(23, n=5)
    with pytest.raises(ValueError):
        cv_select_lambda(X, y, 0.0, grid=[1.0], k=4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5))
def test_enet_zero_vs_ols_property(seed, p):
    X, y = _problem(seed, n=25, p=p)
    en = fit_elasticnet(X, y, PenaltySpec(0.0, 0.5), tol=1e-10)
    np.testing.assert_allclose(en.coefficients, fit_ols(X, y).coefficients, atol=1e-6)
