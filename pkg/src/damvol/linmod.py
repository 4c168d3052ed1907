"""Least squares, Ridge, Lasso and ElasticNet fitted from scratch.

All fits standardize X internally (population sd, so every non-constant
column satisfies ``sum(x_j**2) == n``) and center y. The penalized objective is

    (1/2n) * ||y - b0 - X b||^2 + lam * (alpha * ||b||_1 + (1 - alpha)/2 * ||b||_2^2)

with the intercept ``b0`` left unpenalized. Coefficients are stored in
standardized space; :meth:`LinearFit.original_coefficients` maps them back.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .preprocess import Standardizer


class RankDeficientError(ValueError):
    pass


@dataclass(frozen=True)
class PenaltySpec:
    lam: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass
class LinearFit:
    kind: str
    columns: tuple[str, ...]
    intercept: float
    coefficients: np.ndarray
    standardizer: Standardizer
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    iterations_used: int = 0
    converged: bool = True
    objective_history: list[float] = field(default_factory=list, repr=False)

    def original_coefficients(self) -> tuple[float, np.ndarray]:
        """Intercept and slopes on the raw (unstandardized) feature scale."""
        slopes = np.where(self.standardizer.constant, 0.0,
                          self.coefficients / self.standardizer.scale)
        return float(self.intercept - slopes @ self.standardizer.mean), slopes

    def predict(self, X) -> np.ndarray:
        return predict(self, X)


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in X or y")
    return X, y


def _columns(columns, p):
    if columns is None:
        return tuple(f"x{j}" for j in range(p))
    columns = tuple(columns)
    if len(columns) != p:
        raise ValueError(f"{len(columns)} column names for {p} columns")
    return columns


def soft_threshold(z, gamma):
    """``sign(z) * max(|z| - gamma, 0)``."""
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("gamma must be >= 0")
    out = np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def objective(Z, yc, beta, penalty: PenaltySpec) -> float:
    """Penalized objective in standardized space (``yc`` centered)."""
    n = Z.shape[0]
    r = yc - Z @ beta
    return float(r @ r / (2 * n) + penalty.lam * (
        penalty.alpha * np.abs(beta).sum() + 0.5 * (1 - penalty.alpha) * beta @ beta))


def fit_ols(X, y, columns=None) -> LinearFit:
    """Ordinary least squares through a pivoted QR factorization."""
    X, y = _check_xy(X, y)
    n, p = X.shape
    cols = _columns(columns, p)
    std = Standardizer.fit(X)
    free = np.flatnonzero(~std.constant)
    beta = np.zeros(p)
    ybar = float(y.mean())
    if free.size:
        if n <= free.size:
            raise RankDeficientError(f"need n > p: {n} rows for {free.size} varying columns")
        Z = std.apply(X)[:, free]
        Q, R, piv = scipy.linalg.qr(Z, mode="economic", pivoting=True)
        d = np.abs(np.diag(R))
        rank = int(np.sum(d > d[0] * max(n, free.size) * np.finfo(float).eps * 10))
        if rank < free.size:
            dependent = sorted(cols[free[j]] for j in piv[rank:])
            raise RankDeficientError(f"rank-deficient design; dependent column(s): {dependent}")
        b = scipy.linalg.solve_triangular(R, Q.T @ (y - ybar))
        beta[free[piv]] = b
    return LinearFit("ols", cols, ybar, beta, std)


def fit_ridge(X, y, lam: float, columns=None) -> LinearFit:
    """Closed-form ridge: ``(Z'Z + n*lam*I) b = Z'(y - ybar)``."""
    if lam == 0:
        fit = fit_ols(X, y, columns)
        fit.kind = "ridge"
        fit.penalty = PenaltySpec(0.0, 0.0)
        return fit
    X, y = _check_xy(X, y)
    n, p = X.shape
    cols = _columns(columns, p)
    pen = PenaltySpec(lam, 0.0)
    std = Standardizer.fit(X)
    free = np.flatnonzero(~std.constant)
    beta = np.zeros(p)
    ybar = float(y.mean())
    if free.size:
        Z = std.apply(X)[:, free]
        A = Z.T @ Z + n * lam * np.eye(free.size)
        beta[free] = scipy.linalg.solve(A, Z.T @ (y - ybar), assume_a="pos")
    return LinearFit("ridge", cols, ybar, beta, std, pen)


def fit_elasticnet(X, y, penalty: PenaltySpec, tol: float = 1e-8, max_iter: int = 10000,
                   columns=None, init=None, kind: str = "elasticnet",
                   track_objective: bool = False) -> LinearFit:
    """Cyclic coordinate descent for the elastic-net objective.

    ``init`` warm-starts the standardized coefficients. Convergence means the
    largest coefficient change in a full sweep fell below ``tol``; when
    ``max_iter`` sweeps pass first, the fit comes back with
    ``converged=False``.
    """
    X, y = _check_xy(X, y)
    if tol <= 0:
        raise ValueError("tol must be positive")
    n, p = X.shape
    cols = _columns(columns, p)
    std = Standardizer.fit(X)
    free = np.flatnonzero(~std.constant)
    Z = std.apply(X)
    ybar = float(y.mean())
    beta = np.zeros(p) if init is None else np.array(init, dtype=float)
    beta[std.constant] = 0.0
    r = (y - ybar) - Z @ beta
    l1 = penalty.lam * penalty.alpha
    denom = 1.0 + penalty.lam * (1.0 - penalty.alpha)
    history = [objective(Z, y - ybar, beta, penalty)] if track_objective else []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        max_delta = 0.0
        for j in free:
            zj = Z[:, j]
            old = beta[j]
            rho = zj @ r / n + old
            new = soft_threshold(rho, l1) / denom
            if new != old:
                r -= (new - old) * zj
                beta[j] = new
                max_delta = max(max_delta, abs(new - old))
        if track_objective:
            history.append(objective(Z, y - ybar, beta, penalty))
        if max_delta < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"coordinate descent did not converge in {max_iter} sweeps",
                      RuntimeWarning, stacklevel=2)
    return LinearFit(kind, cols, ybar, beta, std, penalty, it, converged, history)


def fit_lasso(X, y, lam: float, **kw) -> LinearFit:
    return fit_elasticnet(X, y, PenaltySpec(lam, 1.0), kind="lasso", **kw)


def lambda_max(X, y) -> float:
    """``max_j |(1/n) sum_i z_ij (y_i - ybar)|`` on the standardized design."""
    X, y = _check_xy(X, y)
    Z = Standardizer.fit(X).apply(X)
    return float(np.max(np.abs(Z.T @ (y - y.mean()))) / X.shape[0])


def default_grid(X, y, n: int = 50, ratio: float = 1e-4) -> np.ndarray:
    """Descending log-spaced grid from ``lambda_max`` to ``ratio * lambda_max``."""
    top = lambda_max(X, y)
    if top == 0:
        return np.array([0.0])
    return np.geomspace(top, top * ratio, n)


def fit_penalized(X, y, lam: float, alpha: float, columns=None, init=None,
                  tol: float = 1e-8, max_iter: int = 10000) -> LinearFit:
    """Dispatch: closed form for pure ridge, coordinate descent otherwise."""
    if alpha == 0:
        return fit_ridge(X, y, lam, columns)
    kind = "lasso" if alpha == 1 else "elasticnet"
    return fit_elasticnet(X, y, PenaltySpec(lam, alpha), tol, max_iter, columns, init, kind)


def elasticnet_path(X, y, alpha: float, grid, tol: float = 1e-8,
                    max_iter: int = 10000, columns=None) -> list[LinearFit]:
    """Coordinate-descent fits along ``grid`` (descending), warm-started."""
    fits, init = [], None
    for lam in grid:
        kind = "ridge" if alpha == 0 else ("lasso" if alpha == 1 else "elasticnet")
        fit = fit_elasticnet(X, y, PenaltySpec(float(lam), alpha), tol, max_iter,
                             columns, init, kind)
        fits.append(fit)
        init = fit.coefficients
    return fits


def contiguous_folds(n: int, k: int) -> list[np.ndarray]:
    return [idx for idx in np.array_split(np.arange(n), k)]


def cv_select_lambda(X, y, alpha: float, grid=None, k: int = 5, seed: int | None = None,
                     shuffle: bool = False, tol: float = 1e-8, max_iter: int = 10000):
    """K-fold CV over a lambda grid.

    Folds are contiguous blocks in row (time) order unless ``shuffle`` is set,
    in which case ``seed`` drives the permutation. Returns ``(best_lambda,
    table)`` where ``table`` rows hold the per-lambda mean and sd of fold
    RMSE. Ties go to the larger lambda.
    """
    X, y = _check_xy(X, y)
    n = X.shape[0]
    if k < 2:
        raise ValueError("need k >= 2 folds")
    grid = default_grid(X, y) if grid is None else np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("empty lambda grid")
    uniq = np.unique(grid)[::-1]
    if uniq.size < grid.size:
        warnings.warn("duplicate lambda values removed from grid", UserWarning, stacklevel=2)
    grid = uniq
    order = np.arange(n)
    if shuffle:
        order = np.random.default_rng(seed).permutation(n)
    folds = [order[f] for f in contiguous_folds(n, k)]
    if any(f.size < 2 for f in folds):
        raise ValueError(f"{n} rows cannot make {k} folds of at least 2 rows")
    scores = np.empty((grid.size, k))
    for fi, test in enumerate(folds):
        train = np.setdiff1d(order, test, assume_unique=True)
        train.sort()
        Xtr, ytr = X[train], y[train]
        if alpha == 0:
            fits = [fit_ridge(Xtr, ytr, lam) for lam in grid]
        else:
            fits = elasticnet_path(Xtr, ytr, alpha, grid, tol, max_iter)
        for gi, fit in enumerate(fits):
            err = y[test] - predict(fit, X[test])
            scores[gi, fi] = np.sqrt(np.mean(err ** 2))
    mean = scores.mean(axis=1)
    sd = scores.std(axis=1)
    best = int(np.flatnonzero(mean == mean.min())[0])  # grid is descending
    table = [{"lambda": float(l), "mean_rmse": float(m), "sd_rmse": float(s)}
             for l, m, s in zip(grid, mean, sd)]
    return float(grid[best]), table


def predict(fit: LinearFit, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if len(fit.columns) == 1 else X[None, :]
    if X.shape[1] != len(fit.columns):
        raise ValueError(f"expected {len(fit.columns)} columns {list(fit.columns)}, "
                         f"got {X.shape[1]}")
    Z = fit.standardizer.apply(X)
    # row-wise reduction: identical results for one row or a batch
    return fit.intercept + (Z * fit.coefficients).sum(axis=1)


def to_dict(fit: LinearFit) -> dict:
    return {
        "kind": fit.kind,
        "penalty": {"lambda": fit.penalty.lam, "alpha": fit.penalty.alpha},
        "intercept": fit.intercept,
        "columns": list(fit.columns),
        "coefficients": {c: float(b) for c, b in zip(fit.columns, fit.coefficients)},
        "standardizer": fit.standardizer.to_dict(),
        "convergence": {"iterations": fit.iterations_used, "converged": fit.converged},
    }


def from_dict(d: dict) -> LinearFit:
    cols = tuple(d["columns"])
    return LinearFit(
        kind=d["kind"],
        columns=cols,
        intercept=float(d["intercept"]),
        coefficients=np.array([d["coefficients"][c] for c in cols], dtype=float),
        standardizer=Standardizer.from_dict(d["standardizer"]),
        penalty=PenaltySpec(d["penalty"]["lambda"], d["penalty"]["alpha"]),
        iterations_used=d["convergence"]["iterations"],
        converged=d["convergence"]["converged"],
    )
