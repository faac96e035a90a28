"""Cross-validated difficulty estimation.

Everything here sees only the proper training rows; the calibration split
is never passed in, which is what keeps calibration scores exchangeable
with test scores.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import as_manifold, check_responses
from .predict import KnnManifoldRegressor, brute_kneighbors, geodesic_distance

DEFAULT_EPS = 1e-4


class ConfigurationError(ValueError):
    pass


def fold_assignment(n, folds, random_state=None):
    """Round-robin fold labels over a seeded permutation of ``range(n)``."""
    rng = np.random.default_rng(random_state)
    perm = rng.permutation(n)
    labels = np.empty(n, dtype=np.intp)
    labels[perm] = np.arange(n) % folds
    return labels


def cv_residuals(X, Y, manifold="sphere", folds=5, n_neighbors=20, standardize=True, random_state=None):
    """Out-of-fold geodesic residuals of the k-NN base model.

    Row ``i`` in fold ``f`` gets ``d(yhat^{(-f)}(X_i), Y_i)`` where the model
    is refit without fold ``f``. Output is aligned with the input rows.
    """
    X = check_array(X, dtype=float)
    manifold = as_manifold(manifold)
    Y = check_responses(Y, manifold)
    n = X.shape[0]
    if folds < 2:
        raise ConfigurationError("need at least 2 folds")
    if n < folds:
        raise ConfigurationError(f"{n} training rows cannot fill {folds} folds")
    labels = fold_assignment(n, folds, random_state)
    smallest_complement = n - np.bincount(labels, minlength=folds).max()
    if smallest_complement < n_neighbors:
        raise ConfigurationError(
            f"a fold complement has {smallest_complement} rows, fewer than n_neighbors={n_neighbors}"
        )
    out = np.empty(n)
    for f in range(folds):
        held = labels == f
        model = KnnManifoldRegressor(n_neighbors, manifold, standardize).fit(X[~held], Y[~held])
        out[held] = geodesic_distance(manifold, model.predict(X[held]), Y[held])
    return out


class DifficultyEstimator(BaseEstimator):
    """k-NN regression of residual magnitude on covariates, floored at ``eps``.

    Parameters
    ----------
    k_sigma : int, default=20
        Neighbors averaged for each estimate.
    eps : float, default=1e-4
        Lower bound in radians, so the estimate is safe to divide by.
    standardize : bool, default=True
    """

    def __init__(self, k_sigma=20, eps=DEFAULT_EPS, standardize=True):
        self.k_sigma = k_sigma
        self.eps = eps
        self.standardize = standardize

    def fit(self, X, residuals):
        X = check_array(X, dtype=float)
        residuals = np.asarray(residuals, dtype=float).reshape(-1)
        if residuals.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} anchors but {residuals.shape[0]} residuals")
        if np.any(residuals < 0) or not np.all(np.isfinite(residuals)):
            raise ValueError("residuals must be finite and nonnegative")
        if not 1 <= self.k_sigma <= X.shape[0]:
            raise ConfigurationError(f"k_sigma={self.k_sigma} must lie in [1, {X.shape[0]}]")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        self.scaler_ = StandardScaler().fit(X) if self.standardize else None
        self.anchors_ = self._transform(X)
        self.residuals_ = residuals.copy()
        self.n_features_in_ = X.shape[1]
        return self

    def _transform(self, X):
        return X if self.scaler_ is None else self.scaler_.transform(X)

    def predict(self, X):
        """Estimated difficulty ``sigma_hat(x) >= eps`` for each row of ``X``."""
        check_is_fitted(self, "anchors_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        idx = brute_kneighbors(self._transform(X), self.anchors_, self.k_sigma)
        return np.maximum(self.residuals_[idx].mean(axis=1), self.eps)


def fit_difficulty(train_covariates, residuals, k_sigma=20, eps=DEFAULT_EPS, standardize=True):
    return DifficultyEstimator(k_sigma, eps, standardize).fit(train_covariates, residuals)
