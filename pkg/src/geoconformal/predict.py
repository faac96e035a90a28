"""k-nearest-neighbor regression with manifold-valued responses.

On the sphere neighbors are combined by the extrinsic mean (Euclidean
average projected back to S^2); on the torus by a circular mean taken
separately on each angle.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import Manifold, as_manifold, check_responses
from .geometry import SpherePoint, sphere_geodesic_distance, torus_geodesic_distance, wrap_angle

DEGENERATE_TOL = 1e-9


class DegenerateMeanError(ValueError):
    """Raised when a resultant vector is too short to define a direction."""


def extrinsic_mean(points):
    """Normalized sum of unit vectors; raises :class:`DegenerateMeanError` on cancellation."""
    P = np.atleast_2d(np.asarray([np.asarray(p, dtype=float) for p in points]))
    if P.shape[0] == 0:
        raise ValueError("extrinsic_mean of an empty sequence")
    s = P.sum(axis=0)
    norm = np.linalg.norm(s)
    if norm < DEGENERATE_TOL:
        raise DegenerateMeanError("resultant vector vanishes; extrinsic mean undefined")
    return SpherePoint(tuple(s / norm))


def circular_mean(angles):
    """``atan2(sum sin, sum cos)`` wrapped into ``[-pi, pi)``."""
    a = np.asarray(angles, dtype=float).reshape(-1)
    if a.size == 0:
        raise ValueError("circular_mean of an empty sequence")
    s, c = np.sin(a).sum(), np.cos(a).sum()
    if np.hypot(s, c) < DEGENERATE_TOL:
        raise DegenerateMeanError("resultant phasor vanishes; circular mean undefined")
    return float(wrap_angle(np.arctan2(s, c)))


def aggregate_neighbors(Yn, manifold):
    """Row-wise manifold mean of neighbor responses ``Yn`` of shape ``(m, k, dim)``.

    Returns ``(means, degenerate)`` where ``degenerate`` flags rows that fell
    back to their first (nearest) neighbor.
    """
    manifold = as_manifold(manifold)
    if manifold is Manifold.SPHERE:
        s = Yn.sum(axis=1)
        norm = np.linalg.norm(s, axis=1)
        degenerate = norm < DEGENERATE_TOL
        out = s / np.where(degenerate, 1.0, norm)[:, None]
        out[degenerate] = Yn[degenerate, 0]
        return out, degenerate
    S = np.sin(Yn).sum(axis=1)
    C = np.cos(Yn).sum(axis=1)
    short = np.hypot(S, C) < DEGENERATE_TOL
    out = wrap_angle(np.arctan2(S, C))
    out[short] = Yn[:, 0][short]
    return out, short.any(axis=1)


def geodesic_distance(manifold, a, b):
    if as_manifold(manifold) is Manifold.SPHERE:
        return sphere_geodesic_distance(a, b)
    return torus_geodesic_distance(a, b)


def brute_kneighbors(Q, T, k, chunk=512):
    """Indices of the ``k`` nearest rows of ``T`` for each row of ``Q``.

    Exhaustive Euclidean scan; ties go to the lower training index.
    """
    out = np.empty((Q.shape[0], k), dtype=np.intp)
    for start in range(0, Q.shape[0], chunk):
        q = Q[start : start + chunk]
        diff = q[:, None, :] - T[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        out[start : start + chunk] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


class KnnManifoldRegressor(BaseEstimator):
    """Brute-force k-NN regressor for sphere- or torus-valued responses.

    Parameters
    ----------
    n_neighbors : int, default=20
    manifold : {"sphere", "torus"}, default="sphere"
    standardize : bool, default=True
        Z-score each covariate with statistics from the training rows
        before measuring distances. Constant columns keep scale 1.
    """

    def __init__(self, n_neighbors=20, manifold="sphere", standardize=True):
        self.n_neighbors = n_neighbors
        self.manifold = manifold
        self.standardize = standardize

    def fit(self, X, Y):
        X = check_array(X, dtype=float)
        manifold = as_manifold(self.manifold)
        Y = check_responses(Y, manifold)
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X and Y have different row counts")
        if not 1 <= self.n_neighbors <= X.shape[0]:
            raise ValueError(
                f"n_neighbors={self.n_neighbors} must lie in [1, {X.shape[0]}] for this training set"
            )
        self.manifold_ = manifold
        self.scaler_ = StandardScaler().fit(X) if self.standardize else None
        self.X_ = X
        self.Z_ = self._transform(X)
        self.Y_ = Y
        self.n_features_in_ = X.shape[1]
        return self

    def _transform(self, X):
        return X if self.scaler_ is None else self.scaler_.transform(X)

    def kneighbors(self, X):
        check_is_fitted(self, "Z_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return brute_kneighbors(self._transform(X), self.Z_, self.n_neighbors)

    def predict_with_diagnostics(self, X):
        """Predictions plus a boolean mask of rows that used the degenerate-mean fallback."""
        idx = self.kneighbors(X)
        return aggregate_neighbors(self.Y_[idx], self.manifold_)

    def predict(self, X):
        return self.predict_with_diagnostics(X)[0]

    def residuals(self, X, Y):
        """Geodesic distance between predictions and ``Y``."""
        return geodesic_distance(self.manifold_, self.predict(X), check_responses(Y, self.manifold_))
