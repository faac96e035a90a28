"""Split-conformal prediction regions on S^2 and T^2.

Three nonconformity scores are supported:

``adaptive``
    geodesic residual divided by the estimated difficulty; regions are
    geodesic balls whose radius scales with ``sigma_hat(x)``.
``standard``
    plain geodesic residual; constant-radius geodesic balls.
``naive``
    L-infinity distance in a coordinate chart ((theta, phi) on the
    sphere, the two angles on the torus); chart rectangles.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import Manifold, as_manifold, check_responses
from .difficulty import DEFAULT_EPS, DifficultyEstimator, cv_residuals
from .geometry import (
    SPHERE_AREA,
    TORUS_AREA,
    TORUS_DIAMETER,
    cap_area,
    circular_distance,
    naive_rect_area,
    sphere_to_chart,
    torus_ball_area,
)
from .predict import KnnManifoldRegressor, geodesic_distance


class ScoreMethod(str, Enum):
    ADAPTIVE = "adaptive"
    STANDARD = "standard"
    NAIVE = "naive"


METHODS = (ScoreMethod.ADAPTIVE, ScoreMethod.STANDARD, ScoreMethod.NAIVE)


def as_method(value):
    if isinstance(value, ScoreMethod):
        return value
    try:
        return ScoreMethod(str(value).lower())
    except ValueError:
        raise ValueError(f"unknown score method {value!r}; expected one of {[m.value for m in METHODS]}") from None


def chart_linf_distance(manifold, a, b):
    """L-infinity distance in the manifold's coordinate chart; azimuths compared circularly."""
    if as_manifold(manifold) is Manifold.SPHERE:
        ca, cb = sphere_to_chart(a), sphere_to_chart(b)
        return np.maximum(np.abs(ca[..., 0] - cb[..., 0]), circular_distance(ca[..., 1], cb[..., 1]))
    return np.max(circular_distance(a, b), axis=-1)


def nonconformity_score(method, y_pred, y, sigma=None, manifold="sphere", eps=DEFAULT_EPS):
    """Score responses ``y`` against predictions ``y_pred`` (row-aligned arrays)."""
    method = as_method(method)
    if method is ScoreMethod.NAIVE:
        return chart_linf_distance(manifold, y_pred, y)
    d = geodesic_distance(manifold, y_pred, y)
    if method is ScoreMethod.STANDARD:
        return d
    if sigma is None:
        raise ValueError("the adaptive score needs a difficulty estimate")
    return d / np.maximum(np.asarray(sigma, dtype=float), eps)


def conformal_rank(n, alpha):
    """1-based rank ``ceil((1 - alpha)(n + 1))`` of the calibration order statistic."""
    # guard against 0.9 * 300 -> 270.00000000000006 style rounding
    return math.ceil((1.0 - alpha) * (n + 1) - 1e-9)


def conformal_quantile(scores, alpha):
    """Split-conformal threshold; ``inf`` when the rank exceeds the sample size."""
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if scores.size == 0:
        raise ValueError("conformal_quantile needs at least one score")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    k = conformal_rank(scores.size, alpha)
    if k > scores.size:
        return math.inf
    return float(np.partition(scores, k - 1)[k - 1])


@dataclass(frozen=True)
class GeodesicCap:
    """Closed geodesic ball; ``radius = inf`` is the whole manifold."""

    center: np.ndarray
    radius: float
    manifold: Manifold = Manifold.SPHERE


@dataclass(frozen=True)
class ChartRect:
    """Closed chart rectangle with equal half-width on both coordinates.

    ``center`` is (theta, phi) on the sphere and the angle pair on the torus.
    """

    center: np.ndarray
    half_width: float
    manifold: Manifold = Manifold.SPHERE


def region_contains(region, y):
    y = np.asarray(y, dtype=float)
    if isinstance(region, GeodesicCap):
        return bool(geodesic_distance(region.manifold, region.center, y) <= region.radius)
    if region.manifold is Manifold.SPHERE:
        c = sphere_to_chart(y)
        dtheta = abs(c[0] - region.center[0])
        dphi = circular_distance(c[1], region.center[1])
        return bool(max(dtheta, dphi) <= region.half_width)
    return bool(np.max(circular_distance(y, region.center)) <= region.half_width)


def region_area(region):
    """Area in steradians (sphere) or squared radians (torus)."""
    if isinstance(region, GeodesicCap):
        if region.manifold is Manifold.SPHERE:
            return cap_area(min(region.radius, np.pi))
        return torus_ball_area(region.radius)
    hw = min(region.half_width, np.pi)
    if region.manifold is Manifold.SPHERE:
        return naive_rect_area(hw, region.center[0])
    return min(2.0 * hw, 2.0 * np.pi) ** 2


def whole_manifold_area(manifold):
    return SPHERE_AREA if as_manifold(manifold) is Manifold.SPHERE else TORUS_AREA


class GeodesicConformalRegressor(BaseEstimator):
    """Split-conformal regions for sphere- or torus-valued regression.

    ``fit`` trains the k-NN point predictor and the cross-validated
    difficulty estimator on the proper training split. ``calibrate`` scores
    a disjoint calibration split and stores the conformal threshold
    ``q_hat_``. Regions are then available through :meth:`predict_regions`
    or the vectorized :meth:`contains`, :meth:`predict_radius` and
    :meth:`region_areas`.

    Parameters
    ----------
    method : {"adaptive", "standard", "naive"}, default="adaptive"
    alpha : float, default=0.1
        Target miscoverage.
    n_neighbors : int, default=20
        Neighbors for the point predictor (also used for the CV refits).
    k_sigma : int, default=20
        Neighbors for the difficulty estimator.
    n_folds : int, default=5
    eps : float, default=1e-4
        Floor on the difficulty estimate, radians.
    manifold : {"sphere", "torus"}, default="sphere"
    standardize : bool, default=True
    random_state : int, Generator or None
        Seeds the cross-validation fold assignment.

    Examples
    --------
    >>> from geoconformal import GeodesicConformalRegressor, generate_synthetic_dataset
    >>> data = generate_synthetic_dataset()
    >>> est = GeodesicConformalRegressor(random_state=0).fit(data.X[:600], data.Y[:600])
    >>> est = est.calibrate(data.X[600:900], data.Y[600:900])
    >>> bool(est.contains(data.X[900:], data.Y[900:]).mean() > 0.8)
    True
    """

    def __init__(
        self,
        method="adaptive",
        alpha=0.1,
        n_neighbors=20,
        k_sigma=20,
        n_folds=5,
        eps=DEFAULT_EPS,
        manifold="sphere",
        standardize=True,
        random_state=None,
    ):
        self.method = method
        self.alpha = alpha
        self.n_neighbors = n_neighbors
        self.k_sigma = k_sigma
        self.n_folds = n_folds
        self.eps = eps
        self.manifold = manifold
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, Y):
        X = check_array(X, dtype=float)
        manifold = as_manifold(self.manifold)
        Y = check_responses(Y, manifold)
        as_method(self.method)
        self.manifold_ = manifold
        self.predictor_ = KnnManifoldRegressor(self.n_neighbors, manifold, self.standardize).fit(X, Y)
        rng = np.random.default_rng(self.random_state)
        self.cv_residuals_ = cv_residuals(
            X, Y, manifold, self.n_folds, self.n_neighbors, self.standardize, random_state=rng
        )
        self.difficulty_ = DifficultyEstimator(self.k_sigma, self.eps, self.standardize).fit(
            X, self.cv_residuals_
        )
        self.n_features_in_ = X.shape[1]
        for attr in ("q_hat_", "cal_scores_"):
            self.__dict__.pop(attr, None)
        return self

    def with_method(self, method):
        """Shallow copy sharing the fitted predictor and difficulty model, uncalibrated."""
        check_is_fitted(self, "predictor_")
        other = copy.copy(self)
        other.method = as_method(method).value
        for attr in ("q_hat_", "cal_scores_"):
            other.__dict__.pop(attr, None)
        return other

    def predict(self, X):
        """Point predictions (region centers)."""
        check_is_fitted(self, "predictor_")
        return self.predictor_.predict(X)

    def predict_sigma(self, X):
        check_is_fitted(self, "difficulty_")
        return self.difficulty_.predict(X)

    def nonconformity_scores(self, X, Y, y_pred=None):
        check_is_fitted(self, "predictor_")
        Y = check_responses(Y, self.manifold_)
        y_pred = self.predict(X) if y_pred is None else y_pred
        method = as_method(self.method)
        sigma = self.predict_sigma(X) if method is ScoreMethod.ADAPTIVE else None
        return nonconformity_score(method, y_pred, Y, sigma, self.manifold_, self.eps)

    def calibrate(self, X, Y):
        """Compute calibration scores and the conformal threshold ``q_hat_``."""
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        scores = self.nonconformity_scores(X, Y)
        self.cal_scores_ = scores
        self.q_hat_ = conformal_quantile(scores, self.alpha)
        return self

    def predict_radius(self, X, sigma=None):
        """Cap radius (geodesic methods) or chart half-width (naive) per row.

        ``inf`` marks the whole manifold.
        """
        check_is_fitted(self, "q_hat_")
        X = check_array(X, dtype=float)
        method = as_method(self.method)
        q = self.q_hat_
        if math.isinf(q):
            return np.full(X.shape[0], np.inf)
        if method is ScoreMethod.ADAPTIVE:
            sigma = self.predict_sigma(X) if sigma is None else np.maximum(sigma, self.eps)
            r = q * sigma
        else:
            r = np.full(X.shape[0], q)
        cap = np.pi if (method is ScoreMethod.NAIVE or self.manifold_ is Manifold.SPHERE) else TORUS_DIAMETER
        return np.minimum(r, cap)

    def predict_regions(self, X):
        X = check_array(X, dtype=float)
        centers = self.predict(X)
        radii = self.predict_radius(X)
        if as_method(self.method) is ScoreMethod.NAIVE:
            if self.manifold_ is Manifold.SPHERE:
                centers = sphere_to_chart(centers)
            return [ChartRect(c, float(r), self.manifold_) for c, r in zip(centers, radii)]
        return [GeodesicCap(c, float(r), self.manifold_) for c, r in zip(centers, radii)]

    def contains(self, X, Y, y_pred=None, sigma=None):
        """Vectorized membership of ``Y[i]`` in the region for ``X[i]``."""
        Y = check_responses(Y, self.manifold_)
        y_pred = self.predict(X) if y_pred is None else y_pred
        radii = self.predict_radius(X, sigma=sigma)
        if as_method(self.method) is ScoreMethod.NAIVE:
            d = chart_linf_distance(self.manifold_, y_pred, Y)
        else:
            d = geodesic_distance(self.manifold_, y_pred, Y)
        return d <= radii

    def region_areas(self, X, y_pred=None, sigma=None):
        radii = self.predict_radius(X, sigma=sigma)
        method = as_method(self.method)
        if method is not ScoreMethod.NAIVE:
            if self.manifold_ is Manifold.SPHERE:
                return cap_area(np.minimum(radii, np.pi))
            return torus_ball_area(radii)
        hw = np.minimum(radii, np.pi)
        if self.manifold_ is Manifold.SPHERE:
            y_pred = self.predict(X) if y_pred is None else y_pred
            return naive_rect_area(hw, sphere_to_chart(y_pred)[:, 0])
        return np.minimum(2.0 * hw, 2.0 * np.pi) ** 2
