import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from geoconformal.conformal import (
    METHODS,
    ChartRect,
    GeodesicCap,
    GeodesicConformalRegressor,
    ScoreMethod,
    as_method,
    conformal_quantile,
    conformal_rank,
    nonconformity_score,
    region_area,
    region_contains,
    whole_manifold_area,
)
from geoconformal.dataset import Manifold
from geoconformal.geometry import (
    TORUS_AREA,
    chart_to_sphere,
    sphere_geodesic_distance,
    wrap_angle,
)
from geoconformal.vmf import SyntheticConfig, generate_synthetic_dataset, sample_vmf_batch

E1, E2, E3 = np.eye(3)


def torus_data(n, rng):
    X = rng.uniform(-2, 2, (n, 2))
    center = np.column_stack([np.sin(X[:, 0]) * 2.0, X[:, 1]])
    scale = 0.05 + 0.4 * (np.abs(X[:, 0]) / 2)
    return X, wrap_angle(center + rng.normal(size=(n, 2)) * scale[:, None])


@pytest.fixture(scope="module")
def sphere_model():
    d = generate_synthetic_dataset(SyntheticConfig(n=1200, seed=21))
    m = GeodesicConformalRegressor(random_state=0).fit(d.X[:600], d.Y[:600])
    return m, d


@pytest.fixture(scope="module")
def torus_model():
    rng = np.random.default_rng(8)
    X, Y = torus_data(1200, rng)
    m = GeodesicConformalRegressor(manifold="torus", random_state=0).fit(X[:600], Y[:600])
    return m, X, Y


class TestScores:
    @pytest.mark.parametrize("method", list(METHODS))
    @pytest.mark.parametrize("manifold", ["sphere", "torus"])
    def test_perfect_prediction_scores_zero(self, method, manifold, rng):
        y = rng.normal(size=(5, 3)) if manifold == "sphere" else rng.uniform(-np.pi, np.pi, (5, 2))
        if manifold == "sphere":
            y /= np.linalg.norm(y, axis=1, keepdims=True)
        s = nonconformity_score(method, y, y, sigma=np.ones(5), manifold=manifold)
        assert np.allclose(s, 0.0, atol=1e-12)

    def test_standard_antipodal(self):
        assert nonconformity_score("standard", E1, -E1) == pytest.approx(np.pi)

    def test_adaptive_example(self):
        y = np.array([np.cos(0.5), np.sin(0.5), 0.0])
        assert nonconformity_score("adaptive", E1, y, sigma=2.0) == pytest.approx(0.25)

    def test_adaptive_uses_floor(self):
        y = np.array([np.cos(0.5), np.sin(0.5), 0.0])
        assert nonconformity_score("adaptive", E1, y, sigma=0.0) == pytest.approx(0.5 / 1e-4)

    def test_adaptive_needs_sigma(self):
        with pytest.raises(ValueError):
            nonconformity_score("adaptive", E1, E2)

    def test_naive_seam(self):
        a = chart_to_sphere([np.pi / 2, np.pi - 0.05])
        b = chart_to_sphere([np.pi / 2, -np.pi + 0.05])
        assert nonconformity_score("naive", a, b) == pytest.approx(0.1)

    def test_naive_torus(self):
        s = nonconformity_score("naive", np.array([0.0, 3.0]), np.array([0.2, -3.0]), manifold="torus")
        assert s == pytest.approx(2 * np.pi - 6.0)

    def test_method_parsing(self):
        assert as_method("Naive") is ScoreMethod.NAIVE
        with pytest.raises(ValueError):
            as_method("bogus")


class TestQuantile:
    def test_examples(self):
        assert conformal_quantile(np.arange(1, 10), 0.1) == 9
        assert conformal_quantile(np.arange(1, 100), 0.1) == 90
        assert conformal_quantile(np.arange(1, 6), 0.1) == math.inf

    def test_rank_299(self):
        assert conformal_rank(299, 0.1) == 270
        scores = np.random.default_rng(0).permutation(np.arange(299.0))
        assert conformal_quantile(scores, 0.1) == 269.0

    def test_duplicates(self):
        assert conformal_quantile([1, 1, 1, 2, 2, 2, 3, 3, 3], 0.5) == 2

    def test_duplicated_calibration_set(self, rng):
        s = rng.exponential(size=150)
        q1 = conformal_quantile(s, 0.1)
        q2 = conformal_quantile(np.concatenate([s, s]), 0.1)
        ss = np.sort(s)
        pos = np.searchsorted(ss, q1)
        assert ss[max(pos - 1, 0)] <= q2 <= ss[min(pos + 1, ss.size - 1)]

    def test_monotone_in_alpha(self, rng):
        s = rng.exponential(size=97)
        qs = [conformal_quantile(s, a) for a in np.linspace(0.01, 0.99, 99)]
        assert all(a >= b for a, b in zip(qs, qs[1:]))

    def test_errors(self):
        with pytest.raises(ValueError):
            conformal_quantile([], 0.1)
        with pytest.raises(ValueError):
            conformal_quantile([1.0], 1.0)


class TestRegions:
    def test_center_always_inside(self):
        assert region_contains(GeodesicCap(E1, 0.0), E1)
        assert region_contains(ChartRect(np.array([1.0, 0.5]), 0.0), chart_to_sphere([1.0, 0.5]))

    def test_cap_boundary_inclusive(self):
        y = np.array([np.cos(0.5), np.sin(0.5), 0.0])
        r = float(sphere_geodesic_distance(E1, y))
        assert region_contains(GeodesicCap(E1, r), y)
        assert not region_contains(GeodesicCap(E1, np.nextafter(r, 0)), y)

    def test_rect_example(self):
        rect = ChartRect(np.array([np.pi / 2, 0.0]), 0.2)
        assert not region_contains(rect, chart_to_sphere([np.pi / 2 + 0.1, 0.25]))
        assert region_contains(rect, chart_to_sphere([np.pi / 2 + 0.1, 0.15]))

    def test_whole_manifold(self, rng):
        cap = GeodesicCap(E3, math.inf)
        ys = rng.normal(size=(100, 3))
        assert all(region_contains(cap, y / np.linalg.norm(y)) for y in ys)
        assert region_area(cap) == pytest.approx(4 * np.pi)
        assert whole_manifold_area("torus") == pytest.approx(TORUS_AREA)

    def test_areas(self):
        assert region_area(GeodesicCap(E1, np.pi / 2)) == pytest.approx(2 * np.pi)
        assert region_area(ChartRect(np.array([np.pi / 2, 0.0]), 0.1)) == pytest.approx(0.039933, abs=1e-6)
        assert region_area(GeodesicCap(np.zeros(2), 1.0, Manifold.TORUS)) == pytest.approx(np.pi)
        assert region_area(ChartRect(np.zeros(2), 0.5, Manifold.TORUS)) == pytest.approx(1.0)
        assert region_area(ChartRect(np.zeros(2), math.inf, Manifold.TORUS)) == pytest.approx(TORUS_AREA)


class TestEstimator:
    def test_zero_threshold(self, sphere_model):
        m, d = sphere_model
        X = d.X[600:700]
        for method in METHODS:
            c = m.with_method(method).calibrate(X, m.predict(X))
            assert c.q_hat_ == pytest.approx(0.0, abs=1e-12)
            assert np.allclose(c.region_areas(d.X[700:710]), 0.0, atol=1e-20)

    def test_adaptive_radius_example(self, sphere_model):
        m, d = sphere_model
        c = m.with_method("adaptive")
        c.q_hat_ = 2.0
        assert c.predict_radius(d.X[:1], sigma=np.array([0.3]))[0] == pytest.approx(0.6)
        assert c.predict_radius(d.X[:1], sigma=np.array([5.0]))[0] == pytest.approx(np.pi)
        c.q_hat_ = math.inf
        assert np.all(np.isinf(c.predict_radius(d.X[:3])))
        assert np.allclose(c.region_areas(d.X[:3]), 4 * np.pi)
        assert np.all(c.contains(d.X[:3], -c.predict(d.X[:3])))

    def test_radius_variation(self, sphere_model):
        m, d = sphere_model
        X, Y = d.X[600:900], d.Y[600:900]
        ra = m.with_method("adaptive").calibrate(X, Y).predict_radius(d.X[900:])
        rs = m.with_method("standard").calibrate(X, Y).predict_radius(d.X[900:])
        assert np.unique(ra).size > 50
        assert np.unique(rs).size == 1

    def test_with_method_shares_fit(self, sphere_model):
        m, _ = sphere_model
        other = m.with_method("naive")
        assert other.predictor_ is m.predictor_ and other.difficulty_ is m.difficulty_
        assert other.method == "naive" and m.method == "adaptive"
        assert not hasattr(other, "q_hat_")

    def test_unfitted(self):
        with pytest.raises(NotFittedError):
            GeodesicConformalRegressor().predict(np.zeros((1, 2)))

    def test_uncalibrated(self, sphere_model):
        m, d = sphere_model
        with pytest.raises(NotFittedError):
            m.with_method("standard").predict_radius(d.X[:2])

    def test_params(self):
        est = GeodesicConformalRegressor(method="naive", alpha=0.2)
        p = clone(est).get_params()
        assert p["method"] == "naive" and p["alpha"] == 0.2 and p["k_sigma"] == 20

    def test_regions_match_vectorized(self, sphere_model):
        m, d = sphere_model
        for method in METHODS:
            c = m.with_method(method).calibrate(d.X[600:900], d.Y[600:900])
            regions = c.predict_regions(d.X[900:950])
            assert np.allclose([region_area(r) for r in regions], c.region_areas(d.X[900:950]))

    def test_fit_determinism(self):
        d = generate_synthetic_dataset(SyntheticConfig(n=300, seed=2))
        a = GeodesicConformalRegressor(random_state=4).fit(d.X, d.Y).cv_residuals_
        b = GeodesicConformalRegressor(random_state=4).fit(d.X, d.Y).cv_residuals_
        assert np.array_equal(a, b)


def _duality_mismatches(model, X, Y):
    scores = model.nonconformity_scores(X, Y)
    q = model.q_hat_
    inside = model.contains(X, Y)
    regions = model.predict_regions(X)
    scalar = np.array([region_contains(r, y) for r, y in zip(regions, Y)])
    clear = np.abs(scores - q) > 1e-12 * max(1.0, q)
    expected = scores <= q
    return int(np.sum((inside != expected) & clear)), int(np.sum((scalar != expected) & clear)), expected


@pytest.mark.parametrize("method", [m.value for m in METHODS])
def test_duality_sphere(method, sphere_model):
    m, d = sphere_model
    c = m.with_method(method).calibrate(d.X[600:900], d.Y[600:900])
    rng = np.random.default_rng(33)
    X = rng.uniform(-3, 3, (10_000, 2))
    Y = sample_vmf_batch(c.predict(X), np.full(10_000, 8.0), rng)
    bad_vec, bad_scalar, expected = _duality_mismatches(c, X, Y)
    assert bad_vec == 0 and bad_scalar == 0
    assert 0.05 < expected.mean() < 0.995


@pytest.mark.parametrize("method", [m.value for m in METHODS])
def test_duality_torus(method, torus_model):
    m, X, Y = torus_model
    c = m.with_method(method).calibrate(X[600:900], Y[600:900])
    rng = np.random.default_rng(34)
    Xq = rng.uniform(-2, 2, (10_000, 2))
    Yq = wrap_angle(c.predict(Xq) + rng.normal(scale=0.4, size=(10_000, 2)))
    bad_vec, bad_scalar, expected = _duality_mismatches(c, Xq, Yq)
    assert bad_vec == 0 and bad_scalar == 0
    assert 0.05 < expected.mean() < 0.995


def test_torus_coverage_and_area(torus_model):
    m, X, Y = torus_model
    for method in METHODS:
        c = m.with_method(method).calibrate(X[600:900], Y[600:900])
        cov = c.contains(X[900:], Y[900:]).mean()
        assert 0.8 < cov <= 1.0
        assert np.all(c.region_areas(X[900:]) <= TORUS_AREA + 1e-9)
