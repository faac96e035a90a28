"""Von Mises-Fisher sampling on S^2 and the heteroscedastic synthetic benchmark."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .dataset import Dataset, Manifold
from .geometry import SpherePoint, normalize_rows


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator settings; concentration is ``kappa_base + kappa_amp*exp(-|x|^2/kappa_scale)``."""

    n: int = 1200
    seed: int = 0
    covariate_box: float = 3.0
    kappa_base: float = 3.0
    kappa_amp: float = 147.0
    kappa_scale: float = 4.0
    lon_scale: float = 0.5
    lat_scale: float = 1.0 / 3.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kappa_base <= 0 or self.kappa_amp < 0 or self.kappa_scale <= 0:
            raise ValueError("need kappa_base > 0, kappa_amp >= 0, kappa_scale > 0")
        if self.covariate_box <= 0:
            raise ValueError("covariate_box must be positive")


def synthetic_kappa(x, base=3.0, amp=147.0, scale=4.0):
    """Concentration field: 150 at the origin, decaying to 3 far away."""
    x = np.asarray(x, dtype=float)
    return base + amp * np.exp(-np.sum(x * x, axis=-1) / scale)


def synthetic_mu(x, lon_scale=0.5, lat_scale=1.0 / 3.0):
    """Mean direction field: longitude ``lon_scale*x1``, latitude ``lat_scale*x2``.

    With the defaults the ``[-3, 3]^2`` box maps to +-86 degrees of longitude
    and +-57 degrees of latitude.
    """
    x = np.asarray(x, dtype=float)
    lon = lon_scale * x[..., 0]
    lat = lat_scale * x[..., 1]
    out = np.stack([np.cos(lon) * np.cos(lat), np.sin(lon) * np.cos(lat), np.sin(lat)], axis=-1)
    return normalize_rows(out)


def _tangent_frame(mu):
    # pick the world axis least aligned with mu, then Gram-Schmidt
    axis = np.zeros_like(mu)
    idx = np.argmin(np.abs(mu), axis=-1)
    np.put_along_axis(axis, idx[..., None], 1.0, axis=-1)
    e1 = normalize_rows(np.cross(mu, axis))
    e2 = np.cross(mu, e1)
    return e1, e2


def sample_vmf_cosines(kappa, rng, size=None):
    """Draw ``t = <mu, Y>`` for the S^2 vMF by inverting its CDF.

    ``t = 1 + log(u + (1-u) exp(-2 kappa)) / kappa``; ``kappa = 0`` gives
    ``t`` uniform on ``[-1, 1]``.
    """
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa < 0) or np.any(np.isnan(kappa)):
        raise ValueError("kappa must be nonnegative")
    shape = kappa.shape if size is None else size
    u = 1.0 - rng.random(shape)  # (0, 1], keeps the log finite
    k = np.broadcast_to(kappa, shape)
    safe = np.where(k > 0, k, 1.0)
    t = np.where(k > 0, 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * safe)) / safe, 2.0 * u - 1.0)
    return np.clip(t, -1.0, 1.0)


def sample_vmf_batch(mu, kappa, rng):
    """One vMF draw per row of ``mu`` (shape ``(n, 3)``) with per-row ``kappa``."""
    mu = normalize_rows(np.atleast_2d(mu))
    kappa = np.broadcast_to(np.asarray(kappa, dtype=float), mu.shape[:1])
    t = sample_vmf_cosines(kappa, rng)
    psi = rng.uniform(0.0, 2.0 * np.pi, size=t.shape)
    s = np.sqrt(np.maximum(1.0 - t * t, 0.0))
    e1, e2 = _tangent_frame(mu)
    out = t[:, None] * mu + (s * np.cos(psi))[:, None] * e1 + (s * np.sin(psi))[:, None] * e2
    return normalize_rows(out)


def sample_vmf(mu, kappa, rng, size=None):
    """Sample the von Mises-Fisher distribution with mean ``mu`` and concentration ``kappa``.

    Parameters
    ----------
    mu : SpherePoint or array-like of shape (3,)
    kappa : float
        Nonnegative concentration; 0 is the uniform distribution.
    rng : numpy.random.Generator
    size : int, optional
        Number of draws. If omitted a single :class:`SpherePoint` is returned.

    Returns
    -------
    SpherePoint or ndarray of shape (size, 3)
    """
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    mu = np.asarray(mu, dtype=float).reshape(3)
    m = 1 if size is None else int(size)
    draws = sample_vmf_batch(np.broadcast_to(mu, (m, 3)), np.full(m, float(kappa)), rng)
    if size is None:
        return SpherePoint(tuple(draws[0]))
    return draws


def mean_resultant_length(kappa):
    """Expected ``<mu, Y>`` on S^2: ``coth(kappa) - 1/kappa``."""
    kappa = np.asarray(kappa, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 / np.tanh(kappa) - 1.0 / kappa
    return np.where(kappa < 1e-6, kappa / 3.0, out)


def rms_axis_angle(kappa):
    """Per-axis RMS angle ``sqrt(E[theta^2] / 2)`` of a vMF draw around its mean, in radians."""
    kappa = float(kappa)
    if kappa <= 0:
        return float(np.sqrt((np.pi**2 / 2 - 2) / 2))
    # density of t = cos(theta) is kappa exp(kappa (t - 1)) / (1 - exp(-2 kappa))
    norm = -np.expm1(-2.0 * kappa)
    m2, _ = integrate.quad(lambda t: np.arccos(t) ** 2 * kappa * np.exp(kappa * (t - 1.0)) / norm, -1.0, 1.0, limit=200)
    return float(np.sqrt(m2 / 2.0))


def heteroscedasticity_ratios(cfg=None):
    """Two ways to quantify how much the noise level varies across the covariate box.

    ``kappa_ratio`` compares peak to floor concentration, ``spread_ratio``
    compares the matching per-axis RMS angles. The ``*_box`` entries use the
    lowest concentration actually reached inside the box (its corners).
    """
    cfg = SyntheticConfig() if cfg is None else cfg
    k_max = cfg.kappa_base + cfg.kappa_amp
    k_corner = float(synthetic_kappa([cfg.covariate_box] * 2, cfg.kappa_base, cfg.kappa_amp, cfg.kappa_scale))
    peak = rms_axis_angle(k_max)
    return {
        "kappa_ratio": k_max / cfg.kappa_base,
        "spread_ratio": rms_axis_angle(cfg.kappa_base) / peak,
        "kappa_ratio_box": k_max / k_corner,
        "spread_ratio_box": rms_axis_angle(k_corner) / peak,
    }


def generate_synthetic_dataset(cfg=None, rng=None):
    """Draw ``cfg.n`` covariates uniformly on the box and vMF responses around ``synthetic_mu``.

    ``rng`` overrides ``cfg.seed`` when given.
    """
    cfg = SyntheticConfig() if cfg is None else cfg
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    b = cfg.covariate_box
    X = rng.uniform(-b, b, size=(cfg.n, 2))
    kappa = synthetic_kappa(X, cfg.kappa_base, cfg.kappa_amp, cfg.kappa_scale)
    Y = sample_vmf_batch(synthetic_mu(X, cfg.lon_scale, cfg.lat_scale), kappa, rng)
    return Dataset(X, Y, Manifold.SPHERE)
