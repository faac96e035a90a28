"""Manifold primitives for the unit sphere S^2 and the flat torus T^2.

Points are handled two ways. The frozen value types (:class:`SpherePoint`,
:class:`TorusPoint`, :class:`ChartPoint`) validate single values. The
array functions take ``(..., 3)`` unit vectors or ``(..., 2)`` angle pairs
and broadcast, which is what the estimators use internally.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi
SPHERE_AREA = 4.0 * np.pi
TORUS_AREA = TWO_PI**2
TORUS_DIAMETER = np.pi * np.sqrt(2.0)

__all__ = [
    "SpherePoint",
    "TorusPoint",
    "ChartPoint",
    "wrap_angle",
    "circular_distance",
    "sphere_geodesic_distance",
    "torus_geodesic_distance",
    "cap_area",
    "torus_disk_area",
    "torus_ball_area",
    "naive_rect_area",
    "chart_convert",
    "chart_convert_inverse",
    "sphere_to_chart",
    "chart_to_sphere",
    "normalize_rows",
    "random_sphere_point",
    "random_sphere_points",
]


def wrap_angle(a):
    """Wrap angles into ``[-pi, pi)``."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, TWO_PI) - np.pi
    # mod can round up to exactly pi for inputs just below -pi
    return np.where(w >= np.pi, w - TWO_PI, w)


def circular_distance(a, b):
    """Shortest arc between angles, ``min(|a-b|, 2pi-|a-b|)`` in ``[0, pi]``."""
    d = np.mod(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)), TWO_PI)
    return np.minimum(d, TWO_PI - d)


@dataclass(frozen=True)
class SpherePoint:
    """Unit vector in R^3. Normalized at construction."""

    v: tuple

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float).reshape(-1)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise ValueError(f"SpherePoint needs a finite 3-vector, got {self.v!r}")
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise ValueError("cannot build a SpherePoint from the zero vector")
        object.__setattr__(self, "v", tuple(float(c) for c in v / norm))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.v, dtype=dtype)


@dataclass(frozen=True)
class TorusPoint:
    """Pair of angles, each wrapped into ``[-pi, pi)``."""

    a1: float
    a2: float

    def __post_init__(self):
        if not (np.isfinite(self.a1) and np.isfinite(self.a2)):
            raise ValueError("TorusPoint angles must be finite")
        object.__setattr__(self, "a1", float(wrap_angle(self.a1)))
        object.__setattr__(self, "a2", float(wrap_angle(self.a2)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray((self.a1, self.a2), dtype=dtype)


@dataclass(frozen=True)
class ChartPoint:
    """Spherical coordinates: colatitude ``theta`` and azimuth ``phi``."""

    theta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        object.__setattr__(self, "phi", float(wrap_angle(self.phi)))


def normalize_rows(v, tol=1e-12):
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm <= tol):
        raise ValueError("cannot normalize a zero vector onto the sphere")
    return v / norm


def sphere_geodesic_distance(u, v):
    """Great-circle distance in ``[0, pi]``.

    Uses ``atan2(|u x v|, <u, v>)``, which equals ``arccos(<u, v>)`` for unit
    vectors but stays accurate for nearly equal or antipodal points.
    Inputs broadcast over leading axes.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    dot = np.sum(u * v, axis=-1)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    return np.arctan2(cross, dot)


def torus_geodesic_distance(a, b):
    """Flat-torus distance from per-coordinate circular distances."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = circular_distance(a, b)
    return np.sqrt(np.sum(d * d, axis=-1))


def cap_area(r):
    """Area in steradians of a spherical cap of geodesic radius ``r``."""
    r = np.asarray(r, dtype=float)
    if np.any((r < 0.0) | (r > np.pi)) or np.any(np.isnan(r)):
        raise ValueError("cap radius must lie in [0, pi]")
    out = TWO_PI * (1.0 - np.cos(r))
    return float(out) if out.ndim == 0 else out


def torus_disk_area(r):
    """Area ``pi r^2`` of a geodesic disk on the flat torus, valid for ``r <= pi``.

    Past ``pi`` the disk wraps onto itself; use :func:`torus_ball_area`.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0.0) or np.any(np.isnan(r)):
        raise ValueError("disk radius must be nonnegative")
    if np.any(r > np.pi):
        raise ValueError("torus disk radius above pi self-overlaps; use torus_ball_area")
    out = np.pi * r * r
    return float(out) if out.ndim == 0 else out


def torus_ball_area(r):
    """Area of a torus geodesic ball for any ``r >= 0``, saturating at ``4 pi^2``.

    For ``pi < r < pi*sqrt(2)`` the ball is the disk clipped by the four sides
    of the fundamental square; the four removed circular segments are disjoint.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0.0) or np.any(np.isnan(r)):
        raise ValueError("ball radius must be nonnegative")
    rc = np.clip(r, np.pi, TORUS_DIAMETER)
    segment = rc * rc * np.arccos(np.pi / rc) - np.pi * np.sqrt(rc * rc - np.pi**2)
    wrapped = np.pi * rc * rc - 4.0 * segment
    out = np.where(r <= np.pi, np.pi * r * r, np.where(r >= TORUS_DIAMETER, TORUS_AREA, wrapped))
    return float(out) if out.ndim == 0 else out


def naive_rect_area(delta, theta):
    """Spherical area of the chart rectangle ``|theta'-theta|<=delta, |phi'-phi|<=delta``.

    Colatitude is clipped to ``[0, pi]`` and the azimuth width saturates at
    ``2 pi``, so the area never exceeds the sphere.
    """
    delta = np.asarray(delta, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(delta < 0.0):
        raise ValueError("half-width must be nonnegative")
    if np.any((theta < 0.0) | (theta > np.pi)):
        raise ValueError("theta must lie in [0, pi]")
    lo = np.maximum(theta - delta, 0.0)
    hi = np.minimum(theta + delta, np.pi)
    out = np.minimum(2.0 * delta, TWO_PI) * np.abs(np.cos(lo) - np.cos(hi))
    return float(out) if out.ndim == 0 else out


def sphere_to_chart(v, pole_tol=1e-12):
    """Unit vectors ``(..., 3)`` to ``(..., 2)`` arrays of (theta, phi).

    At the poles phi is set to 0.
    """
    v = np.asarray(v, dtype=float)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    rho = np.hypot(x, y)
    theta = np.arctan2(rho, z)
    phi = np.where(rho <= pole_tol, 0.0, wrap_angle(np.arctan2(y, x)))
    return np.stack([theta, phi], axis=-1)


def chart_to_sphere(c):
    c = np.asarray(c, dtype=float)
    theta, phi = c[..., 0], c[..., 1]
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def chart_convert(p):
    """:class:`SpherePoint` to :class:`ChartPoint`."""
    theta, phi = sphere_to_chart(np.asarray(p))
    return ChartPoint(float(np.clip(theta, 0.0, np.pi)), float(phi))


def chart_convert_inverse(c):
    """:class:`ChartPoint` to :class:`SpherePoint`."""
    return SpherePoint(tuple(chart_to_sphere([c.theta, c.phi])))


def random_sphere_points(rng, n):
    """``n`` points uniform on S^2 from normalized Gaussian draws, shape ``(n, 3)``."""
    out = rng.standard_normal((n, 3))
    norm = np.linalg.norm(out, axis=1)
    bad = norm < 1e-12
    while np.any(bad):
        out[bad] = rng.standard_normal((int(bad.sum()), 3))
        norm = np.linalg.norm(out, axis=1)
        bad = norm < 1e-12
    return out / norm[:, None]


def random_sphere_point(rng):
    return SpherePoint(tuple(random_sphere_points(rng, 1)[0]))
