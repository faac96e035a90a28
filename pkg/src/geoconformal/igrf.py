"""IGRF main-field synthesis and the geomagnetic direction forecasting dataset.

The coefficient file is the standard IGRF text distribution (a copy of the
IGRF-14 table ships in ``geoconformal/data``). Locations use geocentric
latitude throughout; no geodetic conversion is applied.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .dataset import Dataset, Manifold
from .geometry import SpherePoint, normalize_rows, random_sphere_points, sphere_geodesic_distance

REFERENCE_RADIUS_KM = 6371.2
EXTRAPOLATION_YEARS = 5.0
BUNDLED_FILE = "igrf14coeffs.txt"


class IGRFFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CoefficientTable:
    """Gauss coefficients in nT, indexed ``[epoch, n, m]``; SV rates in nT/yr indexed ``[n, m]``."""

    epochs: np.ndarray
    g: np.ndarray
    h: np.ndarray
    sv_g: np.ndarray
    sv_h: np.ndarray
    max_degree: int
    reference_radius: float = REFERENCE_RADIUS_KM

    @property
    def t_min(self):
        return float(self.epochs[0])

    @property
    def t_max(self):
        return float(self.epochs[-1]) + EXTRAPOLATION_YEARS


@dataclass(frozen=True)
class GeoLocation:
    latitude: float
    longitude: float
    radius: float = REFERENCE_RADIUS_KM

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude < 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180)")
        if not self.radius > 0:
            raise ValueError("radius must be positive")


def parse_igrf_coefficients(text):
    """Parse an IGRF coefficient table.

    Expected layout: ``#`` comment lines, a header row starting ``g/h n m``
    followed by the epoch years and a final secular-variation label, then
    rows ``g|h n m v_1 ... v_E sv``. Coefficients absent from the file are 0.
    """
    epochs = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        if tok[0] == "c/s":
            continue
        if tok[0] == "g/h":
            try:
                epochs = np.array([float(x) for x in tok[3:-1]])
            except ValueError as exc:
                raise IGRFFormatError(f"line {lineno}: bad epoch header: {exc}") from None
            if epochs.size == 0:
                raise IGRFFormatError(f"line {lineno}: header lists no epochs")
            if np.any(np.diff(epochs) <= 0):
                raise IGRFFormatError(f"line {lineno}: epochs are not strictly increasing")
            continue
        if tok[0] not in ("g", "h"):
            raise IGRFFormatError(f"line {lineno}: expected a g/h row, got {tok[0]!r}")
        if epochs is None:
            raise IGRFFormatError(f"line {lineno}: coefficient row before the epoch header")
        try:
            n, m = int(tok[1]), int(tok[2])
            values = [float(x) for x in tok[3:]]
        except (ValueError, IndexError) as exc:
            raise IGRFFormatError(f"line {lineno}: malformed row: {exc}") from None
        if len(values) != epochs.size + 1:
            raise IGRFFormatError(
                f"line {lineno}: expected {epochs.size} epoch values plus SV, got {len(values)} values"
            )
        if n < 1 or m < 0 or m > n:
            raise IGRFFormatError(f"line {lineno}: invalid degree/order n={n}, m={m}")
        if tok[0] == "h" and m == 0 and any(v != 0.0 for v in values):
            raise IGRFFormatError(f"line {lineno}: h with m=0 must be zero")
        rows.append((tok[0], n, m, values))
    if epochs is None:
        raise IGRFFormatError("no epoch header found")
    if not rows:
        raise IGRFFormatError("no coefficient rows found")

    nmax = max(n for _, n, _, _ in rows)
    E = epochs.size
    g = np.zeros((E, nmax + 1, nmax + 1))
    h = np.zeros_like(g)
    sv_g = np.zeros((nmax + 1, nmax + 1))
    sv_h = np.zeros_like(sv_g)
    for kind, n, m, values in rows:
        coef, sv = (g, sv_g) if kind == "g" else (h, sv_h)
        coef[:, n, m] = values[:-1]
        sv[n, m] = values[-1]
    for arr in (g, h, sv_g, sv_h):
        arr.flags.writeable = False
    epochs.flags.writeable = False
    return CoefficientTable(epochs, g, h, sv_g, sv_h, nmax)


def load_igrf14():
    """The bundled IGRF-14 table."""
    text = resources.files("geoconformal").joinpath("data", BUNDLED_FILE).read_text()
    return parse_igrf_coefficients(text)


def load_coefficients(path=None):
    if path is None:
        return load_igrf14()
    with open(path) as fh:
        return parse_igrf_coefficients(fh.read())


def coefficients_at(table, t):
    """Gauss coefficients ``(g, h)`` at decimal year ``t``.

    Piecewise-linear between tabulated epochs; past the final epoch the SV
    rates extrapolate linearly for up to five years.
    """
    t = float(t)
    ep = table.epochs
    if not ep[0] <= t <= table.t_max:
        raise ValueError(f"t={t} outside [{ep[0]}, {table.t_max}]")
    if t >= ep[-1]:
        dt = t - ep[-1]
        return table.g[-1] + dt * table.sv_g, table.h[-1] + dt * table.sv_h
    i = int(np.searchsorted(ep, t, side="right")) - 1
    w = (t - ep[i]) / (ep[i + 1] - ep[i])
    return (1 - w) * table.g[i] + w * table.g[i + 1], (1 - w) * table.h[i] + w * table.h[i + 1]


def schmidt_legendre(n_max, theta, with_ratio=False):
    """Schmidt semi-normalized associated Legendre functions of ``cos(theta)``.

    Returns arrays ``P[n, m, ...]`` and ``dP[n, m, ...] = dP/dtheta`` for
    ``0 <= m <= n <= n_max``. With ``with_ratio`` a third array
    ``P[n, m] / sin(theta)`` (for ``m >= 1``) is returned, computed by the
    same recursion seeded one power of ``sin`` lower so it is finite at the
    poles.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    shape = (n_max + 1, n_max + 1) + theta.shape
    P = np.zeros(shape)
    dP = np.zeros(shape)
    Q = np.zeros(shape)
    P[0, 0] = 1.0
    for m in range(0, n_max + 1):
        if m == 1:
            P[1, 1] = s
            dP[1, 1] = c
            Q[1, 1] = 1.0
        elif m >= 2:
            f = np.sqrt((2 * m - 1) / (2 * m))
            P[m, m] = f * s * P[m - 1, m - 1]
            dP[m, m] = f * (c * P[m - 1, m - 1] + s * dP[m - 1, m - 1])
            Q[m, m] = f * s * Q[m - 1, m - 1]
        for n in range(m + 1, n_max + 1):
            a = (2 * n - 1) / np.sqrt(n * n - m * m)
            b = np.sqrt(((n - 1) ** 2 - m * m) / (n * n - m * m))
            P[n, m] = a * c * P[n - 1, m]
            dP[n, m] = a * (c * dP[n - 1, m] - s * P[n - 1, m])
            Q[n, m] = a * c * Q[n - 1, m]
            if n - 2 >= m:
                P[n, m] -= b * P[n - 2, m]
                dP[n, m] -= b * dP[n - 2, m]
                Q[n, m] -= b * Q[n - 2, m]
    if with_ratio:
        return P, dP, Q
    return P, dP


def field_from_coefficients(g, h, latitude, longitude, radius=REFERENCE_RADIUS_KM, a=REFERENCE_RADIUS_KM):
    """Internal field in local north/east/down components (nT), shape ``(..., 3)``.

    ``latitude``/``longitude`` are geocentric degrees and broadcast together.
    """
    lat, lon, r = np.broadcast_arrays(
        np.asarray(latitude, dtype=float), np.asarray(longitude, dtype=float), np.asarray(radius, dtype=float)
    )
    nmax = g.shape[0] - 1
    theta = np.radians(90.0 - lat)
    phi = np.radians(lon)
    P, dP, Q = schmidt_legendre(nmax, theta, with_ratio=True)
    m = np.arange(nmax + 1).reshape((1, -1) + (1,) * lat.ndim)
    cos_mp = np.cos(m * phi)
    sin_mp = np.sin(m * phi)
    gg = g.reshape(g.shape + (1,) * lat.ndim)
    hh = h.reshape(h.shape + (1,) * lat.ndim)
    n = np.arange(nmax + 1).reshape((-1, 1) + (1,) * lat.ndim)
    ratio = (a / r) ** (n + 2)

    term = gg * cos_mp + hh * sin_mp
    b_r = np.sum(ratio * (n + 1) * term * P, axis=(0, 1))
    b_theta = -np.sum(ratio * term * dP, axis=(0, 1))
    b_phi = np.sum(ratio * m * (gg * sin_mp - hh * cos_mp) * Q, axis=(0, 1))
    return np.stack([-b_theta, b_phi, -b_r], axis=-1)


def field_ned(table, latitude, longitude, t, radius=REFERENCE_RADIUS_KM):
    g, h = coefficients_at(table, t)
    return field_from_coefficients(g, h, latitude, longitude, radius, table.reference_radius)


def field_direction(table, latitude, longitude, t, radius=REFERENCE_RADIUS_KM):
    """Unit field direction in the local north/east/down frame."""
    B = field_ned(table, latitude, longitude, t, radius)
    if np.any(np.linalg.norm(B, axis=-1) < 1.0):
        raise ValueError("field magnitude below 1 nT; direction undefined")
    return normalize_rows(B)


def evaluate_field(table, loc, t):
    """Field at one :class:`GeoLocation`: ``(B_ned, unit_direction)``."""
    B = field_ned(table, loc.latitude, loc.longitude, t, loc.radius)
    if np.linalg.norm(B) < 1.0:
        raise ValueError("field magnitude below 1 nT; direction undefined")
    return B, SpherePoint(tuple(B))


def secular_variation_rate(table, latitude, longitude, t, dt=1.0, radius=REFERENCE_RADIUS_KM):
    """Angular drift of the field direction, degrees per year."""
    u = field_direction(table, latitude, longitude, t, radius)
    v = field_direction(table, latitude, longitude, t + dt, radius)
    return np.degrees(sphere_geodesic_distance(u, v)) / dt


def random_sites(rng, n):
    """``n`` surface sites uniform on the sphere as (latitude, longitude) degrees."""
    p = random_sphere_points(rng, n)
    lat = np.degrees(np.arcsin(np.clip(p[:, 2], -1.0, 1.0)))
    lon = np.degrees(np.arctan2(p[:, 1], p[:, 0]))
    lon = np.where(lon >= 180.0, lon - 360.0, lon)
    return lat, lon


def read_sites_file(path):
    """Read ``latitude longitude`` pairs (decimal degrees), ignoring ``#`` comments."""
    lats, lons = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'latitude longitude'")
            loc = GeoLocation(float(parts[0]), float(parts[1]))
            lats.append(loc.latitude)
            lons.append(loc.longitude)
    return np.array(lats), np.array(lons)


def default_epochs():
    """38 semi-annual epochs, 2005.0 through 2023.5."""
    return 2005.0 + 0.5 * np.arange(38)


def build_geomag_dataset(
    table,
    n_sites=352,
    epochs=None,
    horizon=1.0,
    n_pairs=3000,
    seed=0,
    sites=None,
):
    """Forecast pairs ``(lat, lon, B_hat(t), t) -> B_hat(t + horizon)``.

    Sites from ``sites`` (a ``(lat, lon)`` pair of arrays) come first and the
    remainder up to ``n_sites`` are drawn uniformly on the sphere. A pair is
    a candidate when ``t + horizon`` does not pass the last epoch; ``n_pairs``
    candidates are then drawn without replacement.
    """
    rng = np.random.default_rng(seed)
    epochs = default_epochs() if epochs is None else np.asarray(epochs, dtype=float)
    if sites is not None:
        lat0, lon0 = (np.asarray(a, dtype=float) for a in sites)
    else:
        lat0 = lon0 = np.empty(0)
    n_random = max(n_sites - lat0.size, 0)
    lat1, lon1 = random_sites(rng, n_random)
    lat = np.concatenate([lat0, lat1])
    lon = np.concatenate([lon0, lon1])

    valid = epochs[epochs + horizon <= epochs[-1] + 1e-9]
    n_cand = lat.size * valid.size
    if n_cand < n_pairs:
        raise ValueError(f"only {n_cand} candidate pairs, fewer than n_pairs={n_pairs}")

    now = np.stack([field_direction(table, lat, lon, t) for t in valid], axis=1)
    later = np.stack([field_direction(table, lat, lon, t + horizon) for t in valid], axis=1)
    S, T = np.meshgrid(np.arange(lat.size), np.arange(valid.size), indexing="ij")
    X = np.column_stack([lat[S].ravel(), lon[S].ravel(), now.reshape(-1, 3), valid[T].ravel()])
    Y = later.reshape(-1, 3)
    pick = np.sort(rng.choice(n_cand, size=n_pairs, replace=False))
    return Dataset(X[pick], Y[pick], Manifold.SPHERE)
