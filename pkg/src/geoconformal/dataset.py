"""Covariate/response containers for manifold-valued regression."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import normalize_rows, wrap_angle


class Manifold(str, Enum):
    SPHERE = "sphere"
    TORUS = "torus"

    @property
    def response_dim(self):
        return 3 if self is Manifold.SPHERE else 2


def as_manifold(value):
    if isinstance(value, Manifold):
        return value
    try:
        return Manifold(str(value).lower())
    except ValueError:
        raise ValueError(f"unknown manifold {value!r}; expected 'sphere' or 'torus'") from None


def check_responses(Y, manifold):
    """Validate and canonicalize a response array for ``manifold``.

    Sphere responses are renormalized to unit length; torus responses are
    wrapped into ``[-pi, pi)``.
    """
    manifold = as_manifold(manifold)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[None, :]
    if Y.ndim != 2 or Y.shape[1] != manifold.response_dim:
        raise ValueError(
            f"{manifold.value} responses must have shape (n, {manifold.response_dim}), got {Y.shape}"
        )
    if not np.all(np.isfinite(Y)):
        raise ValueError("responses contain non-finite values")
    if manifold is Manifold.SPHERE:
        return normalize_rows(Y)
    return wrap_angle(Y)


@dataclass(frozen=True)
class Dataset:
    """Covariates ``X`` of shape ``(n, d)`` paired with manifold responses ``Y``.

    Arrays are copied and made read-only at construction.
    """

    X: np.ndarray
    Y: np.ndarray
    manifold: Manifold = Manifold.SPHERE

    def __post_init__(self):
        manifold = as_manifold(self.manifold)
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError(f"covariates must be 2-D, got shape {X.shape}")
        Y = check_responses(self.Y, manifold).copy()
        if X.shape[0] != Y.shape[0] or X.shape[0] < 1:
            raise ValueError(
                f"need equal, nonzero row counts; got {X.shape[0]} covariates and {Y.shape[0]} responses"
            )
        X.flags.writeable = False
        Y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "manifold", manifold)

    @property
    def size(self):
        return self.X.shape[0]

    def __len__(self):
        return self.size

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.Y[idx], self.manifold)
