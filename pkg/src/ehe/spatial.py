"""Exponential-covariance Gaussian process fields over station sites and
conditional (kriging) draws at new sites."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dist import jittered_cholesky

EARTH_RADIUS_KM = 6371.0
EFFECTIVE_RANGE_KM = 400.0

FIELD_ROLES = ("mean0", "mean1", "logvar0", "logvar1", "trans")


def decay_for_range(range_km: float = EFFECTIVE_RANGE_KM) -> float:
    """Decay rate giving correlation exp(-3) at the effective range."""
    return 3.0 / range_km


@dataclass(frozen=True)
class GpHyper:
    variance: float
    decay: float = decay_for_range()
    mean: float = 0.0

    def __post_init__(self):
        if not (self.variance > 0 and self.decay > 0):
            raise ValueError("GP variance and decay must be positive")


@dataclass(frozen=True)
class SpatialField:
    """One GP effect evaluated at a set of sites.

    ``sites`` is an (n, 2) array of (lon, lat) in degrees; elevation does not
    enter the distance.
    """

    sites: np.ndarray
    values: np.ndarray
    hyper: GpHyper
    role: str = "mean0"

    def __post_init__(self):
        if self.role not in FIELD_ROLES:
            raise ValueError(f"unknown field role {self.role!r}")
        if len(np.atleast_2d(self.sites)) != len(np.atleast_1d(self.values)) and len(self.values):
            raise ValueError("one field value per site is required")


def distance_km(a, b) -> np.ndarray:
    """Great-circle (haversine) distance between (lon, lat) points in degrees."""
    a = np.radians(np.asarray(a, float))
    b = np.radians(np.asarray(b, float))
    dlon = b[..., 0] - a[..., 0]
    dlat = b[..., 1] - a[..., 1]
    h = np.sin(dlat / 2) ** 2 + np.cos(a[..., 1]) * np.cos(b[..., 1]) * np.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def pairwise_km(a, b=None) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, float))[:, :2]
    b = a if b is None else np.atleast_2d(np.asarray(b, float))[:, :2]
    d = distance_km(a[:, None, :], b[None, :, :])
    if b is a:
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
    return d


def exp_cov(d, hyper: GpHyper):
    return hyper.variance * np.exp(-hyper.decay * np.asarray(d, float))


def correlation(sites, decay: float = decay_for_range()) -> np.ndarray:
    return np.exp(-decay * pairwise_km(sites))


def build_cov(sites, hyper: GpHyper) -> np.ndarray:
    """Pairwise exponential covariance matrix over ``sites`` (exactly symmetric)."""
    if len(np.atleast_2d(sites)) < 1:
        raise ValueError("at least one site is required")
    return exp_cov(pairwise_km(sites), hyper)


def krige_moments(field: SpatialField, new_sites):
    """Conditional mean and covariance of the field at ``new_sites``."""
    new = np.atleast_2d(np.asarray(new_sites, float))[:, :2]
    h = field.hyper
    k_nn = exp_cov(pairwise_km(new), h)
    if len(field.values) == 0:
        return np.full(len(new), h.mean), k_nn
    obs = np.atleast_2d(field.sites)[:, :2]
    k_oo = build_cov(obs, h)
    k_no = exp_cov(pairwise_km(new, obs), h)
    chol = jittered_cholesky(k_oo)
    a = np.linalg.solve(chol, k_no.T)
    w = np.linalg.solve(chol.T, a)
    mean = h.mean + w.T @ (np.asarray(field.values, float) - h.mean)
    cov = k_nn - a.T @ a
    return mean, 0.5 * (cov + cov.T)


def _psd_factor(cov):
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def krige(field: SpatialField, new_sites, rng) -> np.ndarray:
    """Draw the field at ``new_sites`` from its Gaussian conditional given the
    observed-site values. With no observed sites this is an unconditional draw."""
    mean, cov = krige_moments(field, new_sites)
    return mean + _psd_factor(cov) @ rng.standard_normal(len(mean))


def with_values(field: SpatialField, values) -> SpatialField:
    return replace(field, values=np.asarray(values, float))
