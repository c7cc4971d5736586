import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehe.spatial import (EARTH_RADIUS_KM, GpHyper, SpatialField, build_cov, decay_for_range,
                         distance_km, exp_cov, krige, krige_moments, pairwise_km)

DEG_KM = EARTH_RADIUS_KM * math.pi / 180  # length of one degree along a great circle


def test_distance_examples():
    assert distance_km([3.0, 40.0], [3.0, 40.0]) == 0.0
    assert abs(distance_km([0.0, 0.0], [0.0, 1.0]) - 111.19) < 0.05
    # spherical law of cosines as an independent oracle
    a, b = np.radians([-3.70, 40.42]), np.radians([2.17, 41.39])
    c = math.acos(math.sin(a[1]) * math.sin(b[1])
                  + math.cos(a[1]) * math.cos(b[1]) * math.cos(b[0] - a[0]))
    assert abs(distance_km([-3.70, 40.42], [2.17, 41.39]) - EARTH_RADIUS_KM * c) < 1e-6


def test_distance_symmetry():
    rng = np.random.default_rng(0)
    p = np.column_stack([rng.uniform(-180, 180, 100), rng.uniform(-90, 90, 100)])
    q = np.column_stack([rng.uniform(-180, 180, 100), rng.uniform(-90, 90, 100)])
    assert np.array_equal(distance_km(p, q), distance_km(q, p))


def test_exp_cov_range_convention():
    h = GpHyper(1.0, decay_for_range(400.0))
    assert exp_cov(0.0, GpHyper(2.5)) == 2.5
    assert abs(exp_cov(400.0, h) - math.exp(-3)) < 1e-12
    assert np.all(np.diff(exp_cov(np.linspace(0, 2000, 50), h)) < 0)
    with pytest.raises(ValueError):
        GpHyper(0.0)


def test_build_cov_examples():
    assert build_cov([[1.0, 1.0]], GpHyper(3.0)).tolist() == [[3.0]]
    step = 400.0 / DEG_KM  # degrees of latitude spanning 400 km along a meridian
    sites = [[0.0, 0.0], [0.0, step], [0.0, 2 * step]]
    c = build_cov(sites, GpHyper(1.0))
    assert abs(c[0, 1] - math.exp(-3)) < 1e-12 and abs(c[0, 2] - math.exp(-6)) < 1e-12
    assert np.array_equal(c, c.T)


def test_build_cov_positive_definite_random_configs():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = rng.integers(1, 15)
        sites = np.column_stack([rng.uniform(-10, 5, n), rng.uniform(35, 45, n)])
        c = build_cov(sites, GpHyper(rng.uniform(0.1, 3)))
        assert np.all(np.linalg.eigvalsh(c) > 0)


def field3():
    sites = np.array([[-4.0, 40.0], [-3.0, 40.5], [-3.5, 41.5]])
    return SpatialField(sites, np.array([0.7, -0.2, 1.1]), GpHyper(0.8, decay_for_range(), 0.3))


def test_krige_coincident_site_reproduces_value():
    f = field3()
    x = krige(f, f.sites[1], np.random.default_rng(2))
    assert abs(x[0] - f.values[1]) < 1e-6


def test_krige_far_site_reverts_to_prior():
    f = field3()
    mean, cov = krige_moments(f, [[150.0, -40.0]])
    assert abs(mean[0] - 0.3) < 1e-6 and abs(cov[0, 0] - 0.8) < 1e-6


def test_krige_matches_dense_formula():
    f = field3()
    new = np.array([[-3.6, 40.6]])
    all_sites = np.vstack([f.sites, new])
    K = exp_cov(pairwise_km(all_sites), f.hyper)
    S11, S21, S22 = K[:3, :3], K[3:, :3], K[3:, 3:]
    want_mean = 0.3 + S21 @ np.linalg.inv(S11) @ (f.values - 0.3)
    want_var = S22 - S21 @ np.linalg.inv(S11) @ S21.T
    mean, cov = krige_moments(f, new)
    np.testing.assert_allclose(mean, want_mean, atol=1e-10)
    np.testing.assert_allclose(cov, want_var, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(-8, 2), st.floats(36, 44), st.floats(0.05, 5.0))
def test_kriging_variance_bounded_by_prior(lon, lat, tau2):
    f = field3()
    f = SpatialField(f.sites, f.values, GpHyper(tau2))
    _, cov = krige_moments(f, [[lon, lat]])
    assert -1e-12 <= cov[0, 0] <= tau2 + 1e-12


def test_krige_without_observed_sites_is_prior():
    f = SpatialField(np.empty((0, 2)), np.empty(0), GpHyper(2.0, mean=1.0))
    rng = np.random.default_rng(3)
    x = np.array([krige(f, [[0.0, 0.0]], rng)[0] for _ in range(20_000)])
    assert abs(x.mean() - 1.0) < 4 * math.sqrt(2.0 / 20_000)
    assert abs(x.var() - 2.0) < 0.08


def test_field_validation():
    with pytest.raises(ValueError):
        SpatialField(np.zeros((2, 2)), np.zeros(3), GpHyper(1.0))
    with pytest.raises(ValueError):
        SpatialField(np.zeros((1, 2)), np.zeros(1), GpHyper(1.0), role="other")
