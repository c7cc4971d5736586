import datetime as dt
import math

import numpy as np
import pytest
from scipy import stats

from ehe.core import Station, StationSeries
from ehe.diagnostics import diagnostics, effective_sample_size, split_rhat
from ehe.mcmc import (AdaptiveMetropolis, GibbsSampler, SamplerConfig, elliptical_slice, fit,
                      n_retained, update_gp_field, update_omega, update_probit_block)
from ehe.model import (SINGLE_STATE, TWO_STATE, CovariateScaling, ModelConfig, ModelData,
                       zero_state)
from ehe.spatial import FIELD_ROLES, GpHyper, SpatialField


def make_data(Y, q, start=dt.date(1953, 6, 1)):
    sts = [Station(f"S{i}", "", -3.0 + i, 40.0 + 0.5 * i, 100.0 * i) for i in range(len(Y))]
    ser = [StationSeries(s, start, np.asarray(y, float)) for s, y in zip(sts, Y)]
    return ModelData.from_series(ser, {s.id: q for s in sts}, CovariateScaling(lat_offset=40.0))


def test_n_retained_examples():
    assert n_retained(1000, 0.5, 1) == 500
    assert n_retained(1000, 0.5, 3) == 166
    assert n_retained(10, 0.0, 1) == 10
    assert n_retained(0, 0.5, 1) == 0


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(iterations=-1)
    with pytest.raises(ValueError):
        SamplerConfig(burn_in=1.0)
    with pytest.raises(ValueError):
        SamplerConfig(thin=0)
    c = SamplerConfig(iterations=7, thin=2)
    assert SamplerConfig.from_dict(c.to_dict()) == c


def test_ess_conjugate_gaussian():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(3, 3))
    prior = A @ A.T + np.eye(3)
    chol = np.linalg.cholesky(prior)
    noise = 0.7
    y = np.array([1.0, -0.5, 2.0])

    def ll(x):
        return -0.5 * np.sum((y - x) ** 2) / noise ** 2

    post_cov = np.linalg.inv(np.linalg.inv(prior) + np.eye(3) / noise ** 2)
    post_mean = post_cov @ y / noise ** 2
    x = np.zeros(3)
    cur = ll(x)
    out = np.empty((30_000, 3))
    for i in range(len(out)):
        x, cur, _ = elliptical_slice(x, ll, chol, rng, cur_ll=cur)
        out[i] = x
    out = out[1000:]
    assert np.max(np.abs(out.mean(0) - post_mean)) < 0.03
    assert np.linalg.norm(np.cov(out.T) - post_cov) / np.linalg.norm(post_cov) < 0.05


def test_ess_flat_likelihood_returns_prior_with_mean():
    rng = np.random.default_rng(1)
    chol = np.linalg.cholesky(np.array([[2.0, 0.5], [0.5, 1.0]]))
    mean = np.array([3.0, -1.0])
    x, out = mean.copy(), []
    for _ in range(20_000):
        x, _, n = elliptical_slice(x, lambda v: 0.0, chol, rng, mean=mean)
        assert n == 1
        out.append(x)
    out = np.array(out)
    np.testing.assert_allclose(out.mean(0), mean, atol=0.05)
    np.testing.assert_allclose(np.cov(out.T), chol @ chol.T, atol=0.08)


def test_update_gp_field_keeps_hyper_and_sites():
    rng = np.random.default_rng(2)
    sites = np.array([[0.0, 40.0], [1.0, 40.0], [0.0, 41.0]])
    gp = SpatialField(sites, np.zeros(3), GpHyper(1.0, 3.0 / 400.0), FIELD_ROLES[0])
    new = update_gp_field(gp, lambda v: -0.5 * np.sum((v - 1) ** 2), rng)
    assert new.hyper == gp.hyper and np.array_equal(new.sites, gp.sites)
    assert not np.array_equal(new.values, gp.values)


def test_adaptive_metropolis_targets_gaussian():
    rng = np.random.default_rng(3)
    cov = np.array([[1.0, 0.8], [0.8, 1.0]])
    prec = np.linalg.inv(cov)

    def lp(x):
        return -0.5 * x @ prec @ x

    b = AdaptiveMetropolis(2, 0.25)
    x, cur, out = np.zeros(2), 0.0, []
    for i in range(40_000):
        adapting = i < 10_000
        x, cur = b.step(x, lp, cur, rng, adapting)
        if adapting and (i + 1) % 1000 == 0:
            b.refresh_from_history()
        if not adapting:
            out.append(x)
    out = np.array(out)
    np.testing.assert_allclose(out.mean(0), 0.0, atol=0.08)
    np.testing.assert_allclose(np.cov(out.T), cov, atol=0.1)
    assert 0.15 < b.rate() < 0.35
    assert b.counts["burn"][1] == 10_000


def test_fit_zero_iterations_returns_initial_state(small_data):
    small_data = small_data[0]
    init = GibbsSampler(small_data).state
    ch = fit(small_data, sconfig=SamplerConfig(iterations=0))
    assert len(ch) == 1
    np.testing.assert_array_equal(ch.draws["beta"][0], init.beta)


def test_fit_counts_and_determinism(small_data):
    small_data = small_data[0]
    sc = SamplerConfig(iterations=12, burn_in=0.5, thin=2, seed=9)
    a = fit(small_data, sconfig=sc)
    b = fit(small_data, sconfig=sc)
    assert len(a) == n_retained(12, 0.5, 2) == 3
    for k in a.draws:
        np.testing.assert_array_equal(a.draws[k], b.draws[k])
    c = fit(small_data, sconfig=SamplerConfig(iterations=12, burn_in=0.5, thin=2, seed=10))
    assert not np.array_equal(a.draws["beta"], c.draws["beta"])


def test_fit_rejects_bad_input(small_data):
    small_data = small_data[0]
    with pytest.raises(ValueError):
        fit(small_data, kind="three_state", sconfig=SamplerConfig(iterations=1))
    with pytest.raises(ValueError):
        fit(small_data.subset(small_data.site_ids[:1]), sconfig=SamplerConfig(iterations=1))


def test_chain_invariants(short_chain, short_baseline_chain):
    d = short_chain.draws
    assert np.all(d["gamma"][:, :, 0] == 0)
    assert np.all(np.abs(d["rho"]) < 1)
    assert np.all(d["omega"] > 0)
    for name in ("tau2_mean", "tau2_logvar"):
        assert np.all(d[name] > 0)
    assert np.all(d["tau2_trans"] > 0)
    assert short_baseline_chain.kind == SINGLE_STATE
    assert "phi" not in short_baseline_chain.draws
    assert np.all(np.isfinite(short_baseline_chain.draws["beta"]))


def test_probit_latents_match_indicator_signs(small_data):
    small_data = small_data[0]
    g = GibbsSampler(small_data)
    rng = np.random.default_rng(4)
    for _ in range(3):
        g.probit_step(rng)
        z = g.last_z
        assert np.all((z >= 0) == (g.tr.u == 1))
    new = update_probit_block(g.state, small_data, rng)
    assert new.phi.shape == (5,)


def test_omega_prior_recovered_without_state1_data():
    rng = np.random.default_rng(5)
    Y = 20 + 2 * rng.standard_normal((2, 200))
    md = make_data(Y, q=1e6)
    p = zero_state(2, md.n_years)
    p.beta[:, 0] = 20.0
    g = GibbsSampler(md, init=p)
    assert g.em[1].n == 0
    out = np.empty(60_000)
    for i in range(len(out)):
        g.omega_step(rng)
        out[i] = g.state.omega
    a = 1.5
    for qq in (0.25, 0.5, 0.75):
        want = stats.invgamma(a, scale=a).ppf(qq)
        assert abs(np.quantile(out, qq) / want - 1) < 0.05


def test_omega_conjugate_with_vacuous_truncation():
    rng = np.random.default_rng(6)
    sigma2, omega_true = 1.5, 2.0
    Y = 30 + math.sqrt(sigma2 * omega_true) * rng.standard_normal((2, 150))
    md = make_data(Y, q=-1e6)
    p = zero_state(2, md.n_years)
    p.beta[:, 0] = 30.0
    p.logvar_field[1] = math.log(sigma2)
    g = GibbsSampler(md, init=p)
    e = md.tr_y - 30.0
    a_post = 1.5 + 0.5 * len(e)
    b_post = 1.5 + 0.5 * np.sum(e ** 2) / sigma2
    out = []
    for i in range(20_000):
        g.omega_step(rng)
        if i >= 1000:
            out.append(g.state.omega)
    assert abs(np.mean(out) / (b_post / (a_post - 1)) - 1) < 0.02
    new = update_omega(p, md, rng)
    assert new.omega > 0


def test_diagnostics_degenerate_and_iid():
    draws = {"x": np.full(100, 3.0), "y": np.random.default_rng(7).standard_normal(4000)}
    dg = diagnostics(draws)
    assert dg["x"].sd == 0.0 and not dg["x"].rhat_defined and math.isnan(dg["x"].rhat)
    assert dg["y"].rhat_defined and abs(dg["y"].rhat - 1) < 0.01
    assert 3000 < dg["y"].ess < 5000
    with pytest.raises(ValueError):
        diagnostics({"x": np.empty(0)})


def test_ess_reflects_autocorrelation():
    rng = np.random.default_rng(8)
    n, a = 20_000, 0.9
    x = np.empty(n)
    x[0] = 0
    e = rng.standard_normal(n)
    for i in range(1, n):
        x[i] = a * x[i - 1] + e[i]
    want = n * (1 - a) / (1 + a)
    assert abs(effective_sample_size(x) / want - 1) < 0.2
    drift = np.concatenate([np.zeros(500), np.ones(500)]) + 0.01 * rng.standard_normal(1000)
    assert split_rhat(drift) > 1.5
