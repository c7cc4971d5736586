"""Posterior-predictive simulation, one-day-ahead exceedance probabilities,
validation error rates and EHE characteristic summaries."""
from __future__ import annotations

import datetime as dt
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import special

from . import dist
from .core import (DURATION_BINS, JJA, StationSeries, calendar, duration_histogram,
                   exceedance_cdf_complement, extract_events, states_from_values)
from .mcmc import PosteriorChain, SamplerConfig, fit
from .model import (SINGLE_STATE, TWO_STATE, ModelConfig, ModelData, ParameterState,
                    design, seasonal, transition_prob)
from .spatial import GpHyper, SpatialField, krige

DEFAULT_LEVELS = np.round(np.arange(0.0, 6.01, 0.5), 10)
SIM_BLOCK = 256  # trajectories per RNG stream / worker task


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("EHE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class PredictionSite:
    """A location to predict at; ``index`` points at a fitted station, None
    means the fields are kriged from the fitted stations."""

    lon: float
    lat: float
    elev: float
    q: float
    index: int | None = None
    id: str = "new"


def chain_site(chain: PosteriorChain, station_id: str, q: float | None = None) -> PredictionSite:
    i = chain.site_ids.index(station_id)
    lon, lat = chain.coords[i]
    return PredictionSite(float(lon), float(lat), float(chain.elev[i]),
                          float(chain.q[i] if q is None else q), i, station_id)


@dataclass(frozen=True)
class SiteEffects:
    """Site-level quantities of one posterior draw."""

    intercept: np.ndarray   # (K,) beta0 + beta0(s) + beta1 elev + beta2 lat
    logvar: np.ndarray      # (K,) log sigma^2(s)
    trans: float = 0.0      # phi0(s)


def site_effects(params: ParameterState, chain: PosteriorChain, site: PredictionSite,
                 rng=None) -> SiteEffects:
    """Site effects of one draw, kriging every spatial field for a new site."""
    cov = chain.scaling.apply(site.elev, site.lat)
    x = design(cov)[0]
    K = params.n_states
    if site.index is not None:
        mf = params.mean_field[:, site.index]
        lv = params.logvar_field[:, site.index]
        tf = params.trans_field[site.index] if params.trans_field is not None else 0.0
    else:
        rng = np.random.default_rng() if rng is None else rng
        decay = chain.model_config.decay
        new = [[site.lon, site.lat]]

        def kr(values, var, mean=0.0):
            f = SpatialField(chain.coords, values, GpHyper(float(var), decay, float(mean)))
            return float(krige(f, new, rng)[0])

        mf = np.array([kr(params.mean_field[k], params.tau2_mean[k]) for k in range(K)])
        lv = np.array([kr(params.logvar_field[k], params.tau2_logvar[k], params.logvar_mean[k])
                       for k in range(K)])
        tf = kr(params.trans_field, params.tau2_trans) if params.trans_field is not None else 0.0
    return SiteEffects(params.beta @ x + mf, lv, float(tf))


@dataclass
class PathParams:
    """Parameters of P trajectories, one row per trajectory."""

    intercept: np.ndarray   # (P, K)
    sd: np.ndarray          # (P, K); state 1 includes sqrt(omega)
    rho: np.ndarray         # (P, K)
    lam: np.ndarray         # (P, 2)
    gamma: np.ndarray       # (P, K, n_sim_years)
    q: np.ndarray           # (P,)
    vphi: np.ndarray | None = None   # (P,) phi0 + phi0(s)
    phi: np.ndarray | None = None    # (P, 4) phi1..phi4
    nu: float = dist.NU
    sign: float = 1.0

    @property
    def two_state(self) -> bool:
        return self.phi is not None


@dataclass
class PredictiveSeries:
    y: np.ndarray
    u: np.ndarray
    site: str = "new"
    draw: int = -1


def _sim_calendar(start_date: dt.date, n_days: int):
    """Calendar for the day before ``start_date`` followed by ``n_days`` days."""
    _, doy, year, length, month = calendar(start_date - dt.timedelta(days=1), n_days + 1)
    return doy, year, length, month


def _gamma_for_years(params: ParameterState, fitted_years, sim_years, rng,
                     annual_sd: float = 1.0):
    """Annual effects for each simulated year; years outside the fit are drawn
    from the N(0, annual_sd^2) prior. Returns (gamma (K, n), extrapolated?)."""
    fitted = {int(y): i for i, y in enumerate(fitted_years)}
    K = params.n_states
    out = np.empty((K, len(sim_years)))
    extra = False
    for j, y in enumerate(sim_years):
        if int(y) in fitted:
            out[:, j] = params.gamma[:, fitted[int(y)]]
        else:
            out[:, j] = annual_sd * rng.standard_normal(K)
            extra = True
    return out, extra


def path_params(items: Sequence[tuple[ParameterState, SiteEffects, np.ndarray]], q,
                config: ModelConfig = ModelConfig()) -> PathParams:
    """Stack (params, effects, gamma) triples into trajectory rows."""
    P = len(items)
    p0 = items[0][0]
    two = p0.kind == TWO_STATE
    inter = np.array([e.intercept for _, e, _ in items])
    lv = np.array([e.logvar for _, e, _ in items])
    if two:
        lv[:, 1] += np.log([p.omega for p, _, _ in items])
    pp = PathParams(
        intercept=inter, sd=np.exp(0.5 * lv),
        rho=np.array([p.rho for p, _, _ in items]),
        lam=np.array([p.lam for p, _, _ in items]),
        gamma=np.array([g for _, _, g in items]),
        q=np.broadcast_to(np.asarray(q, float), (P,)).copy(),
        nu=config.nu, sign=config.ar_sign)
    if two:
        pp.vphi = np.array([p.phi[0] + e.trans for p, e, _ in items])
        pp.phi = np.array([p.phi[1:] for p, _, _ in items])
    return pp


def simulate_paths(pp: PathParams, start_date: dt.date, n_days: int, rng,
                   y0=None, year_map: np.ndarray | None = None):
    """Simulate P trajectories day by day; returns (Y, U), each (P, n_days).

    ``year_map`` maps each calendar day (day before start included) to a column
    of ``pp.gamma``; by default columns follow consecutive calendar years from
    the year of the day before the start.
    """
    doy, year, length, _ = _sim_calendar(start_date, n_days)
    if year_map is None:
        year_map = year - year[0]
    s, c = seasonal(doy, length)
    P = len(pp.q)
    rows = np.arange(P)
    mu = lambda t: (pp.intercept + pp.gamma[:, :, year_map[t]]
                    + pp.lam[:, :1] * s[t] + pp.lam[:, 1:] * c[t])
    y_prev = mu(0)[:, 0].copy() if y0 is None else np.broadcast_to(np.asarray(y0, float), (P,)).copy()
    Y = np.empty((P, n_days))
    U = np.empty((P, n_days), dtype=np.int8)
    below_cap = np.nextafter(pp.q, -np.inf)
    mu_prev = mu(0)
    for t in range(1, n_days + 1):
        mu_t = mu(t)
        center = mu_t + pp.sign * pp.rho * (y_prev[:, None] - mu_prev)
        if pp.two_state:
            d = y_prev - pp.q
            e = (pp.vphi + pp.phi[:, 0] * d + pp.phi[:, 1] * np.maximum(d, 0.0)
                 + pp.phi[:, 2] * s[t] + pp.phi[:, 3] * c[t])
            u = rng.random(P) < special.ndtr(e)
            y = np.empty(P)
            lo = rows[~u]
            hi = rows[u]
            if lo.size:
                y[lo] = np.minimum(dist.tn_sample(center[lo, 0], pp.sd[lo, 0] ** 2, -np.inf,
                                                  pp.q[lo], rng), below_cap[lo])
            if hi.size:
                y[hi] = dist.tn_sample(center[hi, 1], pp.sd[hi, 1] ** 2, pp.q[hi], np.inf, rng)
        else:
            y = center[:, 0] + pp.sd[:, 0] * rng.standard_t(pp.nu, P)
            u = y >= pp.q
        Y[:, t - 1] = y
        U[:, t - 1] = u
        y_prev = y
        mu_prev = mu_t
    return Y, U


def simulate_trajectory(params: ParameterState, effects: SiteEffects, q: float,
                        start_date: dt.date, n_days: int, rng, y0: float | None = None,
                        fitted_years: Sequence[int] | None = None,
                        config: ModelConfig = ModelConfig(), site: str = "new",
                        draw: int = -1) -> PredictiveSeries:
    """One predictive trajectory from a single parameter draw.

    Without ``fitted_years`` the annual effects are read in order starting with
    the year of the day before ``start_date``.
    """
    _, year, _, _ = _sim_calendar(start_date, n_days)
    sim_years = np.unique(year)
    if fitted_years is None:
        fitted_years = sim_years[: params.gamma.shape[1]]
    gamma, _ = _gamma_for_years(params, fitted_years, sim_years, rng, config.annual_sd)
    pp = path_params([(params, effects, gamma)], q, config)
    Y, U = simulate_paths(pp, start_date, n_days, rng, y0,
                          year_map=np.searchsorted(sim_years, year))
    return PredictiveSeries(Y[0], U[0], site, draw)


def one_day_ahead_prob(params: ParameterState, effects: SiteEffects, y_prev, q, doy, length):
    """P(U_t = 1 | y_{t-1}) for one draw; NaN where y_prev is missing."""
    p1 = replace(params, trans_field=np.array([effects.trans]))
    out = transition_prob(p1, 0, y_prev, q, doy, length)
    return np.where(np.isnan(y_prev), np.nan, out) if np.ndim(out) else (
        float("nan") if np.isnan(y_prev) else out)


# ---------------------------------------------------------------------------
# posterior-draw plumbing


def _draw_indices(chain: PosteriorChain, max_draws: int | None):
    n = len(chain)
    if max_draws is None or max_draws >= n:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, max_draws).round().astype(int))


def draw_items(chain: PosteriorChain, site: PredictionSite, sim_years, seed: int,
               max_draws: int | None = None):
    """(params, effects, gamma) per retained draw, each draw using its own RNG
    stream derived from (seed, draw index). Also returns whether any year was
    extrapolated beyond the fit."""
    items, extra = [], False
    for i in _draw_indices(chain, max_draws):
        rng = np.random.default_rng([seed, int(i)])
        p = chain.state(int(i))
        eff = site_effects(p, chain, site, rng)
        g, x = _gamma_for_years(p, chain.years, sim_years, rng, chain.model_config.annual_sd)
        items.append((p, eff, g))
        extra |= x
    return items, extra


# ---------------------------------------------------------------------------
# EHE summaries


@dataclass
class Band:
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n: int = 0

    @property
    def empty(self) -> bool:
        return self.n == 0


def _band(rows: list[np.ndarray], width: int) -> Band:
    if not rows:
        z = np.zeros(width)
        return Band(z, z.copy(), z.copy(), 0)
    a = np.array(rows)
    return Band(a.mean(axis=0), np.quantile(a, 0.05, axis=0), np.quantile(a, 0.95, axis=0),
                len(rows))


@dataclass
class EheSummary:
    bins: tuple = DURATION_BINS
    levels: np.ndarray = field(default_factory=lambda: DEFAULT_LEVELS.copy())
    duration: Band | None = None
    avg_exceedance: Band | None = None
    max_exceedance: Band | None = None
    incidence: Band | None = None
    exceedance_days: Band | None = None
    n_paths: int = 0
    extrapolated_years: bool = False
    trajectories: np.ndarray | None = None

    @property
    def empty(self) -> bool:
        return self.duration.empty


def path_statistics(y, q, months=None, levels=DEFAULT_LEVELS, min_duration=3,
                    bins=DURATION_BINS):
    """Event statistics for one trajectory (or an observed series)."""
    u = states_from_values(y, q)
    ev = extract_events(y, u, q=q, months=months)
    return (duration_histogram(ev, bins),
            exceedance_cdf_complement(ev, levels, min_duration, "avg"),
            exceedance_cdf_complement(ev, levels, min_duration, "max"),
            len(ev), int(np.nansum(u)))


def summarize_paths(Y, q, levels=DEFAULT_LEVELS, min_duration=3, bins=DURATION_BINS,
                    months=None, keep=False) -> EheSummary:
    dur, avg, mx, inc, days = [], [], [], [], []
    for i, y in enumerate(Y):
        h, a, m, n, nd = path_statistics(y, float(np.broadcast_to(q, len(Y))[i]), months,
                                         levels, min_duration, bins)
        if not h.empty:
            dur.append(h.values)
        if not a.empty:
            avg.append(a.values)
            mx.append(m.values)
        inc.append(np.array([n], float))
        days.append(np.array([nd], float))
    L = len(levels)
    return EheSummary(bins, np.asarray(levels, float), _band(dur, len(bins)), _band(avg, L),
                      _band(mx, L), _band(inc, 1), _band(days, 1), len(Y),
                      trajectories=np.asarray(Y) if keep else None)


def summarize_ehe(chain: PosteriorChain, site: PredictionSite, start_date: dt.date,
                  n_days: int, n_rep: int = 1, seed: int = 0, max_draws: int | None = None,
                  levels=DEFAULT_LEVELS, min_duration: int = 3, months=None,
                  keep_trajectories: bool = False, threads: int | None = None) -> EheSummary:
    """Posterior-predictive EHE summaries at ``site`` over a date range.

    ``n_rep`` trajectories are simulated per retained draw. Duration densities
    and exceedance complement-CDFs are computed per trajectory (trajectories
    without qualifying events are left out of those bands) and summarised by
    their mean and 5%/95% quantiles. ``months`` restricts the days counted
    (events are still extracted from the full trajectory).
    """
    if n_rep < 1:
        raise ValueError("n_rep must be at least 1")
    _, year, _, month = _sim_calendar(start_date, n_days)
    sim_years = np.unique(year)
    items, extra = draw_items(chain, site, sim_years, seed, max_draws)
    items = [it for it in items for _ in range(n_rep)]
    pp_all = path_params(items, site.q, chain.model_config)
    year_map = np.searchsorted(sim_years, year)
    blocks = [np.arange(i, min(i + SIM_BLOCK, len(items))) for i in range(0, len(items), SIM_BLOCK)]

    def run(b):
        idx = blocks[b]
        pp = PathParams(pp_all.intercept[idx], pp_all.sd[idx], pp_all.rho[idx], pp_all.lam[idx],
                        pp_all.gamma[idx], pp_all.q[idx],
                        None if pp_all.vphi is None else pp_all.vphi[idx],
                        None if pp_all.phi is None else pp_all.phi[idx], pp_all.nu, pp_all.sign)
        rng = np.random.default_rng([seed, 1_000_003, b])
        return simulate_paths(pp, start_date, n_days, rng, year_map=year_map)[0]

    threads = default_threads() if threads is None else threads
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, range(len(blocks))))
    else:
        parts = [run(b) for b in range(len(blocks))]
    Y = np.concatenate(parts, axis=0)
    if months is not None:
        Y = np.where(np.isin(month[1:], list(months))[None, :], Y, np.nan)
    out = summarize_paths(Y, site.q, levels, min_duration, months=month[1:],
                          keep=keep_trajectories)
    out.extrapolated_years = extra
    return out


# ---------------------------------------------------------------------------
# validation error rates


@dataclass
class ErrorRates:
    """Mean of 1 - p_hat over observed exceedance days in a window.

    ``run1``..``run3`` condition on the event having already lasted exactly
    1, 2 or 3 days. NaN marks an empty day set (see the ``n_*`` counts).
    """

    marginal: float
    persistence: float
    onset: float
    run1: float
    run2: float
    run3: float
    n_marginal: int
    n_persistence: int
    n_onset: int
    n_run1: int
    n_run2: int
    n_run3: int
    window: str = ""

    def flagged_empty(self, name: str) -> bool:
        return getattr(self, f"n_{name}") == 0

    def rows(self):
        for name in ("marginal", "persistence", "onset", "run1", "run2", "run3"):
            yield name, getattr(self, name), getattr(self, f"n_{name}")


def window_mask(dates_month, dates_year, months=JJA, years: tuple[int, int] | None = None):
    mask = np.isin(dates_month, list(months))
    if years is not None:
        mask &= (dates_year >= years[0]) & (dates_year <= years[1])
    return mask


def error_rates(p_hat, values, q, mask=None, window: str = "") -> ErrorRates:
    """Marginal, persistence, onset and run-length conditional error rates.

    ``p_hat[t]`` is the predicted P(U_t = 1 | y_{t-1}); only days with an
    observed exceedance and an observed previous day inside ``mask`` count.
    """
    p_hat = np.asarray(p_hat, float)
    y = np.asarray(values, float)
    T = len(y)
    mask = np.ones(T, bool) if mask is None else np.asarray(mask, bool)
    above = np.zeros(T, bool)
    ok = ~np.isnan(y)
    above[ok] = y[ok] >= q
    below = ok & ~above

    def lag(a, k):
        out = np.zeros(T, bool)
        out[k:] = a[:-k]
        return out

    base = mask & above & lag(ok, 1) & ~np.isnan(p_hat)
    sets = {
        "marginal": base,
        "persistence": base & lag(above, 1),
        "onset": base & lag(below, 1),
        "run1": base & lag(above, 1) & lag(below, 2),
        "run2": base & lag(above, 1) & lag(above, 2) & lag(below, 3),
        "run3": base & lag(above, 1) & lag(above, 2) & lag(above, 3) & lag(below, 4),
    }
    err = 1.0 - p_hat
    vals, counts = {}, {}
    for name, m in sets.items():
        n = int(m.sum())
        counts[f"n_{name}"] = n
        vals[name] = float(err[m].mean()) if n else float("nan")
    return ErrorRates(**vals, **counts, window=window)


def exceedance_probabilities(chain: PosteriorChain, site: PredictionSite, values,
                             start_date: dt.date, seed: int = 0,
                             max_draws: int | None = None) -> np.ndarray:
    """Posterior-mean one-day-ahead P(y_t >= q | observed y_{t-1}) per day.

    Two-state chains use Phi(eta); single-state chains use the exact t tail
    mass above q. Day 0 and days after a missing value are NaN.
    """
    y = np.asarray(values, float)
    T = len(y)
    _, doy, year, length, _ = calendar(start_date, T)
    sim_years = np.unique(year)
    ymap = np.searchsorted(sim_years, year)
    s, c = seasonal(doy, length)
    items, _ = draw_items(chain, site, sim_years, seed, max_draws)
    y_prev = np.concatenate([[np.nan], y[:-1]])
    acc = np.zeros(T)
    cfg = chain.model_config
    for p, eff, g in items:
        if p.kind == TWO_STATE:
            d = y_prev - site.q
            e = (p.phi[0] + eff.trans + p.phi[1] * d + p.phi[2] * np.maximum(d, 0.0)
                 + p.phi[3] * s + p.phi[4] * c)
            acc += special.ndtr(e)
        else:
            mu = eff.intercept[0] + g[0, ymap] + p.lam[0] * s + p.lam[1] * c
            mu_prev = np.concatenate([[np.nan], mu[:-1]])
            m = mu + cfg.ar_sign * p.rho[0] * (y_prev - mu_prev)
            sd = np.exp(0.5 * eff.logvar[0])
            acc += special.stdtr(cfg.nu, (m - site.q) / sd)
    out = acc / len(items)
    out[np.isnan(y_prev)] = np.nan
    return out


def chain_error_rates(chain: PosteriorChain, site: PredictionSite, series: StationSeries,
                      months=JJA, years: tuple[int, int] | None = None, seed: int = 0,
                      max_draws: int | None = None) -> ErrorRates:
    p_hat = exceedance_probabilities(chain, site, series.values, series.start_date, seed,
                                     max_draws)
    mask = window_mask(series.month, series.year, months, years)
    label = f"months={','.join(map(str, months))}"
    if years is not None:
        label += f";years={years[0]}-{years[1]}"
    return error_rates(p_hat, series.values, site.q, mask, label)


@dataclass
class Comparison:
    """Error rates of the two-state model and the single-state baseline for a
    held-out station, one entry per evaluation window."""

    station_id: str
    two_state: list[ErrorRates]
    baseline: list[ErrorRates]
    chains: dict[str, PosteriorChain] = field(default_factory=dict)


def fit_baseline_and_compare(data: ModelData, held_out: StationSeries, q: float,
                             config: ModelConfig = ModelConfig(),
                             sconfig: SamplerConfig = SamplerConfig(),
                             windows: Sequence[tuple[int, int] | None] = (None,),
                             months=JJA, max_draws: int | None = 500,
                             chains: dict[str, PosteriorChain] | None = None) -> Comparison:
    """Fit both models on ``data`` (which must exclude the held-out station)
    and score one-day-ahead exceedance predictions at the held-out site."""
    if held_out.station.id in data.site_ids:
        raise ValueError("held-out station is part of the training data")
    chains = dict(chains or {})
    if TWO_STATE not in chains:
        chains[TWO_STATE] = fit(data, config, sconfig, TWO_STATE)
    if SINGLE_STATE not in chains:
        chains[SINGLE_STATE] = fit(data, config, sconfig, SINGLE_STATE)
    st = held_out.station
    site = PredictionSite(st.lon, st.lat, st.elev, q, None, st.id)
    res = {}
    for kind in (TWO_STATE, SINGLE_STATE):
        res[kind] = [chain_error_rates(chains[kind], site, held_out, months, w,
                                       sconfig.seed, max_draws) for w in windows]
    return Comparison(st.id, res[TWO_STATE], res[SINGLE_STATE], chains)
