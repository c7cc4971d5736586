"""Forward generator for synthetic station data from a known ParameterState."""
from __future__ import annotations

import datetime as dt
from dataclasses import replace
from typing import Sequence

import numpy as np

from .core import Station, StationSeries, Threshold
from .mcmc import PosteriorChain, SamplerConfig
from .model import (TWO_STATE, CovariateScaling, ModelConfig, ModelData, ParameterState,
                    design)
from .predict import SiteEffects, _sim_calendar, path_params, simulate_paths
from .spatial import GpHyper, build_cov, decay_for_range
from . import dist


def default_stations(n: int = 4, seed: int = 7) -> list[Station]:
    """``n`` stations scattered over roughly 400 x 400 km around (-4, 40)."""
    rng = np.random.default_rng(seed)
    lon = -4.0 + rng.uniform(-2.0, 2.0, n)
    lat = 40.0 + rng.uniform(-1.8, 1.8, n)
    elev = rng.uniform(50.0, 900.0, n)
    return [Station(f"S{i + 1:02d}", f"synthetic {i + 1}", float(lon[i]), float(lat[i]),
                    float(round(elev[i], 1))) for i in range(n)]


def truth_state(stations: Sequence[Station], n_years: int, kind: str = TWO_STATE,
                seed: int = 11, config: ModelConfig = ModelConfig(),
                field_sd: float = 0.5, switching: float = 1.0) -> ParameterState:
    """A realistic parameter draw (summer means near 28 C below the threshold,
    near 36 C above it). ``switching`` scales the transition slopes; larger
    values make persistence of hot days more pronounced."""
    rng = np.random.default_rng(seed)
    S = len(stations)
    coords = np.array([[s.lon, s.lat] for s in stations])
    R = build_cov(coords, GpHyper(1.0, decay_for_range(config.range_km)))
    L = dist.jittered_cholesky(R)
    two = kind == TWO_STATE
    K = 2 if two else 1

    def gp(sd, mean=0.0):
        return mean + sd * (L @ rng.standard_normal(S))

    beta = np.array([[20.0, -3.0, -1.0], [28.0, -1.0, -0.5]])[:K]
    gamma = np.zeros((K, n_years))
    gamma[:, 1:] = 0.5 * rng.standard_normal((K, n_years - 1))
    lv_mean = np.log([9.0, 2.25])[:K]
    p = ParameterState(
        beta=beta, lam=np.array([0.0, -8.0]), rho=np.array([0.73, 0.71])[:K], gamma=gamma,
        mean_field=np.array([gp(field_sd) for _ in range(K)]),
        logvar_field=np.array([gp(0.2, m) for m in lv_mean]),
        logvar_mean=lv_mean.copy(), tau2_mean=np.full(K, field_sd ** 2),
        tau2_logvar=np.full(K, 0.04),
        phi=np.array([-0.7, 0.25 * switching, 0.25 * switching, 0.0, -0.8]) if two else None,
        trans_field=gp(0.2) if two else None, tau2_trans=0.04, omega=1.0)
    p.check()
    return p


def observed_effects(params: ParameterState, covariates, index: int) -> SiteEffects:
    x = design(covariates)[index]
    tf = params.trans_field[index] if params.trans_field is not None else 0.0
    return SiteEffects(params.beta @ x + params.mean_field[:, index],
                       params.logvar_field[:, index].copy(), float(tf))


def simulate_dataset(params: ParameterState, stations: Sequence[Station], q,
                     start_date: dt.date = dt.date(1953, 1, 1), n_years: int | None = None,
                     n_days: int | None = None, seed: int = 0,
                     config: ModelConfig = ModelConfig(),
                     scaling: CovariateScaling | None = None,
                     missing_rate: float = 0.0):
    """Simulate every station from ``params``; returns (ModelData, series list).

    Annual effects are read from ``params.gamma`` starting with the year of
    ``start_date``. ``missing_rate`` blanks a random fraction of days.
    """
    if n_days is None:
        n_years = params.gamma.shape[1] if n_years is None else n_years
        end = dt.date(start_date.year + n_years - 1, 12, 31)
        n_days = (end - start_date).days + 1
    rng = np.random.default_rng(seed)
    scaling = (scaling or config.scaling).resolve(stations)
    covs = scaling.apply([s.elev for s in stations], [s.lat for s in stations])
    q = np.broadcast_to(np.asarray(q, float), (len(stations),)).copy()
    _, year, _, _ = _sim_calendar(start_date, n_days)
    year_map = np.clip(year - start_date.year, 0, params.gamma.shape[1] - 1)
    items = [(params, observed_effects(params, covs, i), params.gamma)
             for i in range(len(stations))]
    pp = path_params(items, q, config)
    Y, _ = simulate_paths(pp, start_date, n_days, rng, year_map=year_map)
    if missing_rate > 0:
        Y[rng.random(Y.shape) < missing_rate] = np.nan
    series = [StationSeries(s, start_date, Y[i]) for i, s in enumerate(stations)]
    data = ModelData.from_series(series, {s.id: float(q[i]) for i, s in enumerate(stations)},
                                 scaling)
    return data, series


def thresholds_for(stations: Sequence[Station], q) -> list[Threshold]:
    q = np.broadcast_to(np.asarray(q, float), (len(stations),))
    return [Threshold(s.id, float(q[i])) for i, s in enumerate(stations)]


def truth_chain(params: ParameterState, data: ModelData,
                config: ModelConfig = ModelConfig()) -> PosteriorChain:
    """A one-draw chain holding ``params``, so that prediction and validation
    code can be run with the generating parameters."""
    return PosteriorChain(
        kind=params.kind,
        draws={k: np.asarray(v, float)[None] for k, v in params.as_dict().items()},
        site_ids=data.site_ids, coords=data.coords,
        elev=np.array([s.elev for s in data.stations], float), covariates=data.covariates,
        q=data.q, years=data.years, model_config=replace(config, scaling=data.scaling),
        sampler_config=SamplerConfig(iterations=0))
