"""Two-state threshold-switching model: mean structure, transition predictor,
joint log-likelihood, and the single-state AR(1)-t baseline.

State 0 (below threshold) emits a truncated normal on (-inf, q); state 1
(above) a truncated normal on [q, inf) with variance scaled by a global omega,
which integrates to a truncated multivariate t. The state is switched by a
probit model driven by the previous day's temperature relative to q.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np
from scipy import special

from . import dist
from .core import Station, StationSeries, Threshold, calendar, states_from_values
from .spatial import EFFECTIVE_RANGE_KM, correlation, decay_for_range

TWO_STATE = "two_state"
SINGLE_STATE = "single_state"


@dataclass(frozen=True)
class CovariateScaling:
    """elev_scaled = (elev_m - elev_offset) / elev_scale, same for latitude.

    A ``lat_offset`` of None is resolved to the midpoint of the station
    latitudes when the model data are built.
    """

    elev_offset: float = 0.0
    elev_scale: float = 1000.0
    lat_offset: float | None = None
    lat_scale: float = 10.0

    def __post_init__(self):
        if not (self.elev_scale > 0 and self.lat_scale > 0):
            raise ValueError("covariate scales must be positive")

    def resolve(self, stations: Sequence[Station]) -> "CovariateScaling":
        if self.lat_offset is not None:
            return self
        lats = [s.lat for s in stations]
        return CovariateScaling(self.elev_offset, self.elev_scale,
                                0.5 * (min(lats) + max(lats)), self.lat_scale)

    def apply(self, elev_m, lat) -> np.ndarray:
        if self.lat_offset is None:
            raise ValueError("latitude offset unresolved")
        return np.column_stack([
            (np.atleast_1d(np.asarray(elev_m, float)) - self.elev_offset) / self.elev_scale,
            (np.atleast_1d(np.asarray(lat, float)) - self.lat_offset) / self.lat_scale,
        ])


@dataclass(frozen=True)
class ModelConfig:
    nu: float = dist.NU
    range_km: float = EFFECTIVE_RANGE_KM
    coef_sd: float = 100.0
    annual_sd: float = 1.0
    ig_shape: float = 2.0
    ig_rate: float = 2.0
    hypermean_sd: float = 1.0
    # +1: mu_t + rho (y_{t-1} - mu_{t-1}); -1 keeps the minus sign as printed
    ar_sign: float = 1.0
    scaling: CovariateScaling = field(default_factory=CovariateScaling)

    @property
    def decay(self) -> float:
        return decay_for_range(self.range_km)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        sc = d.pop("scaling", None)
        known = {f.name for f in fields(cls)}
        kw = {k: float(v) for k, v in d.items() if k in known}
        if sc is not None:
            kw["scaling"] = CovariateScaling(**sc) if isinstance(sc, dict) else sc
        return cls(**kw)


@dataclass
class ParameterState:
    """One draw of every model parameter.

    Arrays carry a leading state axis K (2 for the two-state model, 1 for the
    single-state baseline). ``phi`` holds (phi0, ..., phi4); ``trans_field`` is
    the spatial transition intercept phi0(s).
    """

    beta: np.ndarray            # (K, 3): intercept, elevation, latitude
    lam: np.ndarray             # (2,) sin, cos
    rho: np.ndarray             # (K,)
    gamma: np.ndarray           # (K, n_years), first year pinned at 0
    mean_field: np.ndarray      # (K, S)
    logvar_field: np.ndarray    # (K, S)
    logvar_mean: np.ndarray     # (K,)
    tau2_mean: np.ndarray       # (K,)
    tau2_logvar: np.ndarray     # (K,)
    phi: np.ndarray | None = None
    trans_field: np.ndarray | None = None
    tau2_trans: float = 1.0
    omega: float = 1.0

    @property
    def kind(self) -> str:
        return TWO_STATE if self.phi is not None else SINGLE_STATE

    @property
    def n_states(self) -> int:
        return self.beta.shape[0]

    def copy(self) -> "ParameterState":
        return copy.deepcopy(self)

    def as_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None:
                out[f.name] = np.array(v, dtype=float)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterState":
        kw = {}
        for f in fields(cls):
            if f.name in d and d[f.name] is not None:
                v = np.array(d[f.name], dtype=float)
                kw[f.name] = float(v) if f.name in ("tau2_trans", "omega") else v
        return cls(**kw)

    def check(self):
        if np.any(np.abs(self.rho) >= 1):
            raise ValueError("autoregressive coefficients must lie in (-1, 1)")
        if np.any(self.gamma[:, 0] != 0):
            raise ValueError("first-year annual effects must be 0")
        if not self.omega > 0:
            raise ValueError("omega must be positive")


def zero_state(n_sites: int, n_years: int, kind: str = TWO_STATE) -> ParameterState:
    k = 2 if kind == TWO_STATE else 1
    two = kind == TWO_STATE
    return ParameterState(
        beta=np.zeros((k, 3)), lam=np.zeros(2), rho=np.zeros(k),
        gamma=np.zeros((k, n_years)), mean_field=np.zeros((k, n_sites)),
        logvar_field=np.zeros((k, n_sites)), logvar_mean=np.zeros(k),
        tau2_mean=np.ones(k), tau2_logvar=np.ones(k),
        phi=np.zeros(5) if two else None,
        trans_field=np.zeros(n_sites) if two else None)


# ---------------------------------------------------------------------------
# mean structure and transition predictor


def seasonal(doy, length):
    ang = 2.0 * np.pi * np.asarray(doy, float) / np.asarray(length, float)
    return np.sin(ang), np.cos(ang)


def design(covariates) -> np.ndarray:
    """Site design matrix [1, elev, lat] from scaled covariates (S, 2)."""
    cov = np.atleast_2d(np.asarray(covariates, float))
    return np.column_stack([np.ones(len(cov)), cov])


def site_intercepts(params: ParameterState, covariates) -> np.ndarray:
    """beta0 + beta0(s) + beta1 elev(s) + beta2 lat(s) per state and site, (K, S)."""
    return params.beta @ design(covariates).T + params.mean_field


def mu(params: ParameterState, state: int, site: int, doy, length, year_index,
       covariates) -> np.ndarray | float:
    """Mean temperature of ``state`` at ``site`` on the given calendar day(s)."""
    v = site_intercepts(params, covariates)[state, site]
    s, c = seasonal(doy, length)
    out = v + params.gamma[state, year_index] + params.lam[0] * s + params.lam[1] * c
    return out if np.ndim(out) else float(out)


def ar_center(params: ParameterState, state: int, y_prev, mu_t, mu_prev,
              sign: float = 1.0):
    """Autoregressive centering mu_t + rho (y_{t-1} - mu_{t-1})."""
    return mu_t + sign * params.rho[state] * (np.asarray(y_prev, float) - mu_prev)


def eta(params: ParameterState, site: int, y_prev, q, doy, length):
    """Probit predictor for P(U_t = 1 | Y_{t-1}); continuous in y_prev at q."""
    d = np.asarray(y_prev, float) - q
    s, c = seasonal(doy, length)
    phi = params.phi
    out = (phi[0] + params.trans_field[site] + phi[1] * d + phi[2] * np.maximum(d, 0.0)
           + phi[3] * s + phi[4] * c)
    return out if np.ndim(out) else float(out)


def transition_prob(params: ParameterState, site: int, y_prev, q, doy, length):
    return dist.probit_inv(eta(params, site, y_prev, q, doy, length))


def seasonal_peak_day(phi3: float, phi4: float, length: int = 365) -> float:
    """Day of year maximising phi3 sin + phi4 cos, in [0, length)."""
    return (length / (2 * np.pi) * np.arctan2(phi3, phi4)) % length


# ---------------------------------------------------------------------------
# model data


@dataclass
class ModelData:
    """Stations aligned on a common daily calendar, with thresholds and the
    index arrays of every modelled transition (day t with y_t and y_{t-1}
    observed)."""

    stations: list[Station]
    q: np.ndarray
    covariates: np.ndarray
    scaling: CovariateScaling
    start_date: object
    Y: np.ndarray
    years: np.ndarray

    def __post_init__(self):
        self.Y = np.atleast_2d(np.asarray(self.Y, float))
        self.q = np.asarray(self.q, float)
        n_sites, n_days = self.Y.shape
        (self.dates, self.doy, self.year, self.length,
         self.month) = calendar(self.start_date, n_days)
        self.years = np.asarray(self.years, dtype=np.int64)
        pos = np.searchsorted(self.years, self.year)
        if np.any(pos >= len(self.years)) or np.any(self.years[np.minimum(pos, len(self.years) - 1)] != self.year):
            raise ValueError("calendar years not covered by the fitted year list")
        self.year_idx = pos
        self.U = np.where(np.isnan(self.Y), np.nan, (self.Y >= self.q[:, None]).astype(float))
        self.sin, self.cos = seasonal(self.doy, self.length)

        ok = ~np.isnan(self.Y)
        pair = ok[:, 1:] & ok[:, :-1]
        s_idx, t_idx = np.nonzero(pair)
        t_idx = t_idx + 1
        self.tr_site = s_idx
        self.tr_t = t_idx
        self.tr_y = self.Y[s_idx, t_idx]
        self.tr_yprev = self.Y[s_idx, t_idx - 1]
        self.tr_u = (self.tr_y >= self.q[s_idx]).astype(np.int8)
        self.tr_yr = self.year_idx[t_idx]
        self.tr_yr_prev = self.year_idx[t_idx - 1]
        self.tr_trig = np.column_stack([self.sin[t_idx], self.cos[t_idx]])
        self.tr_trig_prev = np.column_stack([self.sin[t_idx - 1], self.cos[t_idx - 1]])

    @property
    def n_sites(self) -> int:
        return self.Y.shape[0]

    @property
    def n_years(self) -> int:
        return len(self.years)

    @property
    def site_ids(self) -> list[str]:
        return [s.id for s in self.stations]

    @property
    def coords(self) -> np.ndarray:
        return np.array([[s.lon, s.lat] for s in self.stations], float)

    def correlation(self, decay: float) -> np.ndarray:
        return correlation(self.coords, decay)

    def subset(self, keep_ids: Sequence[str]) -> "ModelData":
        """Data restricted to the given station ids, keeping the scaling."""
        idx = [self.site_ids.index(i) for i in keep_ids]
        return ModelData([self.stations[i] for i in idx], self.q[idx],
                         self.covariates[idx], self.scaling, self.start_date,
                         self.Y[idx], self.years)

    @classmethod
    def from_series(cls, series: Sequence[StationSeries],
                    thresholds: dict[str, Threshold] | dict[str, float] | Sequence[Threshold],
                    scaling: CovariateScaling | None = None,
                    years: tuple[int, int] | None = None) -> "ModelData":
        """Align series on their common date span (optionally clipped to an
        inclusive year range); days outside a series are missing."""
        if not series:
            raise ValueError("no station series given")
        if not isinstance(thresholds, dict):
            thresholds = {t.station_id: t for t in thresholds}
        qs = []
        for s in series:
            if s.station.id not in thresholds:
                raise ValueError(f"no threshold for station {s.station.id}")
            t = thresholds[s.station.id]
            qs.append(t.q if isinstance(t, Threshold) else float(t))
        start = min(np.datetime64(s.start_date, "D") for s in series)
        end = max(np.datetime64(s.start_date, "D") + len(s) - 1 for s in series)
        if years is not None:
            start = max(start, np.datetime64(f"{years[0]:04d}-01-01"))
            end = min(end, np.datetime64(f"{years[1]:04d}-12-31"))
            if end < start:
                raise ValueError("year range does not overlap the data")
        n = int((end - start).astype(int)) + 1
        Y = np.full((len(series), n), np.nan)
        for i, s in enumerate(series):
            off = int((np.datetime64(s.start_date, "D") - start).astype(int))
            lo, hi = max(off, 0), min(off + len(s), n)
            if hi > lo:
                Y[i, lo:hi] = s.values[lo - off:hi - off]
        stations = [s.station for s in series]
        scaling = (scaling or CovariateScaling()).resolve(stations)
        covs = scaling.apply([s.elev for s in stations], [s.lat for s in stations])
        start_date = start.astype(object)
        yr = calendar(start_date, n)[2]
        return cls(stations, np.array(qs), covs, scaling, start_date, Y,
                   np.arange(yr[0], yr[-1] + 1))


# ---------------------------------------------------------------------------
# likelihood


class Emission:
    """Transitions emitted by one state, with the matching likelihood kind.

    ``kind`` is "below" (normal truncated to (-inf, q)), "above" (normal with
    variance omega * sigma^2 truncated to [q, inf)) or "t" (untruncated
    Student-t, the single-state baseline).
    """

    def __init__(self, data: ModelData, state: int, kind: str, nu: float = dist.NU,
                 sign: float = 1.0):
        if kind == "t":
            sel = np.ones(len(data.tr_y), dtype=bool)
        else:
            sel = data.tr_u == state
        self.state = state
        self.kind = kind
        self.nu = nu
        self.sign = sign
        self.site = data.tr_site[sel]
        self.y = data.tr_y[sel]
        self.yprev = data.tr_yprev[sel]
        self.yr = data.tr_yr[sel]
        self.yr_prev = data.tr_yr_prev[sel]
        self.trig = data.tr_trig[sel]
        self.trig_prev = data.tr_trig_prev[sel]
        self.q = data.q[self.site]
        self.n = int(sel.sum())

    def mu_pair(self, v, gamma, lam):
        """State mean on day t and day t-1 for every transition."""
        base = v[self.site]
        return (base + gamma[self.yr] + self.trig @ lam,
                base + gamma[self.yr_prev] + self.trig_prev @ lam)

    def center(self, v, gamma, rho, lam):
        mu_t, mu_prev = self.mu_pair(v, gamma, lam)
        return mu_t + self.sign * rho * (self.yprev - mu_prev)

    def loglik(self, m, logvar, omega: float = 1.0) -> float:
        if self.n == 0:
            return 0.0
        lv = logvar[self.site]
        if self.kind == "t":
            return float(np.sum(dist.t_logpdf(self.y, m, np.exp(lv), self.nu)))
        if self.kind == "above":
            lv = lv + np.log(omega)
        inv_sd = np.exp(-0.5 * lv)
        z = (self.y - m) * inv_sd
        zq = (self.q - m) * inv_sd
        # below: mass Phi(zq); above: mass 1 - Phi(zq) = Phi(-zq)
        log_mass = special.log_ndtr(zq if self.kind == "below" else -zq)
        return float(np.sum(-0.5 * z * z - 0.5 * lv - log_mass) - 0.5 * dist.LOG_2PI * self.n)

    def loglik_params(self, params: ParameterState, covariates) -> float:
        k = self.state
        v = site_intercepts(params, covariates)[k]
        m = self.center(v, params.gamma[k], params.rho[k], params.lam)
        return self.loglik(m, params.logvar_field[k], params.omega)


class Transitions:
    """Probit part: Bernoulli(Phi(eta)) for every modelled transition."""

    def __init__(self, data: ModelData):
        self.site = data.tr_site
        self.u = data.tr_u
        d = data.tr_yprev - data.q[data.tr_site]
        self.X = np.column_stack([d, np.maximum(d, 0.0), data.tr_trig])
        self.sign = np.where(self.u == 1, 1.0, -1.0)
        self.n = len(self.u)

    def eta(self, vphi, phi_rest):
        return vphi[self.site] + self.X @ phi_rest

    def loglik_eta(self, eta) -> float:
        return float(np.sum(special.log_ndtr(self.sign * eta)))

    def loglik_params(self, params: ParameterState) -> float:
        vphi = params.phi[0] + params.trans_field
        return self.loglik_eta(self.eta(vphi, params.phi[1:]))


def emissions(data: ModelData, kind: str, config: ModelConfig) -> list[Emission]:
    if kind == TWO_STATE:
        return [Emission(data, 0, "below", config.nu, config.ar_sign),
                Emission(data, 1, "above", config.nu, config.ar_sign)]
    return [Emission(data, 0, "t", config.nu, config.ar_sign)]


def loglik_two_state(data: ModelData, params: ParameterState,
                     config: ModelConfig = ModelConfig()) -> float:
    """Joint log-likelihood of states and temperatures, conditional on omega.

    The first observed day of every stretch is conditioned on; any term that
    needs a missing y_t or y_{t-1} is dropped.
    """
    total = Transitions(data).loglik_params(params)
    for em in emissions(data, TWO_STATE, config):
        total += em.loglik_params(params, data.covariates)
    return total


def loglik_single_state(data: ModelData, params: ParameterState,
                        config: ModelConfig = ModelConfig()) -> float:
    """Baseline AR(1) log-likelihood with independent t errors (no states)."""
    (em,) = emissions(data, SINGLE_STATE, config)
    return em.loglik_params(params, data.covariates)


def predictive_cdf(y, p_exceed: float, center0: float, var0: float, center1: float,
                   var1: float, q: float, nu: float | None = None):
    """One-day-ahead CDF of the two-state mixture.

    Below q the mass is (1 - p) times the truncated-normal CDF; above q it is
    (1 - p) plus p times the upper-component CDF, a truncated t when ``nu`` is
    given (omega integrated out) and a truncated normal otherwise.
    """
    y = np.asarray(y, float)
    lower = (1.0 - p_exceed) * dist.tn_cdf(y, center0, var0, -np.inf, q)
    if nu is None:
        upper_cdf = dist.tn_cdf(y, center1, var1, q, np.inf)
    else:
        upper_cdf = dist.tt_cdf(y, center1, var1, nu, q, np.inf)
    return np.where(y < q, lower, (1.0 - p_exceed) + p_exceed * upper_cdf)
