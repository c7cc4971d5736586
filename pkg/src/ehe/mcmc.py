"""Metropolis-within-Gibbs posterior sampling.

One sweep, per emission state k:

* adaptive random-walk Metropolis on (site intercepts v_k, annual effects,
  rho_k), where v_k = X beta_k + beta_0^k(s) is the joint "scalar plus field"
  site intercept with prior N(0, c^2 X X' + tau^2 R);
* elliptical slice update of the zero-mean field beta_0^k(s), then an exact
  draw of the regression coefficients given v_k (the "split");
* elliptical slice update of the log-variance field, conjugate updates of the
  field hyperparameters;

then the shared seasonal coefficients, omega (log-scale random walk), and the
probit block (random walk on the slopes, elliptical slice on the transition
intercept field with phi0 split off exactly, latent-Gaussian augmentation with a
conjugate slope draw).
Proposal shapes and scales adapt during burn-in only.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable

import numpy as np
from scipy import linalg

from . import dist
from .model import (SINGLE_STATE, TWO_STATE, CovariateScaling, ModelConfig, ModelData,
                    ParameterState, Transitions, design, emissions, zero_state)
from .spatial import SpatialField, build_cov
from .diagnostics import diagnostics  # noqa: F401  (re-exported)

__all__ = ["SamplerConfig", "PosteriorChain", "fit", "elliptical_slice",
           "update_gp_field", "update_probit_block", "update_omega", "diagnostics",
           "GibbsSampler", "n_retained"]


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 200_000
    burn_in: float = 0.5
    thin: int = 1
    seed: int = 0
    adapt_interval: int = 250
    target_accept: float = 0.25      # multi-dimensional random-walk blocks
    target_accept_small: float = 0.40  # seasonal pair, omega

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if not 0.0 <= self.burn_in < 1.0:
            raise ValueError("burn_in must lie in [0, 1)")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        known = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            if k in known:
                kw[k] = float(v) if k in ("burn_in", "target_accept", "target_accept_small") else int(v)
        return cls(**kw)


def n_retained(iterations: int, burn_in: float, thin: int) -> int:
    return int(math.floor(iterations * (1.0 - burn_in) + 1e-9)) // thin


@dataclass
class PosteriorChain:
    """Retained draws (after burn-in and thinning) plus everything needed to
    rebuild site covariates and reproduce the run."""

    kind: str
    draws: dict[str, np.ndarray]
    site_ids: list[str]
    coords: np.ndarray          # (S, 2) lon, lat
    elev: np.ndarray            # (S,) metres
    covariates: np.ndarray      # (S, 2) scaled elevation, latitude
    q: np.ndarray               # (S,)
    years: np.ndarray           # fitted calendar years
    model_config: ModelConfig
    sampler_config: SamplerConfig
    acceptance: dict[str, float] = field(default_factory=dict)

    def __len__(self):
        return len(next(iter(self.draws.values()))) if self.draws else 0

    @property
    def scaling(self) -> CovariateScaling:
        return self.model_config.scaling

    def state(self, i: int) -> ParameterState:
        return ParameterState.from_dict({k: v[i] for k, v in self.draws.items()})

    def states(self):
        for i in range(len(self)):
            yield self.state(i)


# ---------------------------------------------------------------------------
# generic kernels


def elliptical_slice(x, loglik: Callable[[np.ndarray], float], chol, rng,
                     mean=None, cur_ll: float | None = None, max_steps: int = 500):
    """One elliptical slice transition for a N(mean, chol chol') prior.

    Returns ``(new_x, new_loglik, n_evaluations)``.
    """
    x = np.asarray(x, float)
    mean = np.zeros_like(x) if mean is None else np.broadcast_to(mean, x.shape)
    cur_ll = loglik(x) if cur_ll is None else cur_ll
    nu = chol @ rng.standard_normal(x.size)
    log_y = cur_ll + math.log(rng.random())
    theta = rng.uniform(0.0, 2.0 * math.pi)
    lo, hi = theta - 2.0 * math.pi, theta
    x0 = x - mean
    for k in range(1, max_steps + 1):
        prop = x0 * math.cos(theta) + nu * math.sin(theta) + mean
        ll = loglik(prop)
        if ll > log_y:
            return prop, ll, k
        if theta < 0:
            lo = theta
        else:
            hi = theta
        theta = rng.uniform(lo, hi)
    return x, cur_ll, max_steps


def update_gp_field(gp: SpatialField, loglik: Callable[[np.ndarray], float],
                    rng) -> SpatialField:
    """Elliptical slice update of a GP field under its exponential-covariance prior."""
    chol = dist.jittered_cholesky(build_cov(gp.sites, gp.hyper))
    new, _, _ = elliptical_slice(gp.values, loglik, chol, rng, mean=gp.hyper.mean)
    return replace(gp, values=new)


class AdaptiveMetropolis:
    """Random-walk Metropolis block with Robbins-Monro scale adaptation and
    an optional proposal shape (Cholesky factor)."""

    def __init__(self, dim: int, target: float):
        self.dim = dim
        self.target = target
        self.chol = np.eye(dim)
        self.log_scale = math.log(2.38 / math.sqrt(dim))
        self.n_adapt = 0
        self.history: list[np.ndarray] = []
        self.counts = {"burn": [0, 0], "main": [0, 0]}

    def set_shape(self, cov, reset_scale: bool = False):
        cov = 0.5 * (cov + cov.T)
        self.chol = dist.jittered_cholesky(cov, base=1e-10 * max(np.mean(np.diag(cov)), 1e-300))
        if reset_scale:
            self.log_scale = math.log(2.38 / math.sqrt(self.dim))

    def step(self, x, logpost, cur, rng, adapting: bool):
        prop = x + math.exp(self.log_scale) * (self.chol @ rng.standard_normal(self.dim))
        new = logpost(prop)
        log_u = math.log(rng.random())
        diff = new - cur
        accept = bool(log_u < diff)
        key = "burn" if adapting else "main"
        self.counts[key][0] += accept
        self.counts[key][1] += 1
        if adapting:
            self.n_adapt += 1
            prob = 1.0 if diff >= 0 else (math.exp(diff) if np.isfinite(diff) else 0.0)
            self.log_scale += (prob - self.target) / (self.n_adapt + 1) ** 0.6
        if accept:
            x, cur = prop, new
        if adapting:
            self.history.append(np.array(x, float))
        return x, cur

    def refresh_from_history(self) -> bool:
        """Switch to the empirical covariance of the latter half of the burn-in
        history once it holds enough points."""
        h = self.history
        if len(h) < 20 * self.dim + 20:
            return False
        arr = np.array(h[len(h) // 2:])
        cov = np.atleast_2d(np.cov(arr, rowvar=False))
        if not np.all(np.isfinite(cov)) or np.any(np.diag(cov) <= 0):
            return False
        self.set_shape(cov)
        return True

    def rate(self, key="main") -> float:
        a, n = self.counts[key]
        return a / n if n else float("nan")


def _ar_least_squares(em, S: int, ny: int):
    """Least-squares AR(1) fit of one state's transitions.

    Regresses y_t on site indicators, year indicators (first year dropped),
    sin/cos and y_{t-1}; since mu enters as (1 - rho) mu, intercepts and annual
    effects are rescaled by 1 / (1 - rho).
    """
    if em.n < S + 4:
        return np.zeros(S), np.zeros(ny), np.zeros(2), 0.5, em.y - np.mean(em.y) if em.n else em.y
    A = np.zeros((em.n, S + ny - 1 + 3))
    A[np.arange(em.n), em.site] = 1.0
    yr = em.yr
    m = yr > 0
    A[np.flatnonzero(m), S + yr[m] - 1] = 1.0
    A[:, S + ny - 1:S + ny + 1] = em.trig
    A[:, -1] = em.yprev
    coef, *_ = np.linalg.lstsq(A, em.y, rcond=None)
    resid = em.y - A @ coef
    rho = float(np.clip(coef[-1], -0.9, 0.9))
    scale = 1.0 / (1.0 - rho)
    seen = np.bincount(em.site, minlength=S) > 0
    a = coef[:S]
    a = np.where(seen, a, a[seen].mean())
    gamma = np.concatenate([[0.0], coef[S:S + ny - 1] * scale])
    present = np.bincount(yr, minlength=ny) > 0
    gamma[~present] = 0.0
    return a * scale, gamma, coef[S + ny - 1:S + ny + 1] * scale, rho, resid


def _probit_irls(X, u, n_iter: int = 25, ridge: float = 1e-4):
    """Maximum-likelihood probit coefficients by iteratively reweighted least
    squares (small ridge for separated data)."""
    from scipy import special
    b = np.zeros(X.shape[1])
    for _ in range(n_iter):
        eta = np.clip(X @ b, -8, 8)
        pdf = np.exp(-0.5 * eta ** 2) / math.sqrt(2 * math.pi)
        cdf = np.clip(special.ndtr(eta), 1e-12, 1 - 1e-12)
        w = pdf ** 2 / (cdf * (1 - cdf))
        z = eta + (u - cdf) / pdf
        H = X.T @ (X * w[:, None]) + ridge * np.eye(X.shape[1])
        b_new = np.linalg.solve(H, X.T @ (w * z))
        if np.max(np.abs(b_new - b)) < 1e-8:
            return b_new
        b = b_new
    return b


# ---------------------------------------------------------------------------
# the Gibbs sampler


class GibbsSampler:
    """Holds data, configuration and the current ParameterState; every
    ``*_step`` method is one transition leaving the posterior invariant."""

    def __init__(self, data: ModelData, config: ModelConfig = ModelConfig(),
                 kind: str = TWO_STATE, init: ParameterState | None = None,
                 sconfig: SamplerConfig = SamplerConfig()):
        self.data = data
        self.config = config
        self.kind = kind
        self.sconfig = sconfig
        self.em = emissions(data, kind, config)
        self.K = len(self.em)
        self.tr = Transitions(data) if kind == TWO_STATE else None
        self.X = design(data.covariates)
        S = data.n_sites
        self.S = S
        self.R = data.correlation(config.decay)
        self.R_chol = dist.jittered_cholesky(self.R)
        self.R_inv = linalg.cho_solve((self.R_chol, True), np.eye(S))
        self.XtRiX = self.X.T @ self.R_inv @ self.X
        self.ones = np.ones((S, 1))
        self.state = init.copy() if init is not None else self.initial_state()
        self.state.check()
        p = self.state
        self.v = [self.X @ p.beta[k] + p.mean_field[k] for k in range(self.K)]
        self.ll = [self._comp_ll(k) for k in range(self.K)]
        self.tr_ll = self.tr.loglik_params(p) if self.tr is not None else 0.0
        if not (all(np.isfinite(self.ll)) and np.isfinite(self.tr_ll)):
            raise FloatingPointError(
                f"non-finite log-likelihood at initialisation: emissions={self.ll}, "
                f"transitions={self.tr_ll}")
        ny = data.n_years
        self.blocks = [AdaptiveMetropolis(S + ny, sconfig.target_accept) for _ in range(self.K)]
        self.lam_block = AdaptiveMetropolis(2, sconfig.target_accept_small)
        self.omega_block = AdaptiveMetropolis(1, sconfig.target_accept_small)
        n1 = self.em[1].n if self.K == 2 else 0
        # seed the omega step from the spread of its untruncated conjugate conditional
        self.omega_block.log_scale = math.log(2.38 / math.sqrt(0.5 * (config.nu + n1)))
        self.shift_block = AdaptiveMetropolis(1, sconfig.target_accept_small)
        self.phi_block = AdaptiveMetropolis(4, sconfig.target_accept) if self.tr is not None else None
        if self.tr is not None:
            self._phi_prec = self.tr.X.T @ self.tr.X + np.eye(4) / config.coef_sd ** 2
            self._phi_prec_chol = linalg.cholesky(self._phi_prec, lower=True)
            self.phi_block.set_shape(linalg.cho_solve((self._phi_prec_chol, True), np.eye(4)))
        self.ess_evals: dict[str, list[int]] = {}
        self.last_z = None
        self.refresh_shapes()

    # -- initialisation -----------------------------------------------------

    def initial_state(self) -> ParameterState:
        """Start from least-squares fits of each state's autoregression (site
        intercepts, annual effects, seasonal terms, rho) and a probit IRLS fit of
        the transition coefficients, so burn-in starts near the posterior."""
        d = self.data
        S, ny = d.n_sites, d.n_years
        p = zero_state(S, ny, self.kind)
        lam_est = []
        for k, em in enumerate(self.em):
            v, gamma, lam, rho, resid = _ar_least_squares(em, S, ny)
            p.rho[k] = rho
            p.gamma[k] = gamma
            lam_est.append((em.n, lam))
            beta = np.linalg.lstsq(self.X, v, rcond=None)[0]
            p.beta[k] = beta
            p.mean_field[k] = v - self.X @ beta
            p.tau2_mean[k] = max(float(np.var(p.mean_field[k])), 0.1)
            pooled = float(np.var(resid)) if resid.size > 1 else 1.0
            pooled = pooled if pooled > 0 else 1.0
            for s in range(S):
                r = resid[em.site == s]
                var = float(np.var(r)) if r.size > 1 else pooled
                p.logvar_field[k, s] = math.log(var if var > 0 else pooled)
            p.logvar_mean[k] = float(np.mean(p.logvar_field[k]))
            p.tau2_logvar[k] = max(float(np.var(p.logvar_field[k])), 0.1)
        n_tot = sum(n for n, _ in lam_est)
        p.lam = sum(n * l for n, l in lam_est) / max(n_tot, 1)
        if self.kind == TWO_STATE:
            tr = Transitions(d)
            p.phi = _probit_irls(np.column_stack([np.ones(tr.n), tr.X]), tr.u)
            p.trans_field = np.zeros(S)
            p.tau2_trans = 0.1
        return p

    # -- helpers ------------------------------------------------------------

    def _center(self, k, v=None, gamma=None, rho=None, lam=None):
        p = self.state
        return self.em[k].center(self.v[k] if v is None else v,
                                 p.gamma[k] if gamma is None else gamma,
                                 p.rho[k] if rho is None else rho,
                                 p.lam if lam is None else lam)

    def _comp_ll(self, k, **kw):
        p = self.state
        return self.em[k].loglik(self._center(k, **kw), kw.get("logvar", p.logvar_field[k]),
                                 p.omega)

    def _prior_v_cov(self, k):
        c2 = self.config.coef_sd ** 2
        return c2 * self.X @ self.X.T + self.state.tau2_mean[k] * self.R

    def _emission_var(self, k):
        p = self.state
        lv = p.logvar_field[k][self.em[k].site]
        if self.em[k].kind == "above":
            lv = lv + math.log(p.omega)
        return np.exp(lv)

    def _record_ess(self, name, n):
        self.ess_evals.setdefault(name, []).append(n)

    # -- proposal shapes ----------------------------------------------------

    def _mean_block_theta(self, k):
        p = self.state
        return np.concatenate([self.v[k], p.gamma[k, 1:], [p.rho[k]]])

    def _split_theta(self, theta):
        S = self.S
        v = theta[:S]
        gamma = np.concatenate([[0.0], theta[S:-1]])
        return v, gamma, theta[-1]

    def _gauss_newton_cov(self, k):
        """Inverse of J' W J + prior precision for the (v, gamma, rho) block,
        with J the Jacobian of the autoregressive centre."""
        theta = self._mean_block_theta(k)
        em = self.em[k]
        d = theta.size
        if em.n:
            base = self._center(k, *self._split_theta(theta))
            J = np.empty((em.n, d))
            for j in range(d):
                t2 = theta.copy()
                t2[j] += 1e-3
                J[:, j] = (self._center(k, *self._split_theta(t2)) - base) / 1e-3
            w = 1.0 / self._emission_var(k)
            H = J.T @ (J * w[:, None])
        else:
            H = np.zeros((d, d))
        S = self.S
        H[:S, :S] += np.linalg.inv(self._prior_v_cov(k))
        idx = np.arange(S, d - 1)
        H[idx, idx] += 1.0 / self.config.annual_sd ** 2
        H[-1, -1] += 3.0
        return np.linalg.inv(H)

    def _lam_cov(self):
        H = np.eye(2) / self.config.coef_sd ** 2
        p = self.state
        for k, em in enumerate(self.em):
            if em.n:
                J = em.trig - em.sign * p.rho[k] * em.trig_prev
                H += J.T @ (J / self._emission_var(k)[:, None])
        return np.linalg.inv(H)

    def refresh_shapes(self):
        for k, blk in enumerate(self.blocks):
            if not blk.refresh_from_history():
                blk.set_shape(self._gauss_newton_cov(k))
        if not self.lam_block.refresh_from_history():
            self.lam_block.set_shape(self._lam_cov())
        if self.phi_block is not None:
            self.phi_block.refresh_from_history()

    # -- emission blocks ----------------------------------------------------

    def mean_block_step(self, k, rng, adapting=False):
        """Joint random walk on (v_k, gamma_k[1:], rho_k)."""
        cfg = self.config
        S = self.S
        chol_v = dist.jittered_cholesky(self._prior_v_cov(k))

        def prior(theta):
            v, gamma, rho = self._split_theta(theta)
            if abs(rho) >= 1.0:
                return -np.inf
            a = linalg.solve_triangular(chol_v, v, lower=True)
            return -0.5 * a @ a - 0.5 * np.sum(gamma ** 2) / cfg.annual_sd ** 2

        def logpost(theta):
            lp = prior(theta)
            if not np.isfinite(lp):
                return -np.inf
            v, gamma, rho = self._split_theta(theta)
            return lp + self._comp_ll(k, v=v, gamma=gamma, rho=rho)

        theta = self._mean_block_theta(k)
        cur = prior(theta) + self.ll[k]
        new_theta, new = self.blocks[k].step(theta, logpost, cur, rng, adapting)
        if new_theta is not theta:
            v, gamma, rho = self._split_theta(new_theta)
            self.v[k] = v
            self.state.gamma[k] = gamma
            self.state.rho[k] = rho
            self.ll[k] = new - prior(new_theta)
        # the block moved v_k marginally over beta_k; redraw beta_k | v_k before
        # anything conditions on the (beta_k, field) decomposition again
        self.split_step(k, rng)

    def site_intercept_step(self, k, rng):
        """Elliptical slice on the mean field beta_0^k(s) ~ N(0, tau^2 R) with the
        regression part held fixed, then the exact split of v_k."""
        em = self.em[k]
        p = self.state
        mu_t, mu_prev = em.mu_pair(np.zeros(self.S), p.gamma[k], p.lam)
        r = em.sign * p.rho[k]
        xb = self.X @ p.beta[k]
        scale = 1.0 - r
        rest = mu_t + r * (em.yprev - mu_prev) + scale * xb[em.site]
        lv = p.logvar_field[k]

        def ll(w):
            return em.loglik(rest + scale * w[em.site], lv, p.omega)

        w0 = self.v[k] - xb
        chol = math.sqrt(p.tau2_mean[k]) * self.R_chol
        w, self.ll[k], n = elliptical_slice(w0, ll, chol, rng, cur_ll=self.ll[k])
        self.v[k] = xb + w
        self._record_ess(f"site_intercept{k}", n)
        self.split_step(k, rng)

    def split_step(self, k, rng):
        """Draw (beta_k, field_k) given their sum v_k = X beta_k + field_k."""
        p = self.state
        tau2 = p.tau2_mean[k]
        prec = self.XtRiX / tau2 + np.eye(3) / self.config.coef_sd ** 2
        c = linalg.cholesky(prec, lower=True)
        mean = linalg.cho_solve((c, True), self.X.T @ self.R_inv @ self.v[k] / tau2)
        beta = mean + linalg.solve_triangular(c.T, rng.standard_normal(3), lower=False)
        p.beta[k] = beta
        p.mean_field[k] = self.v[k] - self.X @ beta

    def logvar_step(self, k, rng):
        em = self.em[k]
        p = self.state
        m = self._center(k)

        def ll(lv):
            return em.loglik(m, lv, p.omega)

        chol = math.sqrt(p.tau2_logvar[k]) * self.R_chol
        p.logvar_field[k], self.ll[k], n = elliptical_slice(
            p.logvar_field[k], ll, chol, rng, mean=p.logvar_mean[k], cur_ll=self.ll[k])
        self._record_ess(f"logvar{k}", n)

    def hyper_step(self, k, rng):
        cfg = self.config
        p = self.state
        a = cfg.ig_shape + 0.5 * self.S
        w = p.mean_field[k]
        p.tau2_mean[k] = dist.invgamma_sample(a, cfg.ig_rate + 0.5 * w @ self.R_inv @ w, rng)
        lv = p.logvar_field[k]
        ri1 = self.R_inv @ np.ones(self.S)
        prec = 1.0 / cfg.hypermean_sd ** 2 + ri1.sum() / p.tau2_logvar[k]
        mean = (ri1 @ lv / p.tau2_logvar[k]) / prec
        p.logvar_mean[k] = mean + rng.standard_normal() / math.sqrt(prec)
        dev = lv - p.logvar_mean[k]
        p.tau2_logvar[k] = dist.invgamma_sample(a, cfg.ig_rate + 0.5 * dev @ self.R_inv @ dev, rng)

    # -- shared blocks ------------------------------------------------------

    def lam_step(self, rng, adapting=False):
        c2 = self.config.coef_sd ** 2

        def parts(lam):
            return [self._comp_ll(k, lam=lam) for k in range(self.K)]

        def logpost(lam):
            return -0.5 * lam @ lam / c2 + sum(parts(lam))

        lam0 = self.state.lam.copy()
        cur = -0.5 * lam0 @ lam0 / c2 + sum(self.ll)
        lam, _ = self.lam_block.step(lam0, logpost, cur, rng, adapting)
        if lam is not lam0:
            self.state.lam = lam
            self.ll = parts(lam)

    def omega_step(self, rng, adapting=False):
        """Log-scale random walk on omega; truncation breaks the conjugacy."""
        if self.K != 2:
            return
        em = self.em[1]
        p = self.state
        m = self._center(1)
        lv = p.logvar_field[1]
        a = 0.5 * self.config.nu

        def logpost(x):
            w = math.exp(x[0])
            return em.loglik(m, lv, w) + float(dist.invgamma_logpdf(w, a, a)) + x[0]

        x0 = np.array([math.log(p.omega)])
        cur = self.ll[1] + float(dist.invgamma_logpdf(p.omega, a, a)) + x0[0]
        x, _ = self.omega_block.step(x0, logpost, cur, rng, adapting)
        if x is not x0:
            p.omega = math.exp(x[0])
            self.ll[1] = em.loglik(m, lv, p.omega)

    def omega_shift_step(self, rng, adapting=False):
        """Move log omega by e and the state-1 log-variance field and its mean by
        -e. The emission variances omega * sigma_1^2(s) are unchanged, so only
        the omega and hypermean priors enter the acceptance ratio."""
        if self.K != 2:
            return
        p = self.state
        a = 0.5 * self.config.nu
        sd2 = self.config.hypermean_sd ** 2

        def logpost(x):
            w = math.exp(x[0])
            m = p.logvar_mean[1] - (x[0] - math.log(p.omega))
            return float(dist.invgamma_logpdf(w, a, a)) + x[0] - 0.5 * m * m / sd2

        x0 = np.array([math.log(p.omega)])
        x, _ = self.shift_block.step(x0, logpost, logpost(x0), rng, adapting)
        if x is not x0:
            e = x[0] - x0[0]
            p.omega = math.exp(x[0])
            p.logvar_field[1] -= e
            p.logvar_mean[1] -= e

    # -- probit block -------------------------------------------------------

    def _vphi(self):
        p = self.state
        return p.phi[0] + p.trans_field

    def probit_step(self, rng, adapting=False):
        tr = self.tr
        p = self.state
        cfg = self.config
        c2 = cfg.coef_sd ** 2

        # random walk on the slopes under the marginal probit likelihood
        vphi = self._vphi()

        def logpost(b):
            return -0.5 * b @ b / c2 + tr.loglik_eta(tr.eta(vphi, b))

        b0 = p.phi[1:].copy()
        cur = -0.5 * b0 @ b0 / c2 + self.tr_ll
        b, new = self.phi_block.step(b0, logpost, cur, rng, adapting)
        if b is not b0:
            p.phi[1:] = b
            self.tr_ll = new + 0.5 * b @ b / c2

        # elliptical slice on the field phi0(s), then phi0 given phi0 + phi0(s)
        rest = tr.X @ p.phi[1:] + p.phi[0]

        def ll(f):
            return tr.loglik_eta(f[tr.site] + rest)

        f, self.tr_ll, n = elliptical_slice(p.trans_field, ll,
                                            math.sqrt(p.tau2_trans) * self.R_chol, rng,
                                            cur_ll=self.tr_ll)
        vphi = p.phi[0] + f
        self._record_ess("trans", n)
        prec = self.R_inv.sum() / p.tau2_trans + 1.0 / c2
        mean = (self.R_inv.sum(axis=0) @ vphi / p.tau2_trans) / prec
        p.phi[0] = mean + rng.standard_normal() / math.sqrt(prec)
        p.trans_field = vphi - p.phi[0]

        # latent Gaussian augmentation and conjugate slope draw
        eta = vphi[tr.site] + rest
        lower = np.where(tr.u == 1, 0.0, -np.inf)
        upper = np.where(tr.u == 1, np.inf, 0.0)
        z = dist.tn_sample(eta, 1.0, lower, upper, rng)
        self.last_z = z
        rhs = tr.X.T @ (z - vphi[tr.site])
        mean = linalg.cho_solve((self._phi_prec_chol, True), rhs)
        p.phi[1:] = mean + linalg.solve_triangular(self._phi_prec_chol.T,
                                                   rng.standard_normal(4), lower=False)
        self.tr_ll = tr.loglik_params(p)

        a = cfg.ig_shape + 0.5 * self.S
        f = p.trans_field
        p.tau2_trans = float(dist.invgamma_sample(a, cfg.ig_rate + 0.5 * f @ self.R_inv @ f, rng))

    # -- sweep --------------------------------------------------------------

    def sweep(self, rng, adapting=False):
        for k in range(self.K):
            self.mean_block_step(k, rng, adapting)
            self.site_intercept_step(k, rng)
            self.logvar_step(k, rng)
            self.hyper_step(k, rng)
        self.lam_step(rng, adapting)
        if self.K == 2:
            self.omega_step(rng, adapting)
            self.omega_shift_step(rng, adapting)
            self.probit_step(rng, adapting)

    def acceptance(self) -> dict[str, float]:
        out = {f"mean_block{k}": b.rate() for k, b in enumerate(self.blocks)}
        out["seasonal"] = self.lam_block.rate()
        if self.K == 2:
            out["omega"] = self.omega_block.rate()
            out["omega_shift"] = self.shift_block.rate()
            out["phi_slopes"] = self.phi_block.rate()
        for name, ns in self.ess_evals.items():
            out[f"ess_evals_{name}"] = float(np.mean(ns))
        return out


# ---------------------------------------------------------------------------
# public entry points


def fit(data: ModelData, config: ModelConfig = ModelConfig(),
        sconfig: SamplerConfig = SamplerConfig(), kind: str = TWO_STATE,
        init: ParameterState | None = None,
        progress: Callable[[int, int], None] | None = None) -> PosteriorChain:
    """Run one chain and return its retained draws.

    With zero iterations the chain holds only the initial state.
    """
    if kind not in (TWO_STATE, SINGLE_STATE):
        raise ValueError(f"unknown model kind {kind!r}")
    if data.n_sites < 2:
        raise ValueError("at least two sites are required")
    if len(data.tr_y) == 0:
        raise ValueError("no modelled transitions (need consecutive observed days)")
    rng = np.random.default_rng(sconfig.seed)
    g = GibbsSampler(data, config, kind, init, sconfig)
    n_post = int(math.floor(sconfig.iterations * (1.0 - sconfig.burn_in) + 1e-9))
    n_burn = sconfig.iterations - n_post
    n_keep = n_post // sconfig.thin if sconfig.iterations else 1
    template = g.state.as_dict()
    draws = {k: np.empty((n_keep,) + v.shape) for k, v in template.items()}
    if sconfig.iterations == 0:
        for k, v in template.items():
            draws[k][0] = v
    j = 0
    for i in range(sconfig.iterations):
        adapting = i < n_burn
        g.sweep(rng, adapting)
        if adapting and (i + 1) % sconfig.adapt_interval == 0:
            g.refresh_shapes()
        if not adapting and (i - n_burn + 1) % sconfig.thin == 0 and j < n_keep:
            for k, v in g.state.as_dict().items():
                draws[k][j] = v
            j += 1
        if progress is not None:
            progress(i + 1, sconfig.iterations)
    return PosteriorChain(
        kind=kind, draws=draws, site_ids=data.site_ids, coords=data.coords,
        elev=np.array([s.elev for s in data.stations], float),
        covariates=data.covariates, q=data.q, years=data.years,
        model_config=replace(config, scaling=data.scaling), sampler_config=sconfig,
        acceptance=g.acceptance())


def update_probit_block(params: ParameterState, data: ModelData, rng,
                        config: ModelConfig = ModelConfig()) -> ParameterState:
    """One probit-block transition (slopes, transition intercept field, latents)."""
    g = GibbsSampler(data, config, TWO_STATE, params)
    g.probit_step(rng)
    return g.state


def update_omega(params: ParameterState, data: ModelData, rng,
                 config: ModelConfig = ModelConfig()) -> ParameterState:
    g = GibbsSampler(data, config, TWO_STATE, params)
    g.omega_step(rng)
    return g.state
