"""Truncated normal / truncated t kernels, inverse-gamma draws, probit link and
Cholesky-based multivariate normal sampling.

All samplers take an explicit ``numpy.random.Generator``; identical seeds give
identical draws.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

NU = 3.0
TAIL_SWITCH = 5.0  # standardised distance beyond which tn_sample uses rejection
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class TruncNormalParams:
    loc: float
    scale2: float
    lower: float = -np.inf
    upper: float = np.inf

    def __post_init__(self):
        _check_bounds(self.lower, self.upper, self.scale2)

    def sample(self, rng, size=None):
        return tn_sample(self.loc, self.scale2, self.lower, self.upper, rng, size)

    def logpdf(self, x):
        return tn_logpdf(x, self.loc, self.scale2, self.lower, self.upper)

    def cdf(self, x):
        return tn_cdf(x, self.loc, self.scale2, self.lower, self.upper)


@dataclass(frozen=True)
class TruncTParams:
    loc: float
    scale2: float
    nu: float = NU
    lower: float = -np.inf
    upper: float = np.inf

    def __post_init__(self):
        _check_bounds(self.lower, self.upper, self.scale2)
        if not self.nu > 2.0:
            raise ValueError("degrees of freedom must exceed 2")

    def sample(self, rng, size=None):
        return tt_sample(self.loc, self.scale2, self.nu, self.lower, self.upper, rng, size)

    def logpdf(self, x):
        return tt_logpdf(x, self.loc, self.scale2, self.nu, self.lower, self.upper)

    def cdf(self, x):
        return tt_cdf(x, self.loc, self.scale2, self.nu, self.lower, self.upper)


def _check_bounds(lower, upper, scale2):
    if np.any(np.asarray(lower) >= np.asarray(upper)):
        raise ValueError("truncation requires lower < upper")
    if np.any(~(np.asarray(scale2) > 0)):
        raise ValueError("scale2 must be positive")


def log_norm_mass(a, b):
    """log(Phi(b) - Phi(a)) for a < b, accurate in both tails."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    # reflect so that the interval sits on the side where Phi is small
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    log_hi = special.log_ndtr(hi)
    log_lo = special.log_ndtr(lo)
    with np.errstate(divide="ignore"):
        out = log_hi + np.log1p(-np.exp(log_lo - log_hi))
    return out if out.ndim else float(out)


def tn_logpdf(x, loc, scale2, lower=-np.inf, upper=np.inf):
    """Log density of N(loc, scale2) restricted to (lower, upper); -inf outside."""
    x = np.asarray(x, float)
    sd = np.sqrt(scale2)
    z = (x - loc) / sd
    out = (-0.5 * z * z - np.log(sd) - 0.5 * LOG_2PI
           - log_norm_mass((lower - loc) / sd, (upper - loc) / sd))
    out = np.where((x >= lower) & (x <= upper), out, -np.inf)
    return out if out.ndim else float(out)


def tn_cdf(x, loc, scale2, lower=-np.inf, upper=np.inf):
    x = np.asarray(x, float)
    sd = np.sqrt(scale2)
    a = (lower - loc) / sd
    b = (upper - loc) / sd
    xc = np.clip((x - loc) / sd, a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(log_norm_mass(a, xc) - log_norm_mass(a, b))
    out = np.where(xc <= a, 0.0, np.where(xc >= b, 1.0, out))
    return out if out.ndim else float(out)


def _tail_sample(a, b, rng):
    """Standard normal restricted to [a, b] with a >= TAIL_SWITCH (vectorised).

    Exponential proposals with rate a (Robert, 1995); narrow intervals use
    uniform proposals instead, whose acceptance does not collapse.
    """
    out = np.empty(a.shape)
    todo = np.arange(a.size)
    narrow = (b - a) < 1.0 / a
    while todo.size:
        aa, bb = a[todo], b[todo]
        nar = narrow[todo]
        z = np.where(nar, aa + (bb - aa) * rng.random(todo.size),
                     aa + rng.standard_exponential(todo.size) / aa)
        logacc = np.where(nar, -0.5 * (z * z - aa * aa), -0.5 * (z - aa) ** 2)
        ok = (np.log(rng.random(todo.size)) <= logacc) & (z <= bb)
        out[todo[ok]] = z[ok]
        todo = todo[~ok]
    return out


def _std_tn(a, b, rng):
    """Standard normal draws restricted to [a, b], elementwise."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    a = a.ravel().copy()
    b = b.ravel().copy()
    z = np.empty(a.size)
    upper_tail = a >= TAIL_SWITCH
    lower_tail = b <= -TAIL_SWITCH
    body = ~(upper_tail | lower_tail)
    if upper_tail.any():
        z[upper_tail] = _tail_sample(a[upper_tail], b[upper_tail], rng)
    if lower_tail.any():
        z[lower_tail] = -_tail_sample(-b[lower_tail], -a[lower_tail], rng)
    if body.any():
        ab, bb = a[body], b[body]
        u = rng.random(ab.size)
        flip = ab > 0
        # invert on the side of the origin where Phi keeps precision
        lo = np.where(flip, special.ndtr(-bb), special.ndtr(ab))
        hi = np.where(flip, special.ndtr(-ab), special.ndtr(bb))
        p = lo + u * (hi - lo)
        zz = special.ndtri(p)
        z[body] = np.clip(np.where(flip, -zz, zz), ab, bb)
    return z


def tn_sample(loc, scale2, lower=-np.inf, upper=np.inf, rng=None, size=None):
    """Draw from N(loc, scale2) truncated to (lower, upper).

    Inverse-CDF in the body of the distribution, exponential rejection when the
    truncation region lies 5 or more standard deviations from ``loc``.
    Arguments broadcast; ``size`` forces an output shape.
    """
    rng = np.random.default_rng() if rng is None else rng
    _check_bounds(lower, upper, scale2)
    loc, scale2, lower, upper = np.broadcast_arrays(
        *(np.asarray(v, float) for v in (loc, scale2, lower, upper)))
    if size is not None:
        loc, scale2, lower, upper = (np.broadcast_to(v, size) for v in
                                     (loc, scale2, lower, upper))
    sd = np.sqrt(scale2)
    z = _std_tn((lower - loc) / sd, (upper - loc) / sd, rng).reshape(loc.shape)
    out = np.clip(loc + sd * z, lower, upper)
    return out if out.ndim else float(out)


def t_logpdf(x, loc, scale2, nu=NU):
    """Location-scale Student-t log density; stable for very large ``nu``."""
    z2 = (np.asarray(x, float) - loc) ** 2 / scale2
    return (-special.betaln(0.5 * nu, 0.5) - 0.5 * np.log(nu) - 0.5 * np.log(scale2)
            - 0.5 * (nu + 1.0) * np.log1p(z2 / nu))


def log_t_mass(a, b, nu=NU):
    """log(T(b) - T(a)) for the standard t with ``nu`` degrees of freedom."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    with np.errstate(divide="ignore"):
        out = np.log(special.stdtr(nu, hi) - special.stdtr(nu, lo))
    return out if out.ndim else float(out)


def tt_logpdf(x, loc, scale2, nu=NU, lower=-np.inf, upper=np.inf):
    """Log density of the t(nu, loc, scale2) restricted to (lower, upper)."""
    x = np.asarray(x, float)
    sd = np.sqrt(scale2)
    out = t_logpdf(x, loc, scale2, nu) - log_t_mass((lower - loc) / sd,
                                                     (upper - loc) / sd, nu)
    out = np.where((x >= lower) & (x <= upper), out, -np.inf)
    return out if out.ndim else float(out)


def tt_cdf(x, loc, scale2, nu=NU, lower=-np.inf, upper=np.inf):
    x = np.asarray(x, float)
    sd = np.sqrt(scale2)
    a = (lower - loc) / sd
    b = (upper - loc) / sd
    xc = np.clip((x - loc) / sd, a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(log_t_mass(a, xc, nu) - log_t_mass(a, b, nu))
    out = np.where(xc <= a, 0.0, np.where(xc >= b, 1.0, out))
    return out if out.ndim else float(out)


def tt_sample(loc, scale2, nu=NU, lower=-np.inf, upper=np.inf, rng=None, size=None,
              min_mass=0.05):
    """Draw from the t(nu, loc, scale2) restricted to (lower, upper).

    Uses the scale mixture: omega ~ InvGamma(nu/2, nu/2), then a truncated
    normal with variance omega * scale2. Under truncation omega must come from
    its conditional given the region, so each prior omega is kept with
    probability equal to the normal mass of the region. Regions holding less
    than ``min_mass`` of the t fall back to inverting the t CDF.
    """
    rng = np.random.default_rng() if rng is None else rng
    if not nu > 0:
        raise ValueError("nu must be positive")
    _check_bounds(lower, upper, scale2)
    loc, scale2, lower, upper = np.broadcast_arrays(
        *(np.asarray(v, float) for v in (loc, scale2, lower, upper)))
    if size is not None:
        loc, scale2, lower, upper = (np.broadcast_to(v, size) for v in
                                     (loc, scale2, lower, upper))
    shape = loc.shape
    loc, scale2, lower, upper = (v.ravel() for v in (loc, scale2, lower, upper))
    sd = np.sqrt(scale2)
    a, b = (lower - loc) / sd, (upper - loc) / sd
    mass = np.exp(log_t_mass(a, b, nu))
    mass = np.atleast_1d(mass)
    out = np.empty(loc.size)

    rare = mass < min_mass
    if rare.any():
        ar, br = a[rare], b[rare]
        flip = ar > 0
        lo = np.where(flip, special.stdtr(nu, -br), special.stdtr(nu, ar))
        hi = np.where(flip, special.stdtr(nu, -ar), special.stdtr(nu, br))
        p = lo + rng.random(ar.size) * (hi - lo)
        zz = special.stdtrit(nu, p)
        z = np.clip(np.where(flip, -zz, zz), ar, br)
        out[rare] = loc[rare] + sd[rare] * z

    todo = np.flatnonzero(~rare)
    omega = np.empty(loc.size)
    while todo.size:
        w = invgamma_sample(0.5 * nu, 0.5 * nu, rng, size=todo.size)
        sw = np.sqrt(w)
        keep = np.log(rng.random(todo.size)) <= log_norm_mass(a[todo] / sw, b[todo] / sw)
        omega[todo[keep]] = w[keep]
        todo = todo[~keep]
    common = ~rare
    if common.any():
        out[common] = tn_sample(loc[common], omega[common] * scale2[common],
                                lower[common], upper[common], rng)
    out = out.reshape(shape)
    return out if out.ndim else float(out)


def invgamma_sample(shape, rate, rng=None, size=None):
    """Inverse-gamma draws with density proportional to x**(-shape-1) exp(-rate/x)."""
    rng = np.random.default_rng() if rng is None else rng
    if np.any(np.asarray(shape) <= 0) or np.any(np.asarray(rate) <= 0):
        raise ValueError("shape and rate must be positive")
    return rate / rng.gamma(shape, 1.0, size=size)


def invgamma_logpdf(x, shape, rate):
    x = np.asarray(x, float)
    return shape * np.log(rate) - special.gammaln(shape) - (shape + 1) * np.log(x) - rate / x


def probit(p):
    p = np.asarray(p, float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("probit requires p in (0, 1)")
    out = special.ndtri(p)
    return out if out.ndim else float(out)


def probit_inv(eta):
    out = special.ndtr(np.asarray(eta, float))
    return out if np.ndim(out) else float(out)


def jittered_cholesky(cov, max_tries: int = 8, base: float | None = None):
    """Lower Cholesky factor, adding diagonal jitter when the matrix is not PD.

    Jitter starts at ``1e-10 * mean(diag)`` (or ``base``) and doubles up to
    ``max_tries`` times.
    """
    cov = np.asarray(cov, float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * float(np.mean(np.diag(cov))) if base is None else base
    if not jitter > 0:
        jitter = 1e-10
    eye = np.eye(cov.shape[0])
    for _ in range(max_tries):
        try:
            return np.linalg.cholesky(cov + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise np.linalg.LinAlgError("covariance is not positive definite after jitter")


def mvn_chol_sample(mean, cov, rng=None, size=None):
    """Multivariate normal draw(s) through a (jittered) Cholesky factor."""
    rng = np.random.default_rng() if rng is None else rng
    mean = np.asarray(mean, float)
    chol = jittered_cholesky(cov)
    if size is None:
        return mean + chol @ rng.standard_normal(mean.size)
    z = rng.standard_normal((size, mean.size))
    return mean + z @ chol.T
