"""Plot-ready inference tables computed from a PosteriorChain."""
from __future__ import annotations

import numpy as np
from scipy import special

from .diagnostics import diagnostics
from .mcmc import PosteriorChain
from .model import seasonal

COEF_LABELS = ("Intercept", "Elevation", "Latitude")
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def _check(chain: PosteriorChain):
    if len(chain) == 0:
        raise ValueError("empty chain")


def _summ(x):
    x = np.asarray(x, float)
    return float(x.mean()), float(np.quantile(x, 0.05)), float(np.quantile(x, 0.95))


def coefficient_table(chain: PosteriorChain) -> list[tuple[str, str, float, float, float]]:
    """(parameter, state, mean, q05, q95): intercept, elevation, latitude and
    autoregressive coefficient per state, then the shared and transition terms."""
    _check(chain)
    d = chain.draws
    K = d["beta"].shape[1]
    rows = []
    for k in range(K):
        for j, lab in enumerate(COEF_LABELS):
            rows.append((lab, str(k), *_summ(d["beta"][:, k, j])))
        rows.append(("Autoregressive coefficient", str(k), *_summ(d["rho"][:, k])))
    rows.append(("Seasonal sin", "shared", *_summ(d["lam"][:, 0])))
    rows.append(("Seasonal cos", "shared", *_summ(d["lam"][:, 1])))
    if "phi" in d:
        names = ("Transition intercept", "Transition slope", "Transition slope above q",
                 "Transition sin", "Transition cos")
        for j, lab in enumerate(names):
            rows.append((lab, "transition", *_summ(d["phi"][:, j])))
        rows.append(("Omega", "1", *_summ(d["omega"])))
    return rows


def annual_effects(chain: PosteriorChain):
    """(year, state, mean, q05, q25, median, q75, q95) per fitted year; the
    first year is pinned at zero."""
    _check(chain)
    g = chain.draws["gamma"]
    rows = []
    for k in range(g.shape[1]):
        for j, year in enumerate(chain.years):
            x = g[:, k, j]
            rows.append((int(year), k, float(x.mean()),
                         *[float(v) for v in np.quantile(x, QUANTILES)]))
    return rows


def spatial_effects(chain: PosteriorChain):
    """(site_id, field, mean, q05, q95) for every spatial field and site."""
    _check(chain)
    d = chain.draws
    rows = []
    K = d["mean_field"].shape[1]
    for i, sid in enumerate(chain.site_ids):
        for k in range(K):
            rows.append((sid, f"mean{k}", *_summ(d["mean_field"][:, k, i])))
            rows.append((sid, f"logvar{k}", *_summ(d["logvar_field"][:, k, i])))
        if "trans_field" in d:
            rows.append((sid, "trans", *_summ(d["trans_field"][:, i])))
    return rows


def transition_curves(chain: PosteriorChain, offsets=(-2.0, 0.0, 2.0), site: int | None = None,
                      length: int = 365):
    """Posterior-mean P(exceed tomorrow) by day of year for y_{t-1} = q + offset.

    Without ``site`` the spatial transition effect is set to zero.
    Returns rows (day_of_year, offset, probability).
    """
    _check(chain)
    if "phi" not in chain.draws:
        raise ValueError("transition curves need a two-state chain")
    phi = chain.draws["phi"]
    base = phi[:, 0] + (chain.draws["trans_field"][:, site] if site is not None else 0.0)
    doy = np.arange(1, length + 1)
    s, c = seasonal(doy, np.full(length, length))
    rows = []
    for d in offsets:
        eta = (base[:, None] + phi[:, 1:2] * d + phi[:, 2:3] * max(d, 0.0)
               + phi[:, 3:4] * s[None, :] + phi[:, 4:5] * c[None, :])
        p = special.ndtr(eta).mean(axis=0)
        rows.extend((int(t), float(d), float(v)) for t, v in zip(doy, p))
    return rows


def diagnostics_table(chain: PosteriorChain):
    """(parameter, mean, sd, q05, q95, ess, rhat, rhat_defined) for every scalar."""
    dg = diagnostics(chain)
    return [(name, s.mean, s.sd, s.q05, s.q95, s.ess, s.rhat, int(s.rhat_defined))
            for name, s in dg.params.items()]
