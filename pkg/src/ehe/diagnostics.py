"""Posterior summaries: mean, sd, 5%/95% quantiles, effective sample size and
split R-hat for every scalar parameter of a chain."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ParamSummary:
    mean: float
    sd: float
    q05: float
    q95: float
    ess: float
    rhat: float
    rhat_defined: bool


@dataclass
class Diagnostics:
    params: dict[str, ParamSummary]
    acceptance: dict[str, float] = field(default_factory=dict)
    n_draws: int = 0

    def __getitem__(self, name: str) -> ParamSummary:
        return self.params[name]


def autocorr(x: np.ndarray) -> np.ndarray:
    """Sample autocorrelation via FFT (biased normalisation)."""
    n = len(x)
    x = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    ac = np.fft.irfft(f * np.conj(f), m)[:n]
    return ac / ac[0]


def effective_sample_size(x) -> float:
    """ESS with Geyer's initial monotone positive sequence."""
    x = np.asarray(x, float)
    n = len(x)
    if n < 4 or np.var(x) == 0:
        return float("nan")
    rho = autocorr(x)
    pairs = rho[: n - (n % 2)].reshape(-1, 2).sum(axis=1)
    # truncate at the first non-positive pair, then enforce monotone decrease
    neg = np.flatnonzero(pairs <= 0)
    pairs = pairs[: neg[0]] if neg.size else pairs
    if pairs.size == 0:
        return float(n)
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    return float(n / max(tau, 1.0 / np.log10(max(n, 10))))


def split_rhat(x) -> float:
    """Split R-hat of a single chain; NaN when the within-half variance is zero."""
    x = np.asarray(x, float)
    n = len(x) // 2
    if n < 2:
        return float("nan")
    halves = np.stack([x[:n], x[-n:]])
    w = halves.var(axis=1, ddof=1).mean()
    if w == 0:
        return float("nan")
    b = n * halves.mean(axis=1).var(ddof=1)
    var_plus = (n - 1) / n * w + b / n
    return float(np.sqrt(var_plus / w))


def flat_names(draws: dict[str, np.ndarray]):
    """Yield (label, series) for every scalar component of the stored blocks."""
    for name, arr in draws.items():
        arr = np.asarray(arr)
        if arr.ndim == 1:
            yield name, arr
            continue
        for idx in np.ndindex(arr.shape[1:]):
            yield f"{name}[{','.join(map(str, idx))}]", arr[(slice(None),) + idx]


def summarize(x) -> ParamSummary:
    x = np.asarray(x, float)
    rh = split_rhat(x)
    return ParamSummary(float(x.mean()), float(x.std(ddof=1)) if len(x) > 1 else 0.0,
                        float(np.quantile(x, 0.05)), float(np.quantile(x, 0.95)),
                        effective_sample_size(x), rh, bool(np.isfinite(rh)))


def diagnostics(chain) -> Diagnostics:
    """Per-parameter summaries of a PosteriorChain (or a dict of draw arrays)."""
    draws = chain.draws if hasattr(chain, "draws") else chain
    n = len(next(iter(draws.values()))) if draws else 0
    if n == 0:
        raise ValueError("empty chain")
    params = {name: summarize(x) for name, x in flat_names(draws)}
    return Diagnostics(params, dict(getattr(chain, "acceptance", {}) or {}), n)
