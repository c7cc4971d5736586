"""Station data, thresholds, exceedance states and extreme heat event extraction."""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "Station",
    "StationSeries",
    "Threshold",
    "EheEvent",
    "Binned",
    "DURATION_BINS",
    "calendar",
    "compute_threshold",
    "derive_states",
    "extract_events",
    "duration_histogram",
    "exceedance_cdf_complement",
]

JJA = (6, 7, 8)

# {1}, {2}, {3}, {4-5}, {6-7}, {8+}; None marks an open upper end
DURATION_BINS: tuple[tuple[int, int | None], ...] = (
    (1, 1), (2, 2), (3, 3), (4, 5), (6, 7), (8, None),
)


@dataclass(frozen=True)
class Station:
    id: str
    name: str
    lon: float
    lat: float
    elev: float

    def __post_init__(self):
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"station {self.id}: longitude {self.lon} out of range")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"station {self.id}: latitude {self.lat} out of range")
        if not self.elev >= -500.0:
            raise ValueError(f"station {self.id}: elevation {self.elev} below -500 m")


def calendar(start: dt.date, n: int):
    """Dates, day of year, calendar year and year length for ``n`` consecutive days."""
    dates = np.datetime64(start, "D") + np.arange(n)
    years = dates.astype("datetime64[Y]")
    doy = (dates - years.astype("datetime64[D]")).astype(np.int64) + 1
    year = years.astype(np.int64) + 1970
    leap = (year % 4 == 0) & ((year % 100 != 0) | (year % 400 == 0))
    length = np.where(leap, 366, 365)
    month = (dates.astype("datetime64[M]").astype(np.int64) % 12) + 1
    return dates, doy, year, length, month


@dataclass
class StationSeries:
    """Daily maxima on consecutive calendar days; NaN marks a missing day."""

    station: Station
    start_date: dt.date
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        (self._dates, self.day_of_year, self.year, self.year_length,
         self.month) = calendar(self.start_date, len(self.values))

    @property
    def dates(self) -> np.ndarray:
        return self._dates

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=len(self.values) - 1)

    def __len__(self):
        return len(self.values)

    def select(self, years: tuple[int, int] | None = None,
               months: Sequence[int] | None = None) -> np.ndarray:
        """Boolean mask of days inside an inclusive year range and month set."""
        mask = np.ones(len(self.values), dtype=bool)
        if years is not None:
            mask &= (self.year >= years[0]) & (self.year <= years[1])
        if months is not None:
            mask &= np.isin(self.month, list(months))
        return mask


@dataclass(frozen=True)
class Threshold:
    station_id: str
    q: float
    baseline_window: tuple[int, int] = (1953, 1962)
    months: tuple[int, ...] = JJA
    n_baseline_days: int = 0

    def __post_init__(self):
        if not math.isfinite(self.q):
            raise ValueError("threshold must be finite")
        if self.baseline_window[0] > self.baseline_window[1]:
            raise ValueError("empty baseline window")


@dataclass(frozen=True)
class EheEvent:
    start_index: int
    duration: int
    avg_exceedance: float
    max_exceedance: float
    start_month: int


class Binned(NamedTuple):
    """Probabilities per bin or level; ``empty`` is set when nothing qualified."""

    values: np.ndarray
    empty: bool


def compute_threshold(series: StationSeries, baseline: tuple[int, int] = (1953, 1962),
                      months: Sequence[int] = JJA, p: float = 0.95) -> Threshold:
    """Nearest-rank ``p``-quantile of the non-missing baseline values.

    The ``ceil(p * n)``-th order statistic is returned, so the threshold is
    always one of the recorded temperatures.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    vals = series.values[series.select(baseline, months)]
    vals = np.sort(vals[~np.isnan(vals)])
    n = len(vals)
    if n == 0:
        raise ValueError(f"no baseline data for station {series.station.id}")
    # round first so 0.95 * 100 cannot drift to 95.00000000000001
    k = max(1, math.ceil(round(p * n, 9)))
    return Threshold(series.station.id, float(vals[k - 1]), tuple(baseline),
                     tuple(months), n)


def derive_states(series: StationSeries, threshold: Threshold) -> np.ndarray:
    """Exceedance indicator per day: 1.0 if tmax >= q, 0.0 below, NaN if missing."""
    if threshold.station_id != series.station.id:
        raise ValueError(
            f"threshold for {threshold.station_id} applied to {series.station.id}")
    return states_from_values(series.values, threshold.q)


def states_from_values(values: np.ndarray, q: float) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    u = np.where(values >= q, 1.0, 0.0)
    u[np.isnan(values)] = np.nan
    return u


def _runs(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Start indices and lengths of maximal runs of u == 1 (NaN breaks runs)."""
    on = np.concatenate(([0], (u == 1).astype(np.int8), [0]))
    edges = np.diff(on)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return starts, stops - starts


def extract_events(series: StationSeries | np.ndarray, states: np.ndarray,
                   q: "float | Threshold | None" = None, months: np.ndarray | None = None
                   ) -> list[EheEvent]:
    """Maximal runs of exceedance days, with duration and exceedance statistics.

    ``series`` may be a :class:`StationSeries` or a bare array of values;
    ``q`` (a number or a :class:`Threshold`) gives the exceedance reference.
    A missing day ends a run. Each event is allocated to the month in which
    it starts.
    """
    if isinstance(q, Threshold):
        q = q.q
    if isinstance(series, StationSeries):
        values = series.values
        months = series.month
    else:
        values = np.asarray(series, dtype=float)
    if q is None:
        raise ValueError("threshold q is required to compute exceedances")
    u = np.asarray(states, dtype=float)
    if len(u) != len(values):
        raise ValueError("series and states are not aligned")
    starts, lengths = _runs(u)
    if len(starts) == 0:
        return []
    excess = values - q
    idx = np.repeat(starts, lengths) + (np.arange(lengths.sum())
                                        - np.repeat(np.cumsum(lengths) - lengths, lengths))
    ex = excess[idx]
    sums = np.add.reduceat(ex, np.cumsum(lengths) - lengths)
    maxs = np.maximum.reduceat(ex, np.cumsum(lengths) - lengths)
    month = months[starts] if months is not None else np.zeros(len(starts), dtype=int)
    # rounding in the sum can push the mean of equal values past their maximum
    avgs = np.minimum(sums / lengths, maxs)
    return [EheEvent(int(s), int(n), float(a), float(m), int(mo))
            for s, n, a, m, mo in zip(starts, lengths, avgs, maxs, month)]


def _check_bins(bins):
    expect = 1
    for lo, hi in bins:
        if lo != expect or (hi is not None and hi < lo):
            raise ValueError("duration bins must partition 1, 2, 3, ...")
        if hi is None:
            return
        expect = hi + 1
    raise ValueError("last duration bin must be open-ended")


def duration_histogram(events: Sequence[EheEvent] | np.ndarray,
                       bins=DURATION_BINS) -> Binned:
    """Proportion of events whose duration falls in each bin."""
    _check_bins(bins)
    dur = np.array([e.duration for e in events] if len(events) and
                   isinstance(events[0], EheEvent) else events, dtype=float)
    out = np.zeros(len(bins))
    if dur.size == 0:
        return Binned(out, True)
    for j, (lo, hi) in enumerate(bins):
        out[j] = np.count_nonzero((dur >= lo) & (dur <= (np.inf if hi is None else hi)))
    return Binned(out / dur.size, False)


def exceedance_cdf_complement(events: Sequence[EheEvent], levels, min_duration: int = 3,
                              which: str = "avg") -> Binned:
    """Fraction of events lasting ``min_duration`` days or more whose average
    (or maximum) exceedance is at least each level."""
    if min_duration < 1:
        raise ValueError("min_duration must be at least 1")
    if which not in ("avg", "max"):
        raise ValueError("which must be 'avg' or 'max'")
    levels = np.asarray(levels, dtype=float)
    stat = np.array([e.avg_exceedance if which == "avg" else e.max_exceedance
                     for e in events if e.duration >= min_duration])
    if stat.size == 0:
        return Binned(np.zeros(levels.shape), True)
    return Binned((stat[None, :] >= levels[:, None]).mean(axis=1), False)
