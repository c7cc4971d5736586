import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehe.core import (DURATION_BINS, Station, StationSeries, Threshold, calendar,
                      compute_threshold, derive_states, duration_histogram,
                      exceedance_cdf_complement, extract_events, states_from_values)

ST = Station("A", "alpha", -3.7, 40.4, 667.0)


def series_from(values, start=dt.date(1953, 6, 1)):
    return StationSeries(ST, start, np.asarray(values, float))


def scan_events(y, q):
    """Independent linear-scan oracle: list of (start, duration, avg, max)."""
    out, i, n = [], 0, len(y)
    while i < n:
        if not math.isnan(y[i]) and y[i] >= q:
            j = i
            while j < n and not math.isnan(y[j]) and y[j] >= q:
                j += 1
            ex = [y[k] - q for k in range(i, j)]
            out.append((i, j - i, sum(ex) / len(ex), max(ex)))
            i = j
        else:
            i += 1
    return out


# -- calendar ----------------------------------------------------------------

def test_calendar_leap_year_day_numbers():
    _, doy, year, length, month = calendar(dt.date(1956, 2, 28), 3)
    assert list(doy) == [59, 60, 61]
    assert list(length) == [366] * 3
    assert list(month) == [2, 2, 3]
    _, doy, _, length, _ = calendar(dt.date(1955, 12, 31), 2)
    assert list(doy) == [365, 1] and list(length) == [365, 366]
    _, _, _, length, _ = calendar(dt.date(1900, 1, 1), 1)
    assert length[0] == 365  # century rule


def test_station_validation():
    with pytest.raises(ValueError):
        Station("x", "", 200.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        Station("x", "", 0.0, 91.0, 0.0)
    with pytest.raises(ValueError):
        Station("x", "", 0.0, 0.0, -501.0)


# -- thresholds ----------------------------------------------------------------

def jja_series(values):
    """Put ``values`` on consecutive June-August 1953 days."""
    return series_from(values, dt.date(1953, 6, 1))


def test_threshold_constant_series():
    th = compute_threshold(jja_series(np.full(92, 30.0)))
    assert th.q == 30.0 and th.n_baseline_days == 92


def test_threshold_nearest_rank_1_to_100():
    vals = np.arange(1.0, 101.0)
    # one summer holds only 92 days, so spread the 100 values over two
    y = np.full(365 + 92, np.nan)
    y[:92] = vals[:92]
    y[365:365 + 8] = vals[92:]
    s = series_from(y, dt.date(1953, 6, 1))
    th = compute_threshold(s, baseline=(1953, 1954))
    assert th.n_baseline_days == 100
    assert th.q == 95.0


def test_threshold_single_value_and_empty():
    y = np.full(92, np.nan)
    y[10] = 27.3
    assert compute_threshold(jja_series(y)).q == 27.3
    with pytest.raises(ValueError, match="no baseline data"):
        compute_threshold(jja_series(np.full(92, np.nan)))
    with pytest.raises(ValueError):
        compute_threshold(jja_series(np.ones(92)), p=0.0)


def test_threshold_respects_window_and_months():
    y = np.full(365, 10.0)
    s = series_from(y, dt.date(1953, 1, 1))
    y2 = s.values.copy()
    y2[s.month == 7] = 40.0
    th = compute_threshold(series_from(y2, dt.date(1953, 1, 1)), months=(7,))
    assert th.q == 40.0 and th.months == (7,)
    with pytest.raises(ValueError):
        compute_threshold(s, baseline=(1960, 1962))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-20, 45, allow_nan=False), min_size=1, max_size=92),
       st.floats(0.01, 1.0))
def test_threshold_is_an_observed_value(vals, p):
    th = compute_threshold(jja_series(vals), p=p)
    assert th.q in vals
    k = math.ceil(round(p * len(vals), 9))
    assert th.q == sorted(vals)[k - 1]


# -- states ------------------------------------------------------------------

def test_states_boundary_and_missing():
    q = 34.0
    assert list(states_from_values([q - 1, q, q + 1], q)) == [0, 1, 1]
    assert np.all(np.isnan(states_from_values([np.nan, np.nan], q)))
    u = states_from_values([35, np.nan, 36], q)
    assert u[0] == 1 and np.isnan(u[1]) and u[2] == 1


def test_derive_states_checks_station():
    s = series_from([1.0, 2.0])
    assert list(derive_states(s, Threshold("A", 1.5))) == [0, 1]
    with pytest.raises(ValueError):
        derive_states(s, Threshold("B", 1.5))


# -- events ------------------------------------------------------------------

def test_extract_events_examples():
    q = 0.0
    u = np.array([0, 1, 1, 1, 0, 1, 0], float)
    y = np.where(u == 1, 1.0, -1.0)
    ev = extract_events(y, u, q=q)
    assert [e.duration for e in ev] == [3, 1]
    assert [e.start_index for e in ev] == [1, 5]
    ev = extract_events(np.array([0.0, 1, 2, 3, 0]) + 30, np.array([0, 1, 1, 1, 0.]), q=30.0)
    assert ev[0].avg_exceedance == 2.0 and ev[0].max_exceedance == 3.0


def test_extract_events_missing_day_splits_run_and_start_month():
    s = series_from([35, 36, np.nan, 37, 30], dt.date(1953, 6, 29))
    th = Threshold("A", 34.0)
    ev = extract_events(s, derive_states(s, th), th)
    assert [(e.start_index, e.duration, e.start_month) for e in ev] == [(0, 2, 6), (3, 1, 7)]


def test_extract_events_bruteforce_1000_sequences():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = rng.integers(1, 300)
        y = rng.normal(0, 1, n)
        y[rng.random(n) < 0.1] = np.nan
        q = 0.3
        got = [(e.start_index, e.duration, e.avg_exceedance, e.max_exceedance)
               for e in extract_events(y, states_from_values(y, q), q=q)]
        want = scan_events(list(y), q)
        assert [g[:2] for g in got] == [w[:2] for w in want]
        for g, w in zip(got, want):
            np.testing.assert_allclose(g[2:], w[2:], atol=1e-12)


def test_extract_events_requires_q_and_alignment():
    with pytest.raises(ValueError):
        extract_events(np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        extract_events(np.ones(3), np.ones(2), q=0.0)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.one_of(st.floats(-3, 3), st.just(float("nan"))), min_size=0, max_size=60),
       st.integers(0, 5), st.integers(0, 5))
def test_event_properties(vals, pad_l, pad_r):
    y = np.array(vals, float)
    q = 0.0
    u = states_from_values(y, q)
    ev = extract_events(y, u, q=q)
    # durations account for every exceedance day
    assert sum(e.duration for e in ev) == int(np.nansum(u))
    for e in ev:
        assert e.duration >= 1
        assert 0 <= e.avg_exceedance <= e.max_exceedance
        assert np.all(u[e.start_index:e.start_index + e.duration] == 1)
        for k in (e.start_index - 1, e.start_index + e.duration):
            if 0 <= k < len(u) and not np.isnan(u[k]):
                assert u[k] == 0
    # padding with below-threshold days shifts but does not change events
    yp = np.concatenate([np.full(pad_l, -1.0), y, np.full(pad_r, -1.0)])
    evp = extract_events(yp, states_from_values(yp, q), q=q)
    assert [(e.start_index - pad_l, e.duration, e.avg_exceedance, e.max_exceedance)
            for e in evp] == [(e.start_index, e.duration, e.avg_exceedance, e.max_exceedance)
                              for e in ev]


# -- histograms and curves -----------------------------------------------------

def test_duration_histogram_examples():
    h = duration_histogram([1, 1, 2, 8, 9])
    np.testing.assert_array_equal(h.values, [0.4, 0.2, 0, 0, 0, 0.4])
    assert not h.empty
    h = duration_histogram([])
    assert h.empty and np.all(h.values == 0)


def test_duration_histogram_rejects_bad_bins():
    with pytest.raises(ValueError):
        duration_histogram([1], bins=((1, 1), (3, None)))
    with pytest.raises(ValueError):
        duration_histogram([1], bins=((1, 2),))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 30), min_size=1, max_size=50))
def test_duration_histogram_counting_oracle(durs):
    h = duration_histogram(durs)
    want = []
    for lo, hi in DURATION_BINS:
        want.append(sum(1 for d in durs if d >= lo and (hi is None or d <= hi)) / len(durs))
    np.testing.assert_allclose(h.values, want, rtol=0, atol=1e-15)
    assert abs(h.values.sum() - 1.0) < 1e-12


def _ev(avg, dur=3, mx=None):
    from ehe.core import EheEvent
    return EheEvent(0, dur, avg, avg if mx is None else mx, 6)


def test_exceedance_cdf_complement_examples():
    c = exceedance_cdf_complement([_ev(1.0), _ev(2.0)], [0.5, 1.5, 2.5])
    np.testing.assert_array_equal(c.values, [1.0, 0.5, 0.0])
    c = exceedance_cdf_complement([_ev(1.0, dur=2)], [0.5])
    assert c.empty
    c = exceedance_cdf_complement([_ev(1.0, mx=4.0)], [3.0], which="max")
    assert c.values[0] == 1.0
    with pytest.raises(ValueError):
        exceedance_cdf_complement([], [1.0], min_duration=0)
    with pytest.raises(ValueError):
        exceedance_cdf_complement([], [1.0], which="median")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 8), st.integers(1, 10)), min_size=0, max_size=30))
def test_exceedance_cdf_counting_oracle_and_monotone(items):
    events = [_ev(a, d) for a, d in items]
    levels = np.linspace(0, 8, 17)
    c = exceedance_cdf_complement(events, levels)
    q = [a for a, d in items if d >= 3]
    if not q:
        assert c.empty
        return
    want = [sum(a >= l for a in q) / len(q) for l in levels]
    np.testing.assert_allclose(c.values, want, atol=1e-15)
    assert np.all(np.diff(c.values) <= 0)


def test_event_average_never_exceeds_maximum():
    y = np.full(3, 34.4)
    (e,) = extract_events(y, states_from_values(y, 34.0), q=34.0)
    assert e.avg_exceedance <= e.max_exceedance
