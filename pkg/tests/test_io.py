import datetime as dt
import json
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from ehe.core import Station, StationSeries
from ehe.io import (DataError, Dataset, config_text, fmt, parse_config, read_chain,
                    read_observations, read_stations, read_thresholds, sha256_file, write_chain,
                    write_manifest, write_observations, write_stations, write_thresholds)

temps = st.one_of(st.just(math.nan), st.floats(-60, 60, allow_nan=False))


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(st.lists(temps, min_size=1, max_size=30), min_size=1, max_size=3),
       st.dates(dt.date(1950, 1, 1), dt.date(2020, 1, 1)))
def test_dataset_round_trip_is_exact_and_canonical(tmp_path, values, start):
    stations = [Station(f"S{i}", f"site {i}", -3.25 + i, 40.1 + i / 3, 100.0 * i + 0.1)
                for i in range(len(values))]
    series = {}
    for s, v in zip(stations, values):
        v = np.array(v)
        v[0] = 20.0 if math.isnan(v[0]) else v[0]
        v[-1] = 21.0 if math.isnan(v[-1]) else v[-1]
        series[s.id] = StationSeries(s, start, v)
    d = tmp_path / f"rt{abs(hash((start, len(values))))}"
    d.mkdir(exist_ok=True)
    Dataset(stations, series).write(d / "st.csv", d / "obs.csv")
    back = Dataset.read(d / "st.csv", d / "obs.csv")
    assert back.stations == stations
    for sid, s in series.items():
        b = back.series[sid]
        assert b.start_date == s.start_date
        np.testing.assert_array_equal(b.values, s.values)
    first = (d / "obs.csv").read_bytes()
    back.write(d / "st2.csv", d / "obs2.csv")
    assert (d / "obs2.csv").read_bytes() == first
    assert (d / "st2.csv").read_bytes() == (d / "st.csv").read_bytes()


def test_fmt():
    assert fmt(0.1) == "0.1" and fmt(float("nan")) == "" and float(fmt(1 / 3)) == 1 / 3


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_bad_station_rows_name_the_line(tmp_path):
    p = write(tmp_path / "s.csv", "id,name,lon,lat,elev_m\nA,a,1,2,3\nA,b,1,2,3\n")
    with pytest.raises(DataError, match=r"s\.csv:3: duplicate"):
        read_stations(p)
    p = write(tmp_path / "s.csv", "id,name,lon,lat,elev_m\nA,a,x,2,3\n")
    with pytest.raises(DataError, match=r":2: not a number"):
        read_stations(p)
    p = write(tmp_path / "s.csv", "id,name,lat,lon,elev_m\n")
    with pytest.raises(DataError):
        read_stations(p)
    p = write(tmp_path / "s.csv", "id,name,lon,lat,elev_m\nA,a,1,95,3\n")
    with pytest.raises(DataError, match=":2:"):
        read_stations(p)


def test_bad_observation_rows(tmp_path):
    sts = [Station("A", "", 0, 40, 0)]
    cases = [
        ("A,1953-06-01,20\nA,1953-06-01,21\n", ":3: duplicate"),
        ("B,1953-06-01,20\n", ":2: unknown station"),
        ("A,1953-13-01,20\n", ":2: invalid date"),
        ("A,1953-06-01,75\n", ":2: temperature"),
        ("A,1953-06-01,inf\n", ":2: non-finite"),
    ]
    for body, msg in cases:
        p = write(tmp_path / "o.csv", "station_id,date,tmax_c\n" + body)
        with pytest.raises(DataError, match=msg):
            read_observations(p, sts)


def test_observation_gaps_become_missing(tmp_path):
    sts = [Station("A", "", 0, 40, 0), Station("B", "", 1, 41, 0)]
    p = write(tmp_path / "o.csv", "station_id,date,tmax_c\nA,1953-06-03,22\nA,1953-06-01,20\nA,1953-06-02,\n")
    out = read_observations(p, sts)
    assert set(out) == {"A"}
    assert out["A"].start_date == dt.date(1953, 6, 1)
    np.testing.assert_array_equal(out["A"].values, [20, np.nan, 22])


def test_thresholds_round_trip_skip_flagged(tmp_path):
    p = tmp_path / "t.csv"
    write_thresholds(p, [("A", 34.5, 920), ("B", None, 0)])
    th = read_thresholds(p)
    assert set(th) == {"A"} and th["A"].q == 34.5 and th["A"].n_baseline_days == 920
    assert "B,,0" in p.read_text()


def test_parse_config_and_round_trip():
    cfg = parse_config("nu = 5  # heavier\nrange_km = 300\niterations = 10\nlat_offset = auto\n"
                       "model = single_state\n", overrides={"seed": "4"})
    assert cfg.model.nu == 5.0 and cfg.model.range_km == 300.0
    assert cfg.sampler.iterations == 10 and cfg.sampler.seed == 4
    assert cfg.model.scaling.lat_offset is None
    assert cfg.run["model"] == "single_state"
    again = parse_config(config_text(cfg))
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(DataError, match="unknown configuration key"):
        parse_config("colour = blue\n")
    with pytest.raises(DataError):
        parse_config("thin = 0\n")


def test_chain_round_trip(tmp_path, short_chain):
    for binary in (False, True):
        d = tmp_path / f"c{int(binary)}"
        write_chain(d, short_chain, binary_fields=binary)
        back = read_chain(d)
        assert back.kind == short_chain.kind and back.site_ids == short_chain.site_ids
        for k, v in short_chain.draws.items():
            np.testing.assert_array_equal(back.draws[k], v)
        np.testing.assert_array_equal(back.years, short_chain.years)
        assert back.model_config == short_chain.model_config
        assert back.sampler_config == short_chain.sampler_config
    write_chain(tmp_path / "again", read_chain(tmp_path / "c0"))
    for f in (tmp_path / "c0").iterdir():
        assert f.read_bytes() == (tmp_path / "again" / f.name).read_bytes()
    with pytest.raises(FileNotFoundError):
        read_chain(tmp_path)


def test_manifest_records_input_hashes(tmp_path):
    inp = write(tmp_path / "in.txt", "hello\n")
    p = write_manifest(tmp_path, "fit", ["fit"], {"a": 1}, {"data": inp}, 3, {"total": 0.5}, "0.1.0")
    man = json.loads(p.read_text())
    assert man["inputs"]["data"]["sha256"] == sha256_file(inp)
    assert man["seed"] == 3 and man["command"] == "fit"
