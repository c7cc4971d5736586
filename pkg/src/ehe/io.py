"""CSV ingestion and canonical serialisation, chain persistence, run manifests
and the flat key=value configuration file.

File formats (UTF-8, header row required, '.' decimal, ISO-8601 dates):

* stations.csv: ``id,name,lon,lat,elev_m``
* obs.csv: ``station_id,date,tmax_c`` (empty ``tmax_c`` = missing)
* thresholds.csv: ``station_id,q_c,n_baseline_days`` (empty ``q_c`` flags a
  station without baseline data)

Numbers are written with Python's shortest round-trip ``repr`` so parsing and
re-writing a canonical file reproduces it byte for byte.
"""
from __future__ import annotations

import configparser
import csv
import datetime as dt
import hashlib
import io as _io
import json
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Station, StationSeries, Threshold
from .mcmc import PosteriorChain, SamplerConfig
from .model import CovariateScaling, ModelConfig

STATION_HEADER = ["id", "name", "lon", "lat", "elev_m"]
OBS_HEADER = ["station_id", "date", "tmax_c"]
THRESHOLD_HEADER = ["station_id", "q_c", "n_baseline_days"]
TMAX_RANGE = (-60.0, 60.0)
FIELD_BLOCKS = ("mean_field", "logvar_field", "trans_field")


class DataError(ValueError):
    """Malformed input; the message names the file and line."""


def fmt(x: float) -> str:
    """Shortest exact text form of a float ('' for NaN)."""
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def _parse_float(text: str, where: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"{where}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise DataError(f"{where}: non-finite value {text!r}")
    return v


def _rows(path, header: list[str]):
    """Yield (line_number, row) after checking the header."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        head = [h.strip().lstrip("﻿") for h in head]
        if head != header:
            raise DataError(f"{path}:1: expected header {','.join(header)}, got {','.join(head)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            yield line, [c.strip() for c in row]


def _write_csv(path, header, rows) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------------------
# stations / observations / thresholds


def read_stations(path) -> list[Station]:
    out, seen = [], set()
    for line, (sid, name, lon, lat, elev) in _rows(path, STATION_HEADER):
        where = f"{path}:{line}"
        if not sid:
            raise DataError(f"{where}: empty station id")
        if sid in seen:
            raise DataError(f"{where}: duplicate station id {sid!r}")
        try:
            st = Station(sid, name, _parse_float(lon, where), _parse_float(lat, where),
                         _parse_float(elev, where))
        except DataError:
            raise
        except ValueError as e:
            raise DataError(f"{where}: {e}") from None
        seen.add(sid)
        out.append(st)
    if not out:
        raise DataError(f"{path}: no stations")
    return out


def write_stations(path, stations: Sequence[Station]) -> None:
    _write_csv(path, STATION_HEADER,
               [[s.id, s.name, fmt(s.lon), fmt(s.lat), fmt(s.elev)] for s in stations])


def read_observations(path, stations: Sequence[Station]) -> dict[str, StationSeries]:
    """Daily series per station, gaps between a station's first and last date
    filled with missing values. Duplicated days are an error."""
    known = {s.id: s for s in stations}
    per: dict[str, dict[dt.date, float]] = {}
    for line, (sid, date, tmax) in _rows(path, OBS_HEADER):
        where = f"{path}:{line}"
        if sid not in known:
            raise DataError(f"{where}: unknown station id {sid!r}")
        try:
            day = dt.date.fromisoformat(date)
        except ValueError:
            raise DataError(f"{where}: invalid date {date!r}") from None
        if tmax == "":
            v = math.nan
        else:
            v = _parse_float(tmax, where)
            if not TMAX_RANGE[0] <= v <= TMAX_RANGE[1]:
                raise DataError(f"{where}: temperature {v} outside "
                                f"[{TMAX_RANGE[0]:g}, {TMAX_RANGE[1]:g}] C")
        days = per.setdefault(sid, {})
        if day in days:
            raise DataError(f"{where}: duplicate observation for {sid} on {date}")
        days[day] = v
    out = {}
    for s in stations:
        days = per.get(s.id)
        if not days:
            continue
        first, last = min(days), max(days)
        n = (last - first).days + 1
        vals = np.full(n, np.nan)
        for d, v in days.items():
            vals[(d - first).days] = v
        out[s.id] = StationSeries(s, first, vals)
    return out


def write_observations(path, series: Iterable[StationSeries]) -> None:
    rows = []
    for s in series:
        for d, v in zip(s.dates, s.values):
            rows.append([s.station.id, str(d), fmt(v)])
    _write_csv(path, OBS_HEADER, rows)


@dataclass
class Dataset:
    stations: list[Station]
    series: dict[str, StationSeries]
    notes: list[str] = field(default_factory=list)

    @classmethod
    def read(cls, stations_csv, obs_csv) -> "Dataset":
        st = read_stations(stations_csv)
        ser = read_observations(obs_csv, st)
        notes = [f"{s.id}: no observations" for s in st if s.id not in ser]
        return cls(st, ser, notes)

    def write(self, stations_csv, obs_csv) -> None:
        write_stations(stations_csv, self.stations)
        write_observations(obs_csv, [self.series[s.id] for s in self.stations
                                     if s.id in self.series])

    def station(self, sid: str) -> Station:
        for s in self.stations:
            if s.id == sid:
                return s
        raise KeyError(f"unknown station id {sid!r}")


def read_thresholds(path) -> dict[str, Threshold]:
    """Thresholds by station id; flagged rows (empty q) are skipped."""
    out = {}
    for line, (sid, q, n) in _rows(path, THRESHOLD_HEADER):
        where = f"{path}:{line}"
        if q == "":
            continue
        try:
            nb = int(n) if n else 0
        except ValueError:
            raise DataError(f"{where}: invalid day count {n!r}") from None
        out[sid] = Threshold(sid, _parse_float(q, where), n_baseline_days=nb)
    return out


def write_thresholds(path, rows: Sequence[tuple[str, float | None, int]]) -> None:
    _write_csv(path, THRESHOLD_HEADER,
               [[sid, "" if q is None else fmt(q), str(int(n))] for sid, q, n in rows])


# ---------------------------------------------------------------------------
# chain persistence


def _column_names(name: str, shape: tuple[int, ...]) -> list[str]:
    if not shape:
        return [name]
    return [f"{name}[{','.join(map(str, idx))}]" for idx in np.ndindex(shape)]


def _to_jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, dict):
        return {k: _to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_jsonable(v) for v in x]
    return x


def dumps(obj) -> str:
    return json.dumps(_to_jsonable(obj), indent=1, sort_keys=True) + "\n"


def write_chain(directory, chain: PosteriorChain, binary_fields: bool = False) -> list[Path]:
    """One ``draws_<block>.csv`` per parameter block plus ``chain.json``.

    With ``binary_fields`` the GP field blocks go to ``.npy`` files instead.
    Output depends only on the chain contents.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written, blocks = [], []
    for name, arr in chain.draws.items():
        arr = np.asarray(arr, float)
        if binary_fields and name in FIELD_BLOCKS:
            p = d / f"draws_{name}.npy"
            np.save(p, arr, allow_pickle=False)
        else:
            p = d / f"draws_{name}.csv"
            flat = arr.reshape(len(arr), -1)
            _write_csv(p, _column_names(name, arr.shape[1:]),
                       [[fmt(v) for v in row] for row in flat])
        blocks.append({"name": name, "shape": list(arr.shape[1:]), "file": p.name})
        written.append(p)
    meta = {
        "kind": chain.kind, "n_draws": len(chain), "blocks": blocks,
        "site_ids": list(chain.site_ids), "coords": chain.coords, "elev": chain.elev,
        "covariates": chain.covariates, "q": chain.q, "years": chain.years,
        "model_config": chain.model_config.to_dict(),
        "sampler_config": chain.sampler_config.to_dict(),
        "acceptance": chain.acceptance,
    }
    p = d / "chain.json"
    p.write_text(dumps(meta), encoding="utf-8")
    written.append(p)
    return written


def read_chain(directory) -> PosteriorChain:
    d = Path(directory)
    meta_path = d / "chain.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"{d}: no chain.json (not a chain directory)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    n = int(meta["n_draws"])
    draws = {}
    for b in meta["blocks"]:
        shape = tuple(b["shape"])
        p = d / b["file"]
        if p.suffix == ".npy":
            arr = np.load(p, allow_pickle=False)
        else:
            with open(p, newline="", encoding="utf-8") as fh:
                r = csv.reader(fh)
                next(r)
                rows = [[float(v) if v else math.nan for v in row] for row in r]
            arr = np.array(rows, float).reshape((len(rows),) + shape)
        if len(arr) != n:
            raise DataError(f"{p}: expected {n} draws, found {len(arr)}")
        draws[b["name"]] = arr
    return PosteriorChain(
        kind=meta["kind"], draws=draws, site_ids=list(meta["site_ids"]),
        coords=np.array(meta["coords"], float).reshape(-1, 2),
        elev=np.array(meta["elev"], float), covariates=np.array(meta["covariates"], float),
        q=np.array(meta["q"], float), years=np.array(meta["years"], dtype=np.int64),
        model_config=ModelConfig.from_dict(meta["model_config"]),
        sampler_config=SamplerConfig.from_dict(meta["sampler_config"]),
        acceptance=dict(meta.get("acceptance", {})))


# ---------------------------------------------------------------------------
# manifest


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory, command: str, argv: Sequence[str], config: dict,
                   inputs: dict[str, str | os.PathLike], seed: int | None,
                   timing: dict[str, float], version: str) -> Path:
    """``manifest.json``: everything needed to rerun the command. Timing is the
    only field expected to differ between otherwise identical runs."""
    man = {
        "command": command, "argv": list(argv), "software_version": version,
        "seed": seed, "config": config,
        "inputs": {k: {"path": str(v), "sha256": sha256_file(v)} for k, v in inputs.items()},
        "timing_seconds": timing,
    }
    p = Path(directory) / "manifest.json"
    p.write_text(dumps(man), encoding="utf-8")
    return p


# ---------------------------------------------------------------------------
# configuration file

RUN_KEYS = {
    "model": str, "fit_start_year": int, "fit_end_year": int, "baseline_start": int,
    "baseline_end": int, "months": str, "p": float, "binary_fields": str,
}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    run: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "sampler": self.sampler.to_dict(),
                "run": dict(self.run)}


def _key_sets():
    model = {f.name for f in fields(ModelConfig)} - {"scaling"}
    scaling = {f.name for f in fields(CovariateScaling)}
    sampler = {f.name for f in fields(SamplerConfig)}
    return model, scaling, sampler


def parse_config(text: str, overrides: dict[str, str] | None = None,
                 source: str = "<config>") -> RunConfig:
    """Parse flat ``key = value`` lines ('#' comments). ``overrides`` (from
    command-line flags) win over the file."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text, source=source)
    except configparser.Error as e:
        raise DataError(f"{source}: {e}") from None
    items = dict(cp["run"])
    items.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
    mkeys, skeys, sakeys = _key_sets()
    model, scaling, sampler, run = {}, {}, {}, {}
    for k, v in items.items():
        if k in mkeys:
            model[k] = v
        elif k in skeys:
            scaling[k] = None if v.strip().lower() in ("", "none", "auto") else float(v)
        elif k in sakeys:
            sampler[k] = v
        elif k in RUN_KEYS:
            run[k] = RUN_KEYS[k](v)
        else:
            raise DataError(f"{source}: unknown configuration key {k!r}")
    try:
        mc = ModelConfig.from_dict({**model, "scaling": CovariateScaling(**scaling)})
        sc = SamplerConfig.from_dict(sampler)
    except (TypeError, ValueError) as e:
        raise DataError(f"{source}: {e}") from None
    return RunConfig(mc, sc, run)


def read_config(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8") if path else ""
    return parse_config(text, overrides, str(path) if path else "<defaults>")


def config_text(cfg: RunConfig) -> str:
    """Render a RunConfig back to the flat file format."""
    lines = ["# model"]
    for k, v in cfg.model.to_dict().items():
        if k != "scaling":
            lines.append(f"{k} = {v!r}")
    lines.append("# covariate scaling (lat_offset = auto: midpoint of station latitudes)")
    for k, v in cfg.model.scaling.__dict__.items():
        lines.append(f"{k} = {'auto' if v is None else repr(v)}")
    lines.append("# sampler")
    for k, v in cfg.sampler.to_dict().items():
        lines.append(f"{k} = {v!r}")
    if cfg.run:
        lines.append("# run")
        for k, v in cfg.run.items():
            lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
