"""Command-line interface: ``ehe <verb> ...``.

Verbs: thresholds, fit, validate, predict, report, simulate. Every verb writes
into an output directory (refusing to overwrite a non-empty one without
``--force``) together with a ``manifest.json``. Exit status is 0 on success
and 1 on any error; usage errors exit with 2.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .core import DURATION_BINS, JJA, Station, compute_threshold
from .io import (DataError, Dataset, RunConfig, _write_csv, config_text, dumps, fmt,
                 read_chain, read_config, read_stations, read_thresholds, write_chain,
                 write_manifest, write_observations, write_stations, write_thresholds)
from .mcmc import fit
from .model import SINGLE_STATE, TWO_STATE, ModelData, ParameterState
from .predict import (DEFAULT_LEVELS, PredictionSite, chain_site, default_threads,
                      fit_baseline_and_compare, summarize_ehe)
from . import report as rep


class CliError(Exception):
    pass


def _bin_label(lo, hi):
    if hi is None:
        return f"{lo}+"
    return str(lo) if lo == hi else f"{lo}-{hi}"


def _outdir(path, force: bool) -> Path:
    p = Path(path)
    if p.exists() and not p.is_dir():
        raise CliError(f"{p} exists and is not a directory")
    if p.exists() and any(p.iterdir()) and not force:
        raise CliError(f"output directory {p} is not empty; use --force to overwrite")
    p.mkdir(parents=True, exist_ok=True)
    return p


def _months(text: str | None):
    if not text:
        return None
    return tuple(int(m) for m in text.split(","))


def _years(text: str | None):
    if not text:
        return None
    a, _, b = text.partition("-")
    return (int(a), int(b or a))


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise CliError(f"invalid date {text!r} (expected YYYY-MM-DD)") from None


def _overrides(args) -> dict[str, str]:
    out = {}
    for kv in getattr(args, "set", None) or []:
        k, sep, v = kv.partition("=")
        if not sep:
            raise CliError(f"--set expects key=value, got {kv!r}")
        out[k.strip()] = v.strip()
    for name in ("iterations", "burn_in", "thin", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            out[name] = str(v)
    return out


def _load_config(args) -> RunConfig:
    return read_config(getattr(args, "config", None), _overrides(args))


def _model_data(ds: Dataset, thresholds, ids: Sequence[str], cfg: RunConfig) -> ModelData:
    missing = [i for i in ids if i not in thresholds]
    if missing:
        raise CliError(f"no threshold for station(s) {', '.join(missing)}")
    series = [ds.series[i] for i in ids if i in ds.series]
    if len(series) != len(ids):
        raise CliError("stations without observations: "
                       + ", ".join(i for i in ids if i not in ds.series))
    years = None
    if "fit_start_year" in cfg.run or "fit_end_year" in cfg.run:
        years = (cfg.run.get("fit_start_year", 1), cfg.run.get("fit_end_year", 9999))
    return ModelData.from_series(series, thresholds, cfg.model.scaling, years)


def _progress(enabled: bool):
    if not enabled:
        return None
    step = [0]

    def cb(i, n):
        if i * 20 // n > step[0] or i == n:
            step[0] = i * 20 // n
            print(f"  iteration {i}/{n}", file=sys.stderr)
    return cb


# ---------------------------------------------------------------------------
# verbs


def cmd_thresholds(args) -> int:
    out = _outdir(args.out, args.force)
    t0 = time.perf_counter()
    ds = Dataset.read(args.stations, args.obs)
    base = (args.baseline_start, args.baseline_end)
    months = _months(args.months) or JJA
    rows, failed = [], 0
    for st in ds.stations:
        s = ds.series.get(st.id)
        try:
            if s is None:
                raise ValueError("no observations")
            th = compute_threshold(s, base, months, args.p)
            rows.append((st.id, th.q, th.n_baseline_days))
        except ValueError as e:
            print(f"warning: {st.id}: {e}; row flagged", file=sys.stderr)
            rows.append((st.id, None, 0))
            failed += 1
    write_thresholds(out / "thresholds.csv", rows)
    write_manifest(out, "thresholds", sys.argv, {"baseline": base, "months": months, "p": args.p},
                   {"stations": args.stations, "obs": args.obs}, None,
                   {"total": time.perf_counter() - t0}, __version__)
    if failed == len(rows):
        raise CliError("no station has baseline data")
    return 0


def cmd_fit(args) -> int:
    out = _outdir(args.out, args.force)
    t0 = time.perf_counter()
    cfg = _load_config(args)
    ds = Dataset.read(args.stations, args.obs)
    th = read_thresholds(args.thresholds)
    exclude = set(args.exclude.split(",")) if args.exclude else set()
    unknown = exclude - {s.id for s in ds.stations}
    if unknown:
        raise CliError(f"unknown station id(s): {', '.join(sorted(unknown))}")
    ids = [s.id for s in ds.stations if s.id not in exclude and s.id in th]
    data = _model_data(ds, th, ids, cfg)
    kind = args.model or cfg.run.get("model", TWO_STATE)
    t1 = time.perf_counter()
    try:
        chain = fit(data, cfg.model, cfg.sampler, kind, progress=_progress(args.progress))
    except (ValueError, FloatingPointError) as e:
        raise CliError(f"fit failed ({kind}, {len(ids)} stations): {e}") from e
    t2 = time.perf_counter()
    binary = args.binary_fields or str(cfg.run.get("binary_fields", "")).lower() in ("1", "true", "yes")
    write_chain(out, chain, binary_fields=binary)
    _write_rows(out / "diagnostics.csv",
                ["parameter", "mean", "sd", "q05", "q95", "ess", "rhat", "rhat_defined"],
                rep.diagnostics_table(chain))
    _write_rows(out / "coefficients.csv", ["parameter", "state", "mean", "q05", "q95"],
                rep.coefficient_table(chain))
    (out / "config.txt").write_text(config_text(cfg), encoding="utf-8")
    write_manifest(out, "fit", sys.argv, {**cfg.to_dict(), "kind": kind, "stations": ids},
                   {"stations": args.stations, "obs": args.obs, "thresholds": args.thresholds},
                   cfg.sampler.seed,
                   {"load": t1 - t0, "sampling": t2 - t1, "total": time.perf_counter() - t0},
                   __version__)
    return 0


def _cell(v):
    if isinstance(v, float):
        return fmt(v)
    return str(v)


def _write_rows(path, header, rows):
    _write_csv(path, header, [[_cell(v) for v in r] for r in rows])


def cmd_validate(args) -> int:
    out = _outdir(args.out, args.force)
    t0 = time.perf_counter()
    cfg = _load_config(args)
    ds = Dataset.read(args.stations, args.obs)
    th = read_thresholds(args.thresholds)
    held = args.holdout.split(",")
    known = {s.id for s in ds.stations}
    for h in held:
        if h not in known:
            raise CliError(f"unknown station id {h!r}")
        if h not in th or h not in ds.series:
            raise CliError(f"held-out station {h} needs a threshold and observations")
    windows = [_years(w) for w in args.windows.split(",")] if args.windows else [None]
    months = _months(args.months) or JJA
    rates, runs = [], []
    for h in held:
        ids = [s.id for s in ds.stations if s.id != h and s.id in th and s.id in ds.series]
        data = _model_data(ds, th, ids, cfg)
        cmp = fit_baseline_and_compare(data, ds.series[h], th[h].q, cfg.model, cfg.sampler,
                                       windows, months, args.max_draws)
        for kind, chain in cmp.chains.items():
            write_chain(out / "chains" / h / kind, chain)
        for label, results in (("two_state", cmp.two_state), ("single_state_t", cmp.baseline)):
            for w, er in zip(windows, results):
                wl = "all" if w is None else f"{w[0]}-{w[1]}"
                for name in ("marginal", "persistence", "onset"):
                    v = getattr(er, name)
                    n = getattr(er, f"n_{name}")
                    rates.append((h, label, wl, name, v, n, "empty" if n == 0 else ""))
                for j, name in enumerate(("run1", "run2", "run3"), start=1):
                    v = getattr(er, name)
                    n = getattr(er, f"n_{name}")
                    runs.append((h, label, wl, j, v, n, "empty" if n == 0 else ""))
    head = ["station_id", "model", "window", "rate", "error", "n_days", "flag"]
    _write_rows(out / "error_rates.csv", head, rates)
    _write_rows(out / "run_length_errors.csv",
                ["station_id", "model", "window", "run_length", "error", "n_days", "flag"], runs)
    write_manifest(out, "validate", sys.argv,
                   {**cfg.to_dict(), "holdout": held, "windows": [str(w) for w in windows],
                    "months": months},
                   {"stations": args.stations, "obs": args.obs, "thresholds": args.thresholds},
                   cfg.sampler.seed, {"total": time.perf_counter() - t0}, __version__)
    return 0


def _check_bbox(site: PredictionSite, chain, bbox: str | None):
    if bbox:
        lon0, lon1, lat0, lat1 = (float(v) for v in bbox.split(","))
    else:
        lon0, lat0 = chain.coords.min(axis=0) - 2.0
        lon1, lat1 = chain.coords.max(axis=0) + 2.0
    if not (lon0 <= site.lon <= lon1 and lat0 <= site.lat <= lat1):
        print(f"warning: site ({site.lon}, {site.lat}) lies outside the sanity box "
              f"lon [{lon0:g}, {lon1:g}], lat [{lat0:g}, {lat1:g}]", file=sys.stderr)


def cmd_predict(args) -> int:
    out = _outdir(args.out, args.force)
    t0 = time.perf_counter()
    chain = read_chain(args.chain)
    if args.station:
        if args.station not in chain.site_ids:
            raise CliError(f"station {args.station} is not part of the chain")
        site = chain_site(chain, args.station, args.q)
    else:
        if None in (args.lon, args.lat, args.elev, args.q):
            raise CliError("a new site needs --lon, --lat, --elev and --q")
        site = PredictionSite(args.lon, args.lat, args.elev, args.q, None, args.site_id)
        _check_bbox(site, chain, args.bbox)
    start, end = _date(args.start), _date(args.end)
    n_days = (end - start).days + 1
    if n_days < 1:
        raise CliError("end date precedes start date")
    levels = DEFAULT_LEVELS if not args.levels else np.array(
        [float(v) for v in args.levels.split(",")])
    summ = summarize_ehe(chain, site, start, n_days, args.n_rep, args.seed, args.max_draws,
                         levels, args.min_duration, _months(args.months),
                         keep_trajectories=args.trajectories, threads=args.threads)
    head = ["mean", "q05", "q95"]
    _write_rows(out / "duration_density.csv", ["duration_days"] + head,
                [(_bin_label(*b), m, lo, hi) for b, m, lo, hi in
                 zip(DURATION_BINS, summ.duration.mean, summ.duration.lo, summ.duration.hi)])
    for name, band in (("avg", summ.avg_exceedance), ("max", summ.max_exceedance)):
        _write_rows(out / f"{name}_exceedance_cdf.csv", ["level_c"] + head,
                    [(float(l), m, lo, hi) for l, m, lo, hi in
                     zip(summ.levels, band.mean, band.lo, band.hi)])
    _write_rows(out / "incidence.csv", ["statistic"] + head,
                [("events", float(summ.incidence.mean[0]), float(summ.incidence.lo[0]),
                  float(summ.incidence.hi[0])),
                 ("exceedance_days", float(summ.exceedance_days.mean[0]),
                  float(summ.exceedance_days.lo[0]), float(summ.exceedance_days.hi[0]))])
    info = {"site": {"id": site.id, "lon": site.lon, "lat": site.lat, "elev_m": site.elev,
                     "q_c": site.q, "observed": site.index is not None},
            "start": start.isoformat(), "end": end.isoformat(), "n_paths": summ.n_paths,
            "paths_with_events": summ.duration.n,
            "paths_with_long_events": summ.avg_exceedance.n,
            "extrapolated_years": summ.extrapolated_years}
    (out / "summary.json").write_text(dumps(info), encoding="utf-8")
    if args.trajectories:
        dates = [(start + dt.timedelta(days=i)).isoformat() for i in range(n_days)]
        rows = [(i, d, fmt(v)) for i, y in enumerate(summ.trajectories)
                for d, v in zip(dates, y)]
        _write_rows(out / "trajectories.csv", ["path", "date", "tmax_c"], rows)
    write_manifest(out, "predict", sys.argv,
                   {"n_rep": args.n_rep, "max_draws": args.max_draws, "site": info["site"],
                    "levels": list(map(float, levels)), "min_duration": args.min_duration},
                   {"chain": Path(args.chain) / "chain.json"}, args.seed,
                   {"total": time.perf_counter() - t0}, __version__)
    return 0


def cmd_report(args) -> int:
    out = _outdir(args.out, args.force)
    t0 = time.perf_counter()
    chain = read_chain(args.chain)
    if len(chain) == 0:
        raise CliError("empty chain")
    q = ["q05", "q95"]
    _write_rows(out / "coefficients.csv", ["parameter", "state", "mean"] + q,
                rep.coefficient_table(chain))
    _write_rows(out / "annual_effects.csv",
                ["year", "state", "mean", "q05", "q25", "median", "q75", "q95"],
                rep.annual_effects(chain))
    _write_rows(out / "spatial_effects.csv", ["site_id", "field", "mean"] + q,
                rep.spatial_effects(chain))
    if chain.kind == TWO_STATE:
        offs = tuple(float(v) for v in args.offsets.split(","))
        _write_rows(out / "transition_curves.csv", ["day_of_year", "offset_c", "probability"],
                    rep.transition_curves(chain, offs))
    _write_rows(out / "diagnostics.csv",
                ["parameter", "mean", "sd", "q05", "q95", "ess", "rhat", "rhat_defined"],
                rep.diagnostics_table(chain))
    write_manifest(out, "report", sys.argv, {"offsets": args.offsets},
                   {"chain": Path(args.chain) / "chain.json"}, None,
                   {"total": time.perf_counter() - t0}, __version__)
    return 0


def cmd_simulate(args) -> int:
    from . import synthetic as syn
    from .model import ModelConfig
    out = _outdir(args.out, args.force)
    t0 = time.perf_counter()
    stations = read_stations(args.stations) if args.stations else syn.default_stations(
        args.n_stations, args.seed + 7)
    n_years = args.years
    cfg = _load_config(args)
    if args.params:
        params = ParameterState.from_dict(json.loads(Path(args.params).read_text()))
        if params.gamma.shape[1] < n_years:
            raise CliError(f"parameter file has {params.gamma.shape[1]} annual effects, "
                           f"{n_years} years requested")
        if params.mean_field.shape[1] != len(stations):
            raise CliError("parameter fields do not match the number of stations")
    else:
        kind = args.model or TWO_STATE
        params = syn.truth_state(stations, n_years, kind, args.seed + 11, cfg.model,
                                 switching=args.switching)
    params.check()
    start = dt.date(args.start_year, 1, 1)
    data, series = syn.simulate_dataset(params, stations, args.q, start, n_years,
                                        seed=args.seed, config=cfg.model,
                                        missing_rate=args.missing_rate)
    write_stations(out / "stations.csv", stations)
    write_observations(out / "obs.csv", series)
    write_thresholds(out / "thresholds.csv", [(s.id, float(args.q), 0) for s in stations])
    (out / "params.json").write_text(dumps(params.as_dict()), encoding="utf-8")
    inputs = {}
    if args.stations:
        inputs["stations"] = args.stations
    if args.params:
        inputs["params"] = args.params
    write_manifest(out, "simulate", sys.argv,
                   {**cfg.to_dict(), "q": args.q, "years": n_years, "start_year": args.start_year,
                    "switching": args.switching, "missing_rate": args.missing_rate},
                   inputs, args.seed, {"total": time.perf_counter() - t0}, __version__)
    return 0


# ---------------------------------------------------------------------------
# parser


def _common(p, config=True):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")
    if config:
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")


def _sampler_flags(p):
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=float)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)


def _data_flags(p, thresholds=True):
    p.add_argument("--stations", required=True, help="stations.csv")
    p.add_argument("--obs", required=True, help="obs.csv")
    if thresholds:
        p.add_argument("--thresholds", required=True, help="thresholds.csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ehe", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("thresholds", help="per-station exceedance thresholds")
    _data_flags(p, thresholds=False)
    _common(p, config=False)
    p.add_argument("--baseline-start", type=int, default=1953)
    p.add_argument("--baseline-end", type=int, default=1962)
    p.add_argument("--months", default="6,7,8")
    p.add_argument("--p", type=float, default=0.95)
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("fit", help="run the MCMC sampler and store the chain")
    _data_flags(p)
    _common(p)
    _sampler_flags(p)
    p.add_argument("--model", choices=(TWO_STATE, SINGLE_STATE))
    p.add_argument("--exclude", help="comma-separated station ids to leave out")
    p.add_argument("--binary-fields", action="store_true",
                   help="store GP field draws as .npy instead of CSV")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("validate", help="leave-station-out error rates vs the t baseline")
    _data_flags(p)
    _common(p)
    _sampler_flags(p)
    p.add_argument("--holdout", required=True, help="comma-separated held-out station ids")
    p.add_argument("--windows", help="comma-separated year ranges, e.g. 1953-1962,1963-1972")
    p.add_argument("--months", default="6,7,8")
    p.add_argument("--max-draws", type=int, default=500)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("predict", help="posterior-predictive EHE summaries at a site")
    _common(p, config=False)
    p.add_argument("--chain", required=True, help="chain directory written by fit")
    p.add_argument("--station", help="predict at a fitted station")
    p.add_argument("--site-id", default="new")
    p.add_argument("--lon", type=float)
    p.add_argument("--lat", type=float)
    p.add_argument("--elev", type=float, help="elevation in metres")
    p.add_argument("--q", type=float, help="threshold in C (required for new sites)")
    p.add_argument("--start", required=True)
    p.add_argument("--end", required=True)
    p.add_argument("--n-rep", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-draws", type=int)
    p.add_argument("--levels", help="comma-separated exceedance levels in C")
    p.add_argument("--min-duration", type=int, default=3)
    p.add_argument("--months", help="restrict counted days to these months")
    p.add_argument("--bbox", help="sanity box lon0,lon1,lat0,lat1")
    p.add_argument("--trajectories", action="store_true", help="also write raw trajectories")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default from EHE_THREADS)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="coefficient, annual, spatial and transition tables")
    _common(p, config=False)
    p.add_argument("--chain", required=True)
    p.add_argument("--offsets", default="-2,0,2", help="y_{t-1} - q values for the curves")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate", help="generate synthetic data from a parameter state")
    _common(p)
    p.add_argument("--stations", help="stations.csv (default: synthetic stations)")
    p.add_argument("--n-stations", type=int, default=4)
    p.add_argument("--params", help="ParameterState JSON (default: built-in truth)")
    p.add_argument("--model", choices=(TWO_STATE, SINGLE_STATE))
    p.add_argument("--q", type=float, default=34.0)
    p.add_argument("--start-year", type=int, default=1953)
    p.add_argument("--years", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--switching", type=float, default=1.0,
                   help="scale of the transition slopes in the built-in truth")
    p.add_argument("--missing-rate", type=float, default=0.0)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, DataError, ValueError, KeyError, OSError, FloatingPointError,
            json.JSONDecodeError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"ehe {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
