import csv
import json

import pytest

from ehe.cli import main


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--out", str(root / "sim"), "--years", "3", "--seed", "1",
                 "--missing-rate", "0.01"]) == 0
    sim = root / "sim"
    assert main(["thresholds", "--out", str(root / "th"), "--stations", str(sim / "stations.csv"),
                 "--obs", str(sim / "obs.csv"), "--baseline-end", "1955"]) == 0
    common = ["--stations", str(sim / "stations.csv"), "--obs", str(sim / "obs.csv"),
              "--thresholds", str(root / "th" / "thresholds.csv")]
    for name in ("fit", "fit2"):
        assert main(["fit", "--out", str(root / name), *common, "--iterations", "20",
                     "--seed", "3"]) == 0
    return root, common


def test_simulate_and_thresholds_outputs(workdir):
    root, _ = workdir
    assert {p.name for p in (root / "sim").iterdir()} >= {"stations.csv", "obs.csv",
                                                          "thresholds.csv", "params.json",
                                                          "manifest.json"}
    th = rows(root / "th" / "thresholds.csv")
    assert th[0] == ["station_id", "q_c", "n_baseline_days"] and len(th) == 5
    assert all(r[1] for r in th[1:])


def test_fit_is_byte_deterministic(workdir):
    root, _ = workdir
    a, b = root / "fit", root / "fit2"
    names = sorted(p.name for p in a.iterdir())
    assert "chain.json" in names and "diagnostics.csv" in names
    for n in names:
        if n == "manifest.json":
            ma, mb = (json.loads((d / n).read_text()) for d in (a, b))
            ma.pop("timing_seconds"), mb.pop("timing_seconds")
            ma["argv"] = mb["argv"] = None
            assert ma == mb
        else:
            assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_predict_report_outputs(workdir):
    root, _ = workdir
    assert main(["predict", "--out", str(root / "pr"), "--chain", str(root / "fit"),
                 "--station", "S01", "--start", "1954-06-01", "--end", "1954-08-31",
                 "--n-rep", "5", "--trajectories"]) == 0
    d = root / "pr"
    dur = rows(d / "duration_density.csv")
    assert [r[0] for r in dur[1:]] == ["1", "2", "3", "4-5", "6-7", "8+"]
    summ = json.loads((d / "summary.json").read_text())
    assert summ["extrapolated_years"] is False
    assert (d / "trajectories.csv").exists()
    assert main(["predict", "--out", str(root / "pr_new"), "--chain", str(root / "fit"),
                 "--lon", "-4.0", "--lat", "40.0", "--elev", "500", "--q", "34",
                 "--start", "1954-06-01", "--end", "1954-06-30"]) == 0
    assert main(["report", "--out", str(root / "rep"), "--chain", str(root / "fit")]) == 0
    names = {p.name for p in (root / "rep").iterdir()}
    assert {"coefficients.csv", "annual_effects.csv", "spatial_effects.csv",
            "transition_curves.csv", "diagnostics.csv", "manifest.json"} <= names


def test_validate_outputs(workdir):
    root, common = workdir
    assert main(["validate", "--out", str(root / "val"), *common, "--holdout", "S04",
                 "--iterations", "10", "--max-draws", "5", "--windows", "1953-1954,1955-1955"]) == 0
    er = rows(root / "val" / "error_rates.csv")
    assert er[0][:4] == ["station_id", "model", "window", "rate"]
    models = {r[1] for r in er[1:]}
    assert models == {"two_state", "single_state_t"}
    assert (root / "val" / "run_length_errors.csv").exists()


def test_refuses_non_empty_output_without_force(workdir, capsys):
    root, _ = workdir
    args = ["report", "--out", str(root / "fit"), "--chain", str(root / "fit")]
    assert main(args) == 1
    assert "not empty" in capsys.readouterr().err
    before = (root / "fit" / "chain.json").read_bytes()
    assert main(args + ["--force"]) == 0
    assert (root / "fit" / "chain.json").read_bytes() == before


def test_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["fit"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["nonsense"])
    assert e.value.code == 2
    assert main(["report", "--out", str(tmp_path / "r"), "--chain", str(tmp_path / "none")]) == 1
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "st.csv"
    bad.write_text("id,name,lon,lat\n")
    assert main(["thresholds", "--out", str(tmp_path / "t"), "--stations", str(bad),
                 "--obs", str(bad)]) == 1
