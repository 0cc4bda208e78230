import csv
import json

import numpy as np
import pytest

from latentkrig import load_ensemble, load_fit, load_frame
from latentkrig.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def data_dir(tmp_path, capsys):
    out = tmp_path / "panel"
    code, stdout, _ = run(capsys, "simulate", "--n", "60", "--p", "16",
                          "--seed", "11", "--out", str(out))
    assert code == 0
    assert "seed=11" in stdout
    return out


def test_simulate_writes_panel(data_dir):
    frame = load_frame(data_dir / "locations.csv",
                       data_dir / "observations.csv")
    assert frame.n == 60 and frame.p == 16
    truth = (data_dir / "truth_xi.csv").read_text().splitlines()
    assert truth[0] == "t,id,value"
    assert len(truth) == 1 + 60 * 16


def test_simulate_evaluation_extras(tmp_path, capsys):
    out = tmp_path / "panel"
    code, stdout, _ = run(capsys, "simulate", "--n", "30", "--p", "10",
                          "--seed", "2", "--n-future", "3",
                          "--holdout-sites", "4", "--out", str(out))
    assert code == 0
    future = (out / "future_y.csv").read_text().splitlines()
    assert len(future) == 1 + 3 * 10
    holdout_locs = (out / "holdout_locations.csv").read_text().splitlines()
    assert len(holdout_locs) == 1 + 4


def test_fit_single_and_krige(data_dir, tmp_path, capsys):
    model = tmp_path / "fit.json"
    code, stdout, _ = run(capsys, "fit", str(data_dir), "--tau", "0.0",
                          "--seed", "3", "--out", str(model))
    assert code == 0
    assert "tau=0.0" in stdout
    assert any(line.startswith("d_hat=") for line in stdout.splitlines())
    fit, locs = load_fit(model)
    assert locs is not None

    # kriging to stdout, negative coordinate after --at
    code, stdout, _ = run(capsys, "krige-space", str(model),
                          "--at", "-0.5,0.25", "--h", "0.4")
    assert code == 0
    rows = stdout.strip().splitlines()
    assert rows[0] == "t,x1,x2,value"
    assert len(rows) == 1 + 60
    assert rows[1].split(",")[1] == "-0.5"

    # file output with bandwidth selection and two sites
    out_csv = tmp_path / "pred.csv"
    code, stdout, _ = run(capsys, "krige-space", str(model),
                          "--at", "0.0,0.0", "--at", "0.3,-0.7",
                          "--out", str(out_csv))
    assert code == 0
    assert "h=" in stdout and f"wrote {out_csv}" in stdout
    with open(out_csv, newline="") as fh:
        assert len(list(csv.reader(fh))) == 1 + 2 * 60


def test_fit_ensemble_and_krige_json(data_dir, tmp_path, capsys):
    model = tmp_path / "ens.json"
    code, stdout, _ = run(capsys, "fit", str(data_dir), "--tau", "0.0",
                          "--ensemble", "4", "--seed", "9",
                          "--out", str(model))
    assert code == 0
    assert "J=4" in stdout
    ens, locs = load_ensemble(model)
    assert ens.J == 4

    code, stdout, _ = run(capsys, "krige-space", str(model),
                          "--at", "0.1,0.1", "--h", "0.5",
                          "--format", "json")
    assert code == 0
    doc = json.loads(stdout)
    assert doc["h"] == 0.5
    assert len(doc["sites"]) == 1
    assert len(doc["sites"][0]["values"]) == 60


def test_fit_tau_grid_cv(data_dir, tmp_path, capsys):
    model = tmp_path / "cvfit.json"
    code, stdout, _ = run(capsys, "fit", str(data_dir),
                          "--tau-grid", "0,0.5", "--seed", "4",
                          "--out", str(model))
    assert code == 0
    tau_line = [l for l in stdout.splitlines() if l.startswith("tau=")][0]
    assert float(tau_line.split("=")[1]) in (0.0, 0.5)


def test_forecast_csv(data_dir, tmp_path, capsys):
    out = tmp_path / "fc.csv"
    code, stdout, _ = run(capsys, "forecast", str(data_dir), "--j", "1,2",
                          "--j0", "3", "--tau", "0.0", "--J", "3",
                          "--seed", "5", "--out", str(out))
    assert code == 0
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["horizon", "id", "value"]
    assert len(rows) == 1 + 2 * 16
    assert {r[0] for r in rows[1:]} == {"1", "2"}


def test_impute_fills_and_reports(tmp_path, capsys):
    # panel with holes, written by hand through simulate + masking
    src = tmp_path / "panel"
    run(capsys, "simulate", "--n", "40", "--p", "12", "--seed", "7",
        "--out", str(src))
    frame = load_frame(src / "locations.csv", src / "observations.csv")
    obs = np.array(frame.obs)
    rng = np.random.default_rng(1)
    mask = rng.random(obs.shape) < 0.04
    obs[mask] = np.nan
    from latentkrig import SpatioTemporalFrame, save_frame
    holed_dir = tmp_path / "holed"
    save_frame(SpatioTemporalFrame(locations=frame.locations, obs=obs),
               holed_dir)
    out = tmp_path / "filled"
    code, stdout, _ = run(capsys, "impute", str(holed_dir),
                          "--out", str(out))
    assert code == 0
    assert f"filled={int(mask.sum())}" in stdout
    back = load_frame(out / "locations.csv", out / "observations.csv")
    assert back.is_complete
    np.testing.assert_array_equal(back.obs[~mask], frame.obs[~mask])


def test_cv_command(data_dir, tmp_path, capsys):
    out = tmp_path / "cv.json"
    code, stdout, _ = run(capsys, "cv", str(data_dir),
                          "--tau-grid", "0,1", "--seed", "6",
                          "--out", str(out))
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["tau"] in (0.0, 1.0)
    assert doc["seed"] == 6


def test_bench_command(tmp_path, capsys):
    out = tmp_path / "bench"
    code, stdout, _ = run(capsys, "bench", "--table", "fig1_distance",
                          "--replicates", "3", "--seed", "8",
                          "--n", "40", "--p", "16",
                          "--tau-grid", "0,0.5", "--scale-factor", "0.02",
                          "--out", str(out))
    assert code == 0
    assert (out / "fig1_distance.csv").exists()
    assert (out / "fig1_distance_summary.json").exists()
    assert "n=40 p=16" in stdout
    # --n without --p is refused
    code, _, err = run(capsys, "bench", "--table", "fig1_distance",
                       "--replicates", "3", "--seed", "8", "--n", "40",
                       "--out", str(out))
    assert code == 2
    assert "error: bench" in err


def test_deseason_removes_periodic_means(tmp_path, capsys):
    src = tmp_path / "obs.csv"
    n, period = 8, 2
    values = {("a", t): 10.0 + (t % period) + 0.1 * t for t in range(n)}
    values.update({("b", t): 5.0 - (t % period) for t in range(n)})
    with open(src, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "id", "value"])
        for (loc, t), v in sorted(values.items()):
            w.writerow([t + 1, loc, repr(v)])
    out = tmp_path / "deseason.csv"
    code, stdout, _ = run(capsys, "deseason", str(src), "--period", "2",
                          "--out", str(out))
    assert code == 0
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "id", "value"]
    got = {(r[1], int(r[0])): float(r[2]) for r in rows[1:]}
    # per (id, phase) means are zero after the pass
    for loc in ("a", "b"):
        for phase in range(period):
            vals = [got[(loc, t + 1)] for t in range(n) if t % period == phase]
            assert abs(np.mean(vals)) < 1e-12
    # original timestamps preserved
    assert {int(r[0]) for r in rows[1:]} == set(range(1, n + 1))


def test_deseason_period_guard(tmp_path, capsys):
    src = tmp_path / "obs.csv"
    with open(src, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "id", "value"])
        for t in range(4):
            w.writerow([t, "a", "1.0"])
    code, _, err = run(capsys, "deseason", str(src), "--period", "3",
                       "--out", str(src.with_suffix(".out")))
    assert code == 2
    assert "period" in err


def test_error_exit_codes(tmp_path, capsys):
    # validation problem: directory does not exist
    code, _, err = run(capsys, "fit", str(tmp_path / "nope"), "--tau", "0",
                       "--seed", "1", "--out", str(tmp_path / "x.json"))
    assert code == 2
    assert err.startswith("error: fit:")


def test_numerical_exit_code(data_dir, tmp_path, capsys):
    model = tmp_path / "fit.json"
    run(capsys, "fit", str(data_dir), "--tau", "0.0", "--seed", "3",
        "--out", str(model))
    # compactly supported kernel far from every site: empty window
    code, _, err = run(capsys, "krige-space", str(model),
                       "--at", "99.0,99.0", "--h", "0.5",
                       "--kernel", "epanechnikov_2d")
    assert code == 3
    assert "no kernel mass" in err


def test_bad_point_spec(data_dir, tmp_path, capsys):
    model = tmp_path / "fit.json"
    run(capsys, "fit", str(data_dir), "--tau", "0.0", "--seed", "3",
        "--out", str(model))
    code, _, err = run(capsys, "krige-space", str(model),
                       "--at", "1.0", "--h", "0.5")
    assert code == 2
    code, _, err = run(capsys, "krige-space", str(model),
                       "--at", "0,0", "--h", "-2")
    assert code == 2
