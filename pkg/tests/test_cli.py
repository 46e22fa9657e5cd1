import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from trendvol.cli import main

SMALL = ["--n-days", "700", "--n-trends", "5", "--n-coupled", "2"]
FAST = ["--epochs", "3", "--mc-reps", "50", "--min-samples", "100", "--dt-grid", "1,2,3",
        "--k-grid", "20,inf", "--max-lag", "10", "--features", "sigma,r,advert"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert run("synth", "--out", d, *SMALL) == 0
    return d


def _data(d):
    return ["--ohlc", d / "ohlc.csv", "--trends", d / "trends.csv"]


@pytest.fixture(scope="module")
def full_run(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run("run-all", *_data(data_dir), "--out", out, *FAST) == 0
    return out


def _digest(root: Path, skip=("run.log",)):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name not in skip}


# ---------------------------------------------------------------- ingest

def test_ingest_writes_cache(data_dir, tmp_path, capsys):
    assert run("ingest", *_data(data_dir), "--out", tmp_path) == 0
    assert (tmp_path / "panel.csv").exists()
    header = (tmp_path / "panel.csv").read_text().splitlines()[0].split(",")
    assert header[:5] == ["date", "split", "clamped", "r", "sigma"]
    assert "stationary at 5%" in capsys.readouterr().out


def test_ingest_missing_trend_file(data_dir, tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    code = run("ingest", "--ohlc", data_dir / "ohlc.csv", "--trends", missing, "--out", tmp_path)
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_ingest_bad_row_reports_line(data_dir, tmp_path, capsys):
    lines = (data_dir / "ohlc.csv").read_text().splitlines()
    lines[5] = lines[5].replace(",", ",x", 1)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    assert run("ingest", "--ohlc", bad, "--trends", data_dir / "trends.csv", "--out", tmp_path) == 2
    assert ":6" in capsys.readouterr().err


def test_synthetic_columns_stationary(full_run):
    rows = list(csv.DictReader(open(full_run / "stationarity.csv", encoding="utf-8")))
    assert len(rows) == 7
    assert all(r["stationary_at_5pct"] == "true" for r in rows)


# ---------------------------------------------------------------- select-scheme

def test_explicit_scheme_skips_scan(full_run, tmp_path):
    (tmp_path / "panel.csv").write_bytes((full_run / "panel.csv").read_bytes())
    assert run("select-scheme", "--out", tmp_path, "--dt", "3", "--k", "inf", "--no-plots") == 0
    doc = json.loads((tmp_path / "scheme.json").read_text())
    assert doc["scheme"] == {"dt": 3, "k": "inf"}
    assert doc["selection"] == "explicit"
    assert not (tmp_path / "mi_grid_volatility.csv").exists()
    assert (tmp_path / "mi_ranking.csv").exists()


def _grid_sums(path):
    return {(r["dt"], r["k"]): float(r["mi_sum"]) for r in csv.DictReader(open(path, encoding="utf-8"))
            if r["feasible"] == "true"}


def test_return_grid_below_volatility_grid(full_run):
    vol = _grid_sums(full_run / "mi_grid_volatility.csv")
    ret = _grid_sums(full_run / "mi_grid_return.csv")
    assert vol.keys() == ret.keys() and len(vol) == 6
    assert all(ret[c] < vol[c] for c in vol)


def test_empty_grid_is_usage_error(full_run, tmp_path):
    (tmp_path / "panel.csv").write_bytes((full_run / "panel.csv").read_bytes())
    assert run("select-scheme", "--out", tmp_path, "--dt-grid", "", "--no-plots") == 64


def test_infeasible_scheme_exit_3(full_run, tmp_path):
    (tmp_path / "panel.csv").write_bytes((full_run / "panel.csv").read_bytes())
    assert run("select-scheme", "--out", tmp_path, "--min-samples", "100000", "--no-plots",
               "--dt-grid", "1,2", "--k-grid", "inf") == 3


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--bogus"])
    assert exc.value.code == 64


# ---------------------------------------------------------------- train

def _staged(full_run, tmp_path):
    for name in ("panel.csv", "scheme.json"):
        (tmp_path / name).write_bytes((full_run / name).read_bytes())
    return tmp_path


def test_train_model_subset(full_run, tmp_path):
    out = _staged(full_run, tmp_path)
    assert run("train", "--out", out, "--models", "lstm,garch", "--epochs", "2", "--no-plots") == 0
    files = sorted(p.name for p in (out / "models").glob("*.json") if p.name != "manifest.json")
    assert files == ["garch.json", "lstm.json"]


def test_train_same_seed_identical(full_run, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        out.mkdir()
        _staged(full_run, out)
    for out in (a, b):
        assert run("train", "--out", out, "--models", "lstm,ridge", "--epochs", "4", "--seed", "7",
                   "--no-plots") == 0
    assert _digest(a / "models") == _digest(b / "models")


def test_train_reduced_features(full_run, tmp_path):
    out = _staged(full_run, tmp_path)
    assert run("train", "--out", out, "--models", "lstm_r", "--features", "volatility,return",
               "--epochs", "2", "--no-plots") == 0
    doc = json.loads((out / "models" / "lstm_r.json").read_text())
    assert doc["feature_order"] == ["sigma", "r"]
    assert doc["n_features"] == 2
    assert len(doc["params"]["W_f"][0]) == 3  # fed-back volatility plus two inputs


def test_train_normalized_target(full_run, tmp_path):
    out = _staged(full_run, tmp_path)
    assert run("train", "--out", out, "--models", "lstm", "--epochs", "2", "--normalize-target",
               "--no-plots") == 0
    doc = json.loads((out / "models" / "lstm.json").read_text())
    assert doc["config"]["normalize_target"] is True
    assert 0 < doc["target_scale"] < 1
    assert run("evaluate", "--out", out, "--mc-reps", "20", "--no-plots") == 0
    preds = [float(r["prediction"]) for r in csv.DictReader(open(out / "predictions.csv", encoding="utf-8"))]
    targets = [float(r["target"]) for r in csv.DictReader(open(out / "predictions.csv", encoding="utf-8"))]
    # predictions come back in raw volatility units
    assert 0.2 < np.mean(preds) / np.mean(targets) < 5


def test_train_unknown_feature(full_run, tmp_path):
    out = _staged(full_run, tmp_path)
    assert run("train", "--out", out, "--models", "lstm_r", "--features", "sigma,nosuch",
               "--epochs", "1", "--no-plots") == 2


def test_train_divergence_exit_4(full_run, tmp_path, capsys):
    # an unbounded step size sends the first update to non-finite parameters
    out = _staged(full_run, tmp_path)
    assert run("train", "--out", out, "--models", "lstm", "--epochs", "5", "--lr", "inf",
               "--no-plots") == 4
    assert "last finite epoch" in capsys.readouterr().err


def test_train_without_scheme(full_run, tmp_path):
    (tmp_path / "panel.csv").write_bytes((full_run / "panel.csv").read_bytes())
    assert run("train", "--out", tmp_path, "--no-plots") == 2


# ---------------------------------------------------------------- evaluate

def test_report_has_every_model(full_run):
    doc = json.loads((full_run / "report.json").read_text())
    assert sorted(doc["metrics"]) == ["GARCH", "LSTM_0", "LSTM_r", "Lasso", "Ridge"]
    header = (full_run / "predictions.csv").read_text().splitlines()[0]
    assert header == "window_end,target,prediction,model"
    for fig in ("forecast", "residual_acf", "training_history", "mi_grid_volatility", "mi_ranking"):
        assert (full_run / "figures" / f"{fig}.png").stat().st_size > 1000


def test_all_models_share_targets(full_run):
    rows = list(csv.DictReader(open(full_run / "predictions.csv", encoding="utf-8")))
    by_model = {}
    for r in rows:
        by_model.setdefault(r["model"], []).append((r["window_end"], r["target"]))
    series = list(by_model.values())
    assert all(s == series[0] for s in series)


def test_evaluate_scheme_mismatch(full_run, tmp_path):
    out = tmp_path
    for p in full_run.rglob("*"):
        if p.is_file() and p.suffix in (".csv", ".json"):
            dest = out / p.relative_to(full_run)
            dest.parent.mkdir(parents=True, exist_ok=True)
            dest.write_bytes(p.read_bytes())
    scheme = json.loads((full_run / "scheme.json").read_text())["scheme"]
    other = "1" if scheme["dt"] != 1 else "2"
    assert run("select-scheme", "--out", out, "--dt", other, "--k", "inf", "--no-plots") == 0
    assert run("evaluate", "--out", out, "--mc-reps", "20", "--no-plots") == 5


# ---------------------------------------------------------------- synth

def test_synth_round_trip(tmp_path):
    assert run("synth", "--out", tmp_path / "d", "--n-days", "400", "--n-trends", "3") == 0
    assert run("ingest", *_data(tmp_path / "d"), "--out", tmp_path / "o") == 0


def test_synth_same_seed_identical(tmp_path):
    for name in ("a", "b"):
        assert run("synth", "--out", tmp_path / name, *SMALL, "--seed", "3") == 0
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")


def test_synth_gamma_changes_ranking(tmp_path):
    tops = {}
    for gamma in ("0", "0.8"):
        d = tmp_path / gamma
        assert run("synth", "--out", d, "--n-days", "1500", "--n-trends", "6", "--n-coupled", "2",
                   "--gamma", gamma) == 0
        assert run("ingest", *_data(d), "--out", d / "o") == 0
        assert run("select-scheme", "--out", d / "o", "--dt", "1", "--k", "inf", "--no-plots") == 0
        rows = list(csv.DictReader(open(d / "o" / "mi_ranking.csv", encoding="utf-8")))
        tops[gamma] = [r["feature"] for r in rows if r["feature"] not in ("r", "sigma")][:2]
    assert sorted(tops["0.8"]) == ["advert", "airtvl"]
    assert tops["0"] != tops["0.8"]


@pytest.mark.parametrize("bad", [["--gamma", "2"], ["--n-days", "10"], ["--n-coupled", "99"]])
def test_synth_invalid_config(tmp_path, bad):
    assert run("synth", "--out", tmp_path, *bad) == 64


# ---------------------------------------------------------------- config and reproducibility

def test_config_file_and_flag_override(data_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"ohlc = {data_dir / 'ohlc.csv'}\ntrends = {data_dir / 'trends.csv'}\n"
                   "dt = 2\nk = inf\nepochs = 2\nmodels = garch\nmc-reps = 20\n")
    out = tmp_path / "o"
    assert run("run-all", "--config", cfg, "--out", out, "--dt", "3", "--no-plots") == 0
    assert json.loads((out / "scheme.json").read_text())["scheme"] == {"dt": 3, "k": "inf"}
    assert sorted(json.loads((out / "report.json").read_text())["metrics"]) == ["GARCH"]


def test_config_file_unknown_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochz = 3\n")
    assert run("train", "--config", cfg, "--out", tmp_path) == 64


def test_rerun_byte_identical(data_dir, full_run, tmp_path):
    out = tmp_path / "again"
    assert run("run-all", *_data(data_dir), "--out", out, *FAST) == 0
    first, second = _digest(full_run), _digest(out)
    assert first.keys() == second.keys()
    assert first == second
    assert any(k.endswith(".png") for k in first)
    assert (out / "run.log").exists()
