"""Command-line pipeline: ingest -> select-scheme -> train -> evaluate.

Stages talk through files in the output directory:

    panel.csv            daily panel with a train/test split column
    stationarity.csv     ADF test per column
    scheme.json          selected (dt, k) and how it was chosen
    mi_grid_*.csv        summed MI over the scheme grid, per target
    mi_ranking.csv       per-feature MI under the selected scheme
    models/*.json        trained models + manifest.json
    history/*.csv        per-epoch LSTM MAPE
    report.json/.txt     test-set metrics and residual diagnostics
    predictions.csv      window_end,target,prediction,model
    figures/*.png        plots of the above
    run.log              timestamped log (the only non-reproducible file)

Exit codes: 0 ok, 2 data error, 3 infeasible scheme, 4 training failure,
5 evaluation mismatch, 64 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from . import plotting
from .benchmarks import (
    DEFAULT_C_GRID, GarchParams, LinearModel, build_lag_matrix, garch_fit, garch_forecast,
    select_linear,
)
from .diagnostics import build_report
from .errors import DataError, EvaluationMismatch, InfeasibleSchemeError, TrendvolError, UsageError
from .infometrics import (
    DEFAULT_DT_VALUES, DEFAULT_K_VALUES, PAPER_REDUCED_FEATURES, rank_features, scan_grid,
    select_scheme,
)
from .lstm import TrainConfig, model_from_json, model_to_json, predict, train
from .market_data import (
    RETURN, VOLATILITY, FeaturePanel, adf_test, assemble_panel, format_ohlc_csv,
    format_trends_csv, parse_ohlc, parse_trends, split_train_test,
)
from .scheme import INF, Scheme, aggregate_panel, apply_scheme, format_k, parse_k, training_stats
from .synth import SynthConfig, synth_generate

log = logging.getLogger("trendvol")

ALL_MODELS = ("lstm", "lstm_r", "garch", "ridge", "lasso")
REPORT_NAMES = {"lstm": "LSTM_0", "lstm_r": "LSTM_r", "garch": "GARCH", "ridge": "Ridge", "lasso": "Lasso"}
FEATURE_ALIASES = {"volatility": VOLATILITY, "return": RETURN}

DEFAULTS = {
    "ohlc": None,
    "trends": None,
    "out": "out",
    "dt": "auto",
    "k": "auto",
    "lag": 10,
    "batch": 32,
    "epochs": 600,
    "val_frac": 0.2,
    "seed": 0,
    "models": ",".join(ALL_MODELS),
    "features": ",".join(PAPER_REDUCED_FEATURES),
    "target": "volatility",
    "bins": 10,
    "min_samples": 1000,
    "train_frac": 0.7,
    "lr": 1e-3,
    "cell_dim": 1,
    "init_constant": 0.05,
    "dt_grid": ",".join(str(v) for v in DEFAULT_DT_VALUES),
    "k_grid": ",".join(format_k(k) for k in DEFAULT_K_VALUES),
    "c_grid": ",".join(repr(float(c)) for c in DEFAULT_C_GRID),
    "mc_reps": 10_000,
    "max_lag": 20,
    "plots": True,
    "normalize_target": False,
}
_INT_KEYS = {"lag", "batch", "epochs", "seed", "bins", "min_samples", "cell_dim", "mc_reps", "max_lag"}
_FLOAT_KEYS = {"val_frac", "train_frac", "lr", "init_constant"}


def _as_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {value!r}")


def read_flat_config(path) -> dict:
    """Parse a flat ``key = value`` file; keys accept dashes or underscores."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    parser = configparser.ConfigParser()
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"bad config file {path}: {exc}") from None
    return {k.replace("-", "_"): v for k, v in parser["run"].items()}


@dataclass
class RunConfig:
    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def out_dir(self) -> Path:
        return Path(self.values["out"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch, epochs=self.epochs, lag_len=self.lag,
            validation_fraction=self.val_frac, lr=self.lr, seed=self.seed,
            init_constant=self.init_constant, cell_dim=self.cell_dim,
            normalize_target=self.normalize_target,
        )

    def model_list(self) -> list[str]:
        names = _split_list(self.models)
        bad = [m for m in names if m not in ALL_MODELS]
        if bad or not names:
            raise UsageError(f"unknown model(s) {bad}; choose from {', '.join(ALL_MODELS)}")
        return names

    def feature_list(self) -> list[str]:
        return [FEATURE_ALIASES.get(f, f) for f in _split_list(self.features)]


def _split_list(text) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = dict(DEFAULTS)
    if getattr(args, "config", None):
        file_values = read_flat_config(args.config)
        unknown = set(file_values) - set(DEFAULTS) - set(SYNTH_FLAGS)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        values.update({k: v for k, v in file_values.items() if k in DEFAULTS})
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    try:
        for key in _INT_KEYS:
            values[key] = int(values[key])
        for key in _FLOAT_KEYS:
            values[key] = float(values[key])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad numeric option: {exc}") from None
    values["plots"] = _as_bool(values["plots"])
    values["normalize_target"] = _as_bool(values["normalize_target"])
    if values["target"] not in ("volatility", "return"):
        raise UsageError("--target must be volatility or return")
    return RunConfig(values)


# ---------------------------------------------------------------- file helpers

def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _read(path: Path, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"{what} not found: {path}") from None
    except OSError as exc:
        raise DataError(f"cannot read {what} {path}: {exc.strerror}") from None


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _setup_logging(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()
    handler = logging.FileHandler(out_dir / "run.log", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    log.propagate = False


def write_panel_cache(path: Path, train: FeaturePanel, test: FeaturePanel) -> Path:
    out = io.StringIO()
    names = train.feature_order
    out.write(",".join(["date", "split", "clamped"] + names) + "\n")
    for split, panel in (("train", train), ("test", test)):
        for i, d in enumerate(panel.dates):
            row = [d.isoformat(), split, str(int(panel.clamped[i]))]
            row += [repr(float(panel.columns[n][i])) for n in names]
            out.write(",".join(row) + "\n")
    return _write(path, out.getvalue())


def read_panel_cache(path: Path) -> tuple[FeaturePanel, FeaturePanel]:
    text = _read(path, "panel cache (run `ingest` first)")
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    if header[:3] != ["date", "split", "clamped"]:
        raise DataError(f"{path}: not a panel cache")
    names = header[3:]
    parts = {}
    for split in ("train", "test"):
        sel = [r for r in body if r[1] == split]
        if not sel:
            raise DataError(f"{path}: no {split} rows")
        parts[split] = FeaturePanel(
            dates=tuple(date.fromisoformat(r[0]) for r in sel),
            columns={n: np.array([float(r[3 + j]) for r in sel]) for j, n in enumerate(names)},
            clamped=np.array([r[2] == "1" for r in sel]),
        )
    return parts["train"], parts["test"]


def read_scheme(out_dir: Path) -> Scheme:
    doc = json.loads(_read(out_dir / "scheme.json", "scheme file (run `select-scheme` first)"))
    return Scheme.from_dict(doc["scheme"])


# ------------------------------------------------------------------- commands

def cmd_ingest(cfg: RunConfig) -> dict:
    if not cfg.ohlc or not cfg.trends:
        raise UsageError("ingest needs --ohlc and --trends")
    ohlc = parse_ohlc(_read(Path(cfg.ohlc), "OHLC file"), source=str(cfg.ohlc))
    trends = parse_trends(_read(Path(cfg.trends), "trend file"), source=str(cfg.trends))
    panel = assemble_panel(ohlc, trends)
    train_panel, test_panel = split_train_test(panel, cfg.train_frac)
    out = cfg.out_dir
    write_panel_cache(out / "panel.csv", train_panel, test_panel)

    lines = ["column,adf_statistic,p_value,lag_order,stationary_at_5pct"]
    n_stationary = 0
    for name in panel.feature_order:
        res = adf_test(panel.columns[name])
        n_stationary += res.stationary_at_5pct
        lines.append(f"{name},{res.test_statistic!r},{res.p_value!r},{res.lag_order},"
                     f"{str(res.stationary_at_5pct).lower()}")
    _write(out / "stationarity.csv", "\n".join(lines) + "\n")
    summary = {
        "rows": len(panel), "train_rows": len(train_panel), "test_rows": len(test_panel),
        "features": len(panel.feature_order), "first_date": panel.dates[0].isoformat(),
        "last_date": panel.dates[-1].isoformat(), "train_end": train_panel.dates[-1].isoformat(),
        "test_start": test_panel.dates[0].isoformat(), "stationary_columns": int(n_stationary),
        "clamped_days": int(panel.clamped.sum()),
    }
    log.info("ingest %s", summary)
    print(f"panel: {summary['rows']} days x {summary['features']} features "
          f"(train {summary['train_rows']} to {summary['train_end']}, test {summary['test_rows']})")
    print(f"stationary at 5%: {n_stationary}/{summary['features']} columns")
    return summary


def _parse_axis(text, conv, name):
    items = _split_list(text)
    if not items:
        raise UsageError(f"{name} grid is empty")
    try:
        return [conv(v) for v in items]
    except (ValueError, DataError) as exc:
        raise UsageError(f"bad {name} grid: {exc}") from None


def cmd_select_scheme(cfg: RunConfig) -> Scheme:
    dt_text, k_text = str(cfg.dt).strip().lower(), str(cfg.k).strip().lower()
    dt_values = _parse_axis(cfg.dt_grid, int, "dt")
    k_values = _parse_axis(cfg.k_grid, parse_k, "k")
    try:
        dt_fixed = None if dt_text == "auto" else int(dt_text)
        k_fixed = None if k_text == "auto" else parse_k(k_text)
    except (ValueError, DataError) as exc:
        raise UsageError(f"bad --dt/--k: {exc}") from None

    out = cfg.out_dir
    train_panel, _ = read_panel_cache(out / "panel.csv")
    doc = {"target": cfg.target, "bins": cfg.bins, "min_samples": cfg.min_samples}
    if dt_fixed is not None and k_fixed is not None:
        scheme = Scheme(dt_fixed, k_fixed)
        doc["selection"] = "explicit"
    else:
        if dt_fixed is not None:
            dt_values = [dt_fixed]
        if k_fixed is not None:
            k_values = [k_fixed]
        grids = {}
        for target in ("volatility", "return"):
            grids[target] = scan_grid(train_panel, dt_values, k_values, target, cfg.bins)
            _write(out / f"mi_grid_{target}.csv", grids[target].to_csv())
            if cfg.plots:
                plotting.plot_mi_grid(grids[target], out / "figures" / f"mi_grid_{target}.png")
        grid = grids[cfg.target]
        scheme = select_scheme(grid, cfg.min_samples)
        a = grid.dt_values.index(scheme.dt)
        b = grid.k_values.index(scheme.k)
        doc.update(selection="auto", mi_sum=float(grid.values[a, b]), n_samples=int(grid.n_samples[a, b]))
    doc["scheme"] = scheme.to_dict()
    ranking = rank_features(train_panel, scheme, cfg.target, cfg.bins)
    _write(out / "mi_ranking.csv", ranking.to_csv())
    if cfg.plots:
        plotting.plot_ranking(ranking, out / "figures" / "mi_ranking.png")
    _write(out / "scheme.json", _json(doc))
    log.info("scheme %s", doc)
    print(f"scheme: dt={scheme.dt} k={scheme.k_label} ({doc['selection']})")
    print("top features: " + ", ".join(f"{n} {v:.3f}" for n, v in ranking.entries[:6]))
    return scheme


def _linear_doc(model: LinearModel, scheme: Scheme, normalization: dict, scores: dict, name: str) -> dict:
    return {
        "format": "trendvol-linear/1", "model": name, "scheme": scheme.to_dict(),
        "normalization": normalization, "feature_order": list(model.feature_names),
        "validation_mape": {repr(c): v for c, v in scores.items()}, **model.to_dict(),
    }


def cmd_train(cfg: RunConfig) -> dict:
    out = cfg.out_dir
    train_panel, _ = read_panel_cache(out / "panel.csv")
    scheme = read_scheme(out)
    models = cfg.model_list()
    tconf = cfg.train_config()
    full_ds, _ = apply_scheme(train_panel, None, scheme, cfg.lag)
    manifest = {"scheme": scheme.to_dict(), "models": {}}
    histories = {}

    for name in models:
        if name in ("lstm", "lstm_r"):
            feats = None if name == "lstm" else cfg.feature_list()
            if feats is not None:
                missing = [f for f in feats if f not in train_panel.feature_order]
                if missing:
                    raise DataError(f"reduced feature set names unknown column(s): {', '.join(missing)}")
            ds = full_ds if feats is None else apply_scheme(train_panel, None, scheme, cfg.lag, feats)[0]
            result = train(ds, tconf)
            histories[REPORT_NAMES[name]] = result.history
            text = model_to_json(result.params, feature_order=ds.feature_names, scheme=scheme.to_dict(),
                                 normalization=ds.normalization(), config=tconf,
                                 best_epoch=result.best_epoch, name=name,
                                 target_scale=result.target_scale)
            _write(out / "models" / f"{name}.json", text)
            _write(out / "history" / f"{name}_history.csv", result.history_csv())
            best = result.history[result.best_epoch]
            log.info("%s: best epoch %d train %.3f val %.3f", name, best.epoch, best.train_mape, best.val_mape)
            print(f"{REPORT_NAMES[name]}: {ds.n_features} features, best epoch {best.epoch}, "
                  f"train MAPE {best.train_mape:.2f}%, validation MAPE {best.val_mape:.2f}%")
        elif name == "garch":
            g = garch_fit(full_ds.period_returns, seed=cfg.seed)
            _write(out / "models" / "garch.json", g.to_json())
            print(f"GARCH: omega={g.omega:.3e} alpha={g.alpha:.3f} beta={g.beta:.3f}")
        else:
            p = 2 if name == "ridge" else 1
            c_grid = [float(c) for c in _split_list(cfg.c_grid)]
            model, scores = select_linear(full_ds, p, c_grid)
            doc = _linear_doc(model, scheme, full_ds.normalization(), scores, name)
            _write(out / "models" / f"{name}.json", _json(doc))
            _write(out / "models" / f"{name}_coef.csv", model.to_csv())
            print(f"{REPORT_NAMES[name]}: C={model.C:g}, validation MAPE {scores[model.C]:.2f}%")
        manifest["models"][name] = f"{name}.json"
    _write(out / "models" / "manifest.json", _json(manifest))
    if cfg.plots and histories:
        plotting.plot_history(histories, out / "figures" / "training_history.png")
    return manifest


def _check_model(name, doc, scheme: Scheme, expected_norm: dict):
    if Scheme.from_dict(doc["scheme"]) != scheme:
        raise EvaluationMismatch(
            f"model {name!r} was trained under scheme {doc['scheme']} but the current scheme is "
            f"{scheme.to_dict()}")
    if doc.get("normalization") != expected_norm:
        raise EvaluationMismatch(f"model {name!r}: feature order or normalization stats differ from the panel")


def cmd_evaluate(cfg: RunConfig):
    out = cfg.out_dir
    train_panel, test_panel = read_panel_cache(out / "panel.csv")
    scheme = read_scheme(out)
    manifest = json.loads(_read(out / "models" / "manifest.json", "model manifest (run `train` first)"))
    if Scheme.from_dict(manifest["scheme"]) != scheme:
        raise EvaluationMismatch(f"models were trained under {manifest['scheme']}, scheme is {scheme.to_dict()}")
    ds_cache = {}

    def datasets(features):
        key = tuple(features) if features is not None else None
        if key not in ds_cache:
            ds_cache[key] = apply_scheme(train_panel, test_panel, scheme, cfg.lag, features)
        return ds_cache[key]

    full_tr, full_te = datasets(None)
    targets = full_te.target
    predictions = {}
    for name in [m for m in ALL_MODELS if m in manifest["models"]]:
        fname = manifest["models"][name]
        text = _read(out / "models" / fname, f"model file for {name}")
        if name in ("lstm", "lstm_r"):
            params, doc = model_from_json(text)
            if doc["config"]["lag_len"] != cfg.lag:
                raise EvaluationMismatch(f"model {name!r} uses lag {doc['config']['lag_len']}, not {cfg.lag}")
            tr, te = datasets(doc["feature_order"])
            _check_model(name, doc, scheme, tr.normalization())
            pred = predict(params, te, teacher_forcing=doc["config"].get("teacher_forcing", False),
                           target_scale=doc.get("target_scale", 1.0))
        elif name == "garch":
            g = GarchParams.from_json(text)
            fc = garch_forecast(g, np.concatenate([full_tr.period_returns, full_te.period_returns]))
            pred = fc[len(full_tr.period_returns) + full_te.target_index]
        else:
            doc = json.loads(text)
            tr, te = datasets(doc["feature_order"])
            _check_model(name, doc, scheme, tr.normalization())
            model = LinearModel.from_dict(doc)
            pred = model.predict(build_lag_matrix(te)[0])
            if doc["lag_len"] != cfg.lag:
                raise EvaluationMismatch(f"model {name!r} uses lag {doc['lag_len']}, not {cfg.lag}")
        if not np.array_equal(datasets(None)[1].target, targets):
            raise EvaluationMismatch("test targets differ between models")
        predictions[REPORT_NAMES[name]] = pred

    report = build_report(predictions, targets, [d.isoformat() for d in full_te.end_dates],
                          max_lag=cfg.max_lag, mc_reps=cfg.mc_reps, seed=cfg.seed)
    _write(out / "report.json", report.to_json())
    _write(out / "report.txt", report.to_text())
    _write(out / "predictions.csv", report.predictions_csv())
    if cfg.plots:
        plotting.plot_forecast(report, out / "figures" / "forecast.png")
        acf = report.diagnostics[report.best_model].get("acf")
        if acf:
            plotting.plot_residual_acf(acf, out / "figures" / "residual_acf.png", report.best_model)
    log.info("evaluate best=%s", report.best_model)
    print(report.to_text(), end="")
    return report


SYNTH_FLAGS = {"n_days": int, "n_trends": int, "n_coupled": int, "gamma": float}


def cmd_synth(args: argparse.Namespace) -> SynthConfig:
    values = {}
    if args.config:
        file_values = read_flat_config(args.config)
        synth_keys = set(SynthConfig.__dataclass_fields__)
        values = {k: v for k, v in file_values.items() if k in synth_keys}
        unknown = set(file_values) - synth_keys - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    for key in list(SYNTH_FLAGS) + ["seed"]:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    try:
        config = SynthConfig.from_mapping(values)
    except DataError as exc:
        raise UsageError(str(exc)) from None
    ohlc, trends = synth_generate(config)
    out = Path(args.out or DEFAULTS["out"])
    _write(out / "ohlc.csv", format_ohlc_csv(ohlc))
    _write(out / "trends.csv", format_trends_csv(trends))
    _write(out / "synth_config.txt", config.to_text())
    print(f"wrote {len(ohlc)} days and {len(trends)} trends to {out}")
    return config


# ------------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--out", help="output directory (default: out)")


def _data_flags(p):
    p.add_argument("--ohlc", help="OHLC CSV")
    p.add_argument("--trends", help="wide trends CSV")
    p.add_argument("--train-frac", dest="train_frac", type=float)


def _scheme_flags(p):
    p.add_argument("--dt", help="observation interval in days, or auto")
    p.add_argument("--k", help="normalization window, inf, or auto")
    p.add_argument("--target", choices=("volatility", "return"))
    p.add_argument("--bins", type=int)
    p.add_argument("--min-samples", dest="min_samples", type=int)
    p.add_argument("--dt-grid", dest="dt_grid", help="comma-separated dt values to scan")
    p.add_argument("--k-grid", dest="k_grid", help="comma-separated k values to scan (inf allowed)")


def _train_flags(p):
    p.add_argument("--lag", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--val-frac", dest="val_frac", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--cell-dim", dest="cell_dim", type=int)
    p.add_argument("--init-constant", dest="init_constant", type=float)
    p.add_argument("--models", help=f"comma-separated subset of {','.join(ALL_MODELS)}")
    p.add_argument("--features", help="feature subset for lstm_r (volatility/return aliases allowed)")
    p.add_argument("--c-grid", dest="c_grid", help="comma-separated regularization weights")
    p.add_argument("--normalize-target", dest="normalize_target", action="store_true", default=None,
                   help="train the LSTM on volatility divided by its training mean")


def _eval_flags(p):
    p.add_argument("--mc-reps", dest="mc_reps", type=int)
    p.add_argument("--max-lag", dest="max_lag", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trendvol", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse, align and split the data; ADF per column")
    _common(p); _data_flags(p)

    p = sub.add_parser("select-scheme", help="scan (dt, k) by mutual information and pick one")
    _common(p); _scheme_flags(p)
    p.add_argument("--no-plots", dest="plots", action="store_false", default=None)

    p = sub.add_parser("train", help="train LSTM and benchmark models")
    _common(p); _train_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-plots", dest="plots", action="store_false", default=None)

    p = sub.add_parser("evaluate", help="test-set metrics, diagnostics and predictions")
    _common(p); _eval_flags(p)
    p.add_argument("--lag", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-plots", dest="plots", action="store_false", default=None)

    p = sub.add_parser("run-all", help="ingest, select-scheme, train and evaluate in one go")
    _common(p); _data_flags(p); _scheme_flags(p); _train_flags(p); _eval_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-plots", dest="plots", action="store_false", default=None)

    p = sub.add_parser("synth", help="write synthetic OHLC and trend CSVs")
    _common(p)
    p.add_argument("--n-days", dest="n_days", type=int)
    p.add_argument("--n-trends", dest="n_trends", type=int)
    p.add_argument("--n-coupled", dest="n_coupled", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--seed", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            cmd_synth(args)
            return 0
        cfg = resolve_config(args)
        _setup_logging(cfg.out_dir)
        log.info("command %s", args.command)
        if args.command in ("ingest", "run-all"):
            cmd_ingest(cfg)
        if args.command in ("select-scheme", "run-all"):
            cmd_select_scheme(cfg)
        if args.command in ("train", "run-all"):
            cmd_train(cfg)
        if args.command in ("evaluate", "run-all"):
            cmd_evaluate(cfg)
    except TrendvolError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        last = getattr(exc, "last_finite_epoch", None)
        if last is not None:
            print(f"last finite epoch: {last}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
