"""Forecast error metrics and residual diagnostics.

Residuals are ``prediction - target``. ``residual_std`` uses the sample
(n - 1) convention, so ``rmse**2 == mean**2 + std**2 * (n - 1) / n``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import DataError

# Reference values reported for the original daily S&P 500 study
# (3-day horizon, test period 2012-04-12 .. 2015-07-24).
PAPER_TABLE2 = {
    "LSTM_0": {"rmse": 2.89e-3, "mape": 24.2},
    "LSTM_r": {"rmse": 2.88e-3, "mape": 27.2},
    "GARCH": {"rmse": 3.13e-3, "mape": 34.9},
}


@dataclass(frozen=True)
class Metrics:
    mape: float
    rmse: float
    n: int
    residual_mean: float
    residual_std: float


def compute_metrics(predictions, targets) -> Metrics:
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(targets, dtype=float)
    if p.shape != y.shape:
        raise DataError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise DataError("no predictions")
    if np.any(y <= 0):
        raise DataError("targets must be strictly positive")
    e = p - y
    std = float(e.std(ddof=1)) if e.size > 1 else 0.0
    return Metrics(
        mape=float(100.0 * np.mean(np.abs(e) / y)),
        rmse=float(np.sqrt(np.mean(e * e))),
        n=int(e.size),
        residual_mean=float(e.mean()),
        residual_std=std,
    )


@dataclass(frozen=True)
class AcfResult:
    lags: list[int]
    acf: list[float]
    pacf: list[float]
    band: float
    significant_lags: list[int]
    significant_pacf_lags: list[int] = field(default_factory=list)


def sample_acf(x, max_lag: int) -> np.ndarray:
    """Autocorrelations at lags ``0..max_lag`` with denominator ``n``."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    denom = d @ d
    if denom == 0:
        raise DataError("zero-variance series")
    n = len(x)
    return np.array([1.0] + [(d[: n - h] @ d[h:]) / denom for h in range(1, max_lag + 1)])


def durbin_levinson(acf) -> np.ndarray:
    """Partial autocorrelations at lags ``1..len(acf)-1`` from ``acf[0..]``."""
    rho = np.asarray(acf, dtype=float)
    m = len(rho) - 1
    pacf = np.zeros(m)
    phi = np.zeros(0)
    v = 1.0
    for k in range(1, m + 1):
        num = rho[k] - phi @ rho[k - 1:0:-1] if k > 1 else rho[1]
        a = num / v
        phi = np.concatenate([phi - a * phi[::-1], [a]])
        v *= 1.0 - a * a
        pacf[k - 1] = a
    return pacf


def acf_pacf(residuals, max_lag: int = 20) -> AcfResult:
    x = np.asarray(residuals, dtype=float)
    if len(x) <= max_lag + 5:
        raise DataError(f"series of length {len(x)} too short for max_lag={max_lag}")
    rho = sample_acf(x, max_lag)
    pacf = durbin_levinson(rho)
    band = 2.0 / math.sqrt(len(x))
    lags = list(range(1, max_lag + 1))
    return AcfResult(
        lags=lags,
        acf=[float(v) for v in rho[1:]],
        pacf=[float(v) for v in pacf],
        band=band,
        significant_lags=[h for h in lags if abs(rho[h]) > band],
        significant_pacf_lags=[h for h in lags if abs(pacf[h - 1]) > band],
    )


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    reject_at_1pct: bool
    mc_reps: int


def _ks_normal_stat(samples: np.ndarray) -> np.ndarray:
    """KS distance of each row to the normal fitted by its own mean and std."""
    s = np.sort(samples, axis=-1)
    n = s.shape[-1]
    z = (s - s.mean(axis=-1, keepdims=True)) / s.std(axis=-1, ddof=1, keepdims=True)
    cdf = ndtr(z)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - cdf, axis=-1)
    d_minus = np.max(cdf - (i - 1) / n, axis=-1)
    return np.maximum(d_plus, d_minus)


def lilliefors_null(n: int, mc_reps: int, seed: int = 0, chunk: int = 1000) -> np.ndarray:
    """Monte-Carlo null distribution of the Lilliefors statistic for sample size ``n``.

    Chunk seeds are spawned from ``seed`` so the table is reproducible.
    """
    n_chunks = -(-mc_reps // chunk)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    out = []
    for c, ss in enumerate(children):
        size = min(chunk, mc_reps - c * chunk)
        out.append(_ks_normal_stat(np.random.default_rng(ss).standard_normal((size, n))))
    return np.concatenate(out)


def lilliefors_test(residuals, mc_reps: int = 10_000, seed: int = 0) -> KsResult:
    """One-sample KS normality test with estimated mean/std (Lilliefors).

    The p-value is ``(1 + #{null >= D}) / (mc_reps + 1)`` over simulated
    normal samples of the same size with parameters re-estimated each rep.
    """
    x = np.asarray(residuals, dtype=float)
    if len(x) < 20:
        raise DataError("Lilliefors test needs at least 20 points")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite residuals")
    if np.ptp(x) == 0:
        raise DataError("zero-variance residuals")
    if mc_reps < 1:
        raise DataError("mc_reps must be >= 1")
    d = float(_ks_normal_stat(x))
    null = lilliefors_null(len(x), mc_reps, seed)
    p = (1.0 + np.count_nonzero(null >= d)) / (mc_reps + 1.0)
    return KsResult(d, float(p), bool(p < 0.01), mc_reps)


@dataclass
class ModelReport:
    targets: np.ndarray
    predictions: dict[str, np.ndarray]
    metrics: dict[str, Metrics]
    diagnostics: dict[str, dict]
    best_model: str
    relative_mape_reduction: dict[str, float]
    window_end: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "best_model": self.best_model,
            "n_test_windows": int(len(self.targets)),
            "metrics": {k: asdict(v) for k, v in self.metrics.items()},
            "relative_mape_reduction_of_best": self.relative_mape_reduction,
            "diagnostics": self.diagnostics,
            "reference_values": {
                "note": "original study, full-scale S&P 500 data; not a desk-scale target",
                "table": PAPER_TABLE2,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        names = list(self.metrics)
        width = max(len("model"), *(len(n) for n in names))
        lines = [
            f"{'model':<{width}}  {'RMSE':>12}  {'MAPE %':>9}  {'resid mean':>12}  {'resid std':>12}  {'n':>5}",
        ]
        for name in names:
            m = self.metrics[name]
            lines.append(
                f"{name:<{width}}  {m.rmse:12.4e}  {m.mape:9.3f}  {m.residual_mean:12.4e}  "
                f"{m.residual_std:12.4e}  {m.n:5d}"
            )
        lines.append("")
        lines.append(f"best model by MAPE: {self.best_model}")
        for other, red in self.relative_mape_reduction.items():
            lines.append(f"  relative MAPE reduction vs {other}: {red:.1f}%")
        diag = self.diagnostics.get(self.best_model)
        if diag:
            lines.append(
                f"  residual ACF lags outside +/-{diag['acf']['band']:.4f}: "
                f"{diag['acf']['significant_lags'] or 'none'}"
            )
            lines.append(
                f"  residual PACF lags outside band: {diag['acf']['significant_pacf_lags'] or 'none'}"
            )
            ks = diag["lilliefors"]
            lines.append(
                f"  Lilliefors D={ks['statistic']:.4f} p={ks['p_value']:.4g} "
                f"({'reject' if ks['reject_at_1pct'] else 'do not reject'} normality at 1%)"
            )
        lines.append("")
        lines.append("reference (original study): " + ", ".join(
            f"{k} RMSE {v['rmse']:.2e} MAPE {v['mape']}%" for k, v in PAPER_TABLE2.items()))
        return "\n".join(lines) + "\n"

    def predictions_csv(self) -> str:
        lines = ["window_end,target,prediction,model"]
        for name, pred in self.predictions.items():
            for i, (y, p) in enumerate(zip(self.targets, pred)):
                end = self.window_end[i] if self.window_end else str(i)
                lines.append(f"{end},{float(y)!r},{float(p)!r},{name}")
        return "\n".join(lines) + "\n"


def relative_reduction(best_mape: float, other_mape: float) -> float:
    """Percent by which ``best_mape`` undercuts ``other_mape``."""
    return 100.0 * (other_mape - best_mape) / other_mape


def build_report(models: Mapping[str, Sequence[float]], targets, window_end=None,
                 max_lag: int = 20, mc_reps: int = 10_000, seed: int = 0) -> ModelReport:
    """Metrics and residual diagnostics for prediction sets aligned to ``targets``."""
    y = np.asarray(targets, dtype=float)
    if not models:
        raise DataError("no models to report")
    preds = {}
    for name, p in models.items():
        p = np.asarray(p, dtype=float)
        if p.shape != y.shape:
            raise DataError(f"model {name!r}: {p.shape[0] if p.ndim else 0} predictions for {len(y)} targets")
        preds[name] = p
    metrics = {name: compute_metrics(p, y) for name, p in preds.items()}
    best = min(metrics, key=lambda k: (metrics[k].mape, list(metrics).index(k)))
    reductions = {k: relative_reduction(metrics[best].mape, m.mape) for k, m in metrics.items() if k != best}
    diagnostics = {}
    for name, p in preds.items():
        resid = p - y
        entry = {}
        lag = min(max_lag, len(resid) - 6)
        if lag >= 1 and np.ptp(resid) > 0:
            entry["acf"] = asdict(acf_pacf(resid, lag))
        if len(resid) >= 20 and np.ptp(resid) > 0:
            entry["lilliefors"] = asdict(lilliefors_test(resid, mc_reps, seed))
        diagnostics[name] = entry
    return ModelReport(y, preds, metrics, diagnostics, best, reductions,
                       list(window_end) if window_end is not None else [])
