"""Observation/normalization schemes.

A scheme ``(dt, k)`` aggregates the daily panel into ``dt``-day periods and
z-scores every feature with a ``k``-period look-back window (``k = inf``
means a fixed linear transform with training-set mean and std). The
result is cut into fixed-length supervised windows whose target is the
next period's raw volatility.

Conventions: the finite-``k`` window at period ``i`` is the ``k`` values
strictly before ``i``; all standard deviations use the ``n - 1``
denominator; a trailing partial period is discarded.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError
from .market_data import RETURN, VOLATILITY, FeaturePanel

INF = math.inf
AggKind = Literal["return-sum", "trend-mean", "vol-rms"]


@dataclass(frozen=True)
class Scheme:
    dt: int
    k: float = INF

    def __post_init__(self):
        if int(self.dt) != self.dt or self.dt < 1:
            raise DataError(f"dt must be an integer >= 1, got {self.dt}")
        if self.k != INF and (int(self.k) != self.k or self.k < 2):
            raise DataError(f"k must be an integer >= 2 or inf, got {self.k}")
        object.__setattr__(self, "dt", int(self.dt))
        if self.k != INF:
            object.__setattr__(self, "k", int(self.k))

    @property
    def k_label(self) -> str:
        return format_k(self.k)

    def to_dict(self) -> dict:
        return {"dt": self.dt, "k": self.k_label}

    @classmethod
    def from_dict(cls, d: dict) -> "Scheme":
        return cls(int(d["dt"]), parse_k(d["k"]))


def format_k(k) -> str:
    return "inf" if k == INF else str(int(k))


def parse_k(text) -> float:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return INF if text == INF else int(text)
    text = str(text).strip().lower()
    if text in ("inf", "infinite", "infinity"):
        return INF
    try:
        return int(text)
    except ValueError:
        raise DataError(f"k must be an integer or 'inf', got {text!r}") from None


def aggregate(x, dt: int, kind: AggKind) -> np.ndarray:
    """Aggregate a daily series into full ``dt``-day periods.

    ``return-sum`` sums, ``trend-mean`` averages and ``vol-rms`` takes the
    square root of the summed squares.
    """
    x = np.asarray(x, dtype=float)
    if dt < 1:
        raise DataError(f"dt must be >= 1, got {dt}")
    if len(x) == 0:
        raise DataError("cannot aggregate an empty series")
    n_periods = len(x) // dt
    if n_periods == 0:
        raise DataError(f"series of length {len(x)} shorter than dt={dt}")
    blocks = x[: n_periods * dt].reshape(n_periods, dt)
    if kind == "return-sum":
        return blocks.sum(axis=1)
    if kind == "trend-mean":
        return blocks.mean(axis=1)
    if kind == "vol-rms":
        return np.sqrt((blocks ** 2).sum(axis=1))
    raise DataError(f"unknown aggregation kind {kind!r}")


def build_target(sigma_agg) -> np.ndarray:
    """Next-period volatility: ``y[i] = sigma[i + 1]``."""
    sigma_agg = np.asarray(sigma_agg, dtype=float)
    if len(sigma_agg) < 2:
        raise DataError("need at least 2 periods to build a target")
    return sigma_agg[1:].copy()


def zscore(x, k, train_stats: tuple[float, float] | None = None) -> np.ndarray:
    """Sliding z-score.

    Finite ``k``: output has ``len(x) - k`` entries; entry ``j`` is the
    z-score of ``x[j + k]`` against ``x[j : j + k]``. Infinite ``k``:
    linear transform with ``train_stats`` (or the series' own stats when
    it is itself the training series).
    """
    x = np.asarray(x, dtype=float)
    if k == INF:
        if train_stats is None:
            if len(x) < 2:
                raise DataError("need at least 2 values for standardization")
            mean, std = float(x.mean()), float(x.std(ddof=1))
        else:
            mean, std = train_stats
        if not std > 0:
            raise DataError("zero standard deviation (degenerate feature)")
        return (x - mean) / std
    k = int(k)
    if k < 2:
        raise DataError("finite window must be >= 2")
    if len(x) <= k:
        raise DataError(f"window k={k} not smaller than series length {len(x)}")
    windows = sliding_window_view(x[:-1], k)
    mean = windows.mean(axis=1)
    std = windows.std(axis=1, ddof=1)
    if np.any(std == 0):
        j = int(np.argmax(std == 0))
        raise DataError(f"zero standard deviation in window ending before index {j + k}")
    return (x[k:] - mean) / std


@dataclass(frozen=True)
class AggregatedPanel:
    """Per-period aggregates of a daily panel; ``values[:, j]`` follows ``feature_order``."""

    dt: int
    feature_order: list[str]
    values: np.ndarray
    period_end_dates: tuple
    day_offset: int = 0

    @property
    def n_periods(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_order.index(name)]

    @property
    def sigma(self) -> np.ndarray:
        return self.column(VOLATILITY)

    @property
    def r(self) -> np.ndarray:
        return self.column(RETURN)

    def target(self) -> np.ndarray:
        return build_target(self.sigma)

    def period_days(self, i: int) -> range:
        """Daily row indices covered by period ``i`` (within the source panel)."""
        start = self.day_offset + i * self.dt
        return range(start, start + self.dt)


def aggregate_panel(panel: FeaturePanel, dt: int) -> AggregatedPanel:
    if len(panel) < dt:
        raise DataError(f"panel of {len(panel)} rows shorter than dt={dt}")
    cols = []
    for name in panel.feature_order:
        kind = {RETURN: "return-sum", VOLATILITY: "vol-rms"}.get(name, "trend-mean")
        cols.append(aggregate(panel.columns[name], dt, kind))
    n_periods = len(cols[0])
    ends = tuple(panel.dates[(i + 1) * dt - 1] for i in range(n_periods))
    return AggregatedPanel(dt, panel.feature_order, np.column_stack(cols), ends)


def normalized_frame(agg: AggregatedPanel, k, stats=None) -> tuple[np.ndarray, int]:
    """Z-scored feature matrix and the index of the period its first row belongs to."""
    cols = []
    for j, name in enumerate(agg.feature_order):
        col = agg.values[:, j]
        st = None if stats is None else (stats[0][j], stats[1][j])
        try:
            cols.append(zscore(col, k, st))
        except DataError as exc:
            raise DataError(f"feature {name!r}: {exc}") from None
    offset = 0 if k == INF else int(k)
    return np.column_stack(cols), offset


@dataclass(frozen=True)
class SchemeDataset:
    """Supervised windows for one panel under one scheme.

    ``X[n]`` holds ``lag_len`` consecutive periods of z-scored features
    (oldest first). ``seed_sigma[n]`` is the raw volatility of the period
    before the window, ``feedback_sigma[n, t]`` the raw volatility of the
    period before step ``t`` (its first column equals ``seed_sigma``), and
    ``target[n]`` the raw volatility of the period after the window.
    """

    scheme: Scheme
    lag_len: int
    feature_names: list[str]
    X: np.ndarray
    seed_sigma: np.ndarray
    feedback_sigma: np.ndarray
    target: np.ndarray
    end_index: np.ndarray
    end_dates: tuple
    first_day: np.ndarray
    last_day: np.ndarray
    stats_mean: np.ndarray
    stats_std: np.ndarray
    period_returns: np.ndarray = field(repr=False, default=None)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[2]

    @property
    def target_index(self) -> np.ndarray:
        return self.end_index + 1

    def subset(self, idx) -> "SchemeDataset":
        idx = np.asarray(idx)
        return SchemeDataset(
            self.scheme, self.lag_len, self.feature_names, self.X[idx], self.seed_sigma[idx],
            self.feedback_sigma[idx], self.target[idx], self.end_index[idx],
            tuple(self.end_dates[i] for i in idx), self.first_day[idx], self.last_day[idx],
            self.stats_mean, self.stats_std, self.period_returns,
        )

    def normalization(self) -> dict:
        return {
            "features": list(self.feature_names),
            "mean": [float(v) for v in self.stats_mean],
            "std": [float(v) for v in self.stats_std],
        }

    def to_csv(self) -> str:
        out = io.StringIO()
        cols = [f"{f}_lag{j}" for j in range(1, self.lag_len + 1) for f in self.feature_names]
        out.write(",".join(["window_end", "period_index", "target_sigma"] + cols) + "\n")
        for n in range(len(self)):
            flat = self.X[n, ::-1, :].reshape(-1)
            vals = [self.end_dates[n].isoformat(), str(int(self.end_index[n])), repr(float(self.target[n]))]
            out.write(",".join(vals + [repr(float(v)) for v in flat]) + "\n")
        return out.getvalue()

    def sidecar_json(self) -> str:
        doc = {
            "scheme": self.scheme.to_dict(),
            "lag_len": self.lag_len,
            "n_windows": len(self),
            "normalization": self.normalization(),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _window_dataset(agg, Z, offset, scheme, lag_len, features, mean, std) -> SchemeDataset:
    cols = [agg.feature_order.index(f) for f in features]
    Zf = Z[:, cols]
    sigma = agg.sigma
    P = agg.n_periods
    first = max(1, offset)
    starts = np.arange(first, P - lag_len)
    if len(starts) == 0:
        raise DataError(
            f"not enough periods ({P}) for one window of {lag_len} under scheme "
            f"(dt={scheme.dt}, k={scheme.k_label})"
        )
    X = np.stack([Zf[s - offset: s - offset + lag_len] for s in starts])
    seed = sigma[starts - 1]
    feedback = np.stack([sigma[s - 1: s - 1 + lag_len] for s in starts])
    ends = starts + lag_len - 1
    target = sigma[ends + 1]
    dt = agg.dt
    return SchemeDataset(
        scheme=scheme,
        lag_len=lag_len,
        feature_names=list(features),
        X=X,
        seed_sigma=seed,
        feedback_sigma=feedback,
        target=target,
        end_index=ends,
        end_dates=tuple(agg.period_end_dates[e] for e in ends),
        first_day=(starts - 1) * dt,
        last_day=(ends + 2) * dt - 1,
        stats_mean=np.asarray(mean)[cols],
        stats_std=np.asarray(std)[cols],
        period_returns=agg.r.copy(),
    )


def training_stats(agg: AggregatedPanel) -> tuple[np.ndarray, np.ndarray]:
    return agg.values.mean(axis=0), agg.values.std(axis=0, ddof=1)


def apply_scheme(
    train: FeaturePanel,
    test: FeaturePanel | None,
    scheme: Scheme,
    lag_len: int = 10,
    features: Sequence[str] | None = None,
) -> tuple[SchemeDataset, SchemeDataset | None]:
    """Aggregate, normalize and window the train and test panels.

    With ``k = inf`` both panels are standardized with the training
    panel's aggregated mean/std. Test windows use test rows only.
    """
    if lag_len < 1:
        raise DataError("lag_len must be >= 1")
    features = list(train.feature_order if features is None else features)
    unknown = [f for f in features if f not in train.feature_order]
    if unknown:
        raise DataError(f"unknown feature(s): {', '.join(unknown)}")
    if test is not None:
        if test.feature_order != train.feature_order:
            raise DataError("train and test panels have different columns")
        if test.dates and train.dates and test.dates[0] <= train.dates[-1]:
            raise DataError("test panel must start after the training panel ends")

    agg_tr = aggregate_panel(train, scheme.dt)
    mean, std = training_stats(agg_tr)
    stats = (mean, std) if scheme.k == INF else None
    Z_tr, off = normalized_frame(agg_tr, scheme.k, stats)
    ds_train = _window_dataset(agg_tr, Z_tr, off, scheme, lag_len, features, mean, std)

    ds_test = None
    if test is not None:
        agg_te = aggregate_panel(test, scheme.dt)
        Z_te, off_te = normalized_frame(agg_te, scheme.k, stats)
        ds_test = _window_dataset(agg_te, Z_te, off_te, scheme, lag_len, features, mean, std)
    return ds_train, ds_test
