"""Daily market data: OHLC and trend ingestion, Garman-Klass volatility,
feature-panel assembly, chronological splitting and stationarity testing.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

OHLC_HEADER = ("date", "open", "high", "low", "close", "adj_close")

# Trend abbreviations in the order of the original study's table.
TREND_ABBREVIATIONS = (
    "advert", "airtvl", "autoby", "autofi", "bizind", "bnkrpt", "comput",
    "crcard", "durble", "educat", "invest", "finpln", "furntr", "insur",
    "jobs", "luxury", "mobile", "mrtge", "rlest", "rental", "shop",
    "smallbiz", "travel",
)

RETURN = "r"
VOLATILITY = "sigma"

# Garman-Klass coefficients
_GK_RANGE = 0.511
_GK_CROSS = 0.019
_GK_CLOSE = 0.383


@dataclass(frozen=True)
class OhlcBar:
    date: date
    open: float
    high: float
    low: float
    close: float
    adj_close: float

    def __post_init__(self):
        prices = (self.open, self.high, self.low, self.close, self.adj_close)
        if not all(math.isfinite(p) and p > 0 for p in prices):
            raise DataError(f"{self.date}: prices must be finite and positive")
        if self.low > self.high:
            raise DataError(f"{self.date}: low {self.low} > high {self.high}")
        if self.low > min(self.open, self.close):
            raise DataError(f"{self.date}: low {self.low} above open/close")
        if self.high < max(self.open, self.close):
            raise DataError(f"{self.date}: high {self.high} below open/close")


@dataclass(frozen=True)
class OhlcSeries:
    """Chronologically ordered daily bars."""

    bars: tuple[OhlcBar, ...]

    def __post_init__(self):
        for a, b in zip(self.bars, self.bars[1:]):
            if b.date <= a.date:
                raise DataError(f"dates not strictly increasing at {b.date}")

    def __len__(self) -> int:
        return len(self.bars)

    @property
    def dates(self) -> list[date]:
        return [b.date for b in self.bars]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(b, name) for b in self.bars], dtype=float)


@dataclass(frozen=True)
class TrendSeries:
    name: str
    dates: tuple[date, ...]
    values: np.ndarray

    def __post_init__(self):
        if len(self.dates) != len(self.values):
            raise DataError(f"trend {self.name!r}: dates/values length mismatch")
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"trend {self.name!r}: non-finite values")
        for a, b in zip(self.dates, self.dates[1:]):
            if b <= a:
                raise DataError(f"trend {self.name!r}: dates not increasing at {b}")


@dataclass(frozen=True)
class VolEstimate:
    u: float
    d: float
    c: float
    sigma: float
    clamped: bool = False


@dataclass(frozen=True)
class FeaturePanel:
    """Aligned daily inputs: return, volatility, then trend columns.

    ``columns`` maps feature name to a float array; its insertion order is
    the feature order and always starts with ``r`` and ``sigma``.
    """

    dates: tuple[date, ...]
    columns: dict[str, np.ndarray]
    clamped: np.ndarray = field(default=None)

    def __post_init__(self):
        names = list(self.columns)
        if names[:2] != [RETURN, VOLATILITY]:
            raise DataError("feature order must begin with r, sigma")
        n = len(self.dates)
        for name, col in self.columns.items():
            if len(col) != n:
                raise DataError(f"column {name!r} has length {len(col)}, expected {n}")
            if not np.all(np.isfinite(col)):
                raise DataError(f"column {name!r} has missing or non-finite values")
        if self.clamped is None:
            object.__setattr__(self, "clamped", np.zeros(n, dtype=bool))

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def feature_order(self) -> list[str]:
        return list(self.columns)

    @property
    def r(self) -> np.ndarray:
        return self.columns[RETURN]

    @property
    def sigma(self) -> np.ndarray:
        return self.columns[VOLATILITY]

    @property
    def trend_names(self) -> list[str]:
        return self.feature_order[2:]

    def matrix(self, features: Sequence[str] | None = None) -> np.ndarray:
        names = self.feature_order if features is None else list(features)
        return np.column_stack([self.columns[n] for n in names])

    def rows(self, sl: slice) -> "FeaturePanel":
        return FeaturePanel(
            dates=self.dates[sl],
            columns={k: v[sl].copy() for k, v in self.columns.items()},
            clamped=self.clamped[sl].copy(),
        )


@dataclass(frozen=True)
class AdfResult:
    test_statistic: float
    p_value: float
    lag_order: int
    stationary_at_5pct: bool


def _parse_date(text: str, where: str) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"{where}: bad date {text!r}") from None


def _parse_float(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{where}: non-numeric value {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{where}: non-finite value {text!r}")
    return value


def parse_ohlc(csv_text: str, source: str = "<ohlc>") -> OhlcSeries:
    """Parse an OHLC CSV (``date,open,high,low,close,adj_close``).

    Rows are sorted by date. Errors carry ``source:line`` context.
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{source}: empty file") from None
    if tuple(h.strip() for h in header) != OHLC_HEADER:
        raise DataError(f"{source}:1: expected header {','.join(OHLC_HEADER)}")
    bars = []
    seen: dict[date, int] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        where = f"{source}:{lineno}"
        if len(row) != len(OHLC_HEADER):
            raise DataError(f"{where}: expected {len(OHLC_HEADER)} fields, got {len(row)}")
        day = _parse_date(row[0], where)
        if day in seen:
            raise DataError(f"{where}: duplicate date {day} (first on line {seen[day]})")
        seen[day] = lineno
        values = [_parse_float(c, where) for c in row[1:]]
        try:
            bars.append(OhlcBar(day, *values))
        except DataError as exc:
            raise DataError(f"{where}: {exc}") from None
    bars.sort(key=lambda b: b.date)
    return OhlcSeries(tuple(bars))


def parse_trends(csv_text: str, source: str = "<trends>") -> list[TrendSeries]:
    """Parse a wide trends CSV with header ``date,<name>,<name>,...``."""
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError(f"{source}: empty file") from None
    if len(header) < 2 or header[0] != "date":
        raise DataError(f"{source}:1: header must be date,<trend>,...")
    names = header[1:]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise DataError(f"{source}:1: duplicate column(s) {', '.join(dupes)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        where = f"{source}:{lineno}"
        if len(row) != len(header):
            raise DataError(f"{where}: expected {len(header)} fields, got {len(row)}")
        day = _parse_date(row[0], where)
        rows.append((day, [_parse_float(c, where) for c in row[1:]], lineno))
    if not rows:
        raise DataError(f"{source}: no data rows")
    rows.sort(key=lambda r: r[0])
    for a, b in zip(rows, rows[1:]):
        if a[0] == b[0]:
            raise DataError(f"{source}:{b[2]}: duplicate date {b[0]}")
    dates = tuple(r[0] for r in rows)
    values = np.array([r[1] for r in rows], dtype=float)
    if np.any(values < 0):
        raise DataError(f"{source}: trend values must be nonnegative")
    return [TrendSeries(name, dates, values[:, j].copy()) for j, name in enumerate(names)]


def daily_returns(series: OhlcSeries) -> list[tuple[date, float]]:
    """Log differences of the adjusted close."""
    if len(series) < 2:
        raise DataError("need at least 2 bars for returns")
    adj = series.column("adj_close")
    if np.any(adj <= 0):
        raise DataError("adjusted close must be positive")
    r = np.log(adj[1:] / adj[:-1])
    return list(zip(series.dates[1:], r.tolist()))


def garman_klass_variance(open_, high, low, close):
    """Raw Garman-Klass variance; array-friendly. May be slightly negative."""
    u = np.log(np.divide(high, open_))
    d = np.log(np.divide(low, open_))
    c = np.log(np.divide(close, open_))
    var = _GK_RANGE * (u - d) ** 2 - _GK_CROSS * (c * (u + d) - 2.0 * u * d) - _GK_CLOSE * c ** 2
    return u, d, c, var


def garman_klass(bar: OhlcBar) -> VolEstimate:
    """Garman-Klass daily volatility of one bar.

    The variance is clamped at zero (``clamped=True``) when the estimator
    dips negative on extreme bars.
    """
    prices = (bar.open, bar.high, bar.low, bar.close)
    if min(prices) <= 0:
        raise DataError(f"{bar.date}: nonpositive price")
    u, d, c, var = garman_klass_variance(*prices)
    clamped = bool(var < 0)
    return VolEstimate(float(u), float(d), float(c), math.sqrt(max(float(var), 0.0)), clamped)


def garman_klass_series(series: OhlcSeries) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Garman-Klass sigma per bar and the clamping mask."""
    _, _, _, var = garman_klass_variance(
        series.column("open"), series.column("high"),
        series.column("low"), series.column("close"),
    )
    clamped = var < 0
    return np.sqrt(np.where(clamped, 0.0, var)), clamped


def assemble_panel(ohlc: OhlcSeries, trends: Sequence[TrendSeries]) -> FeaturePanel:
    """Join OHLC-derived return/volatility with trend columns on common dates.

    Trading days are the OHLC dates. Within the span covered by every
    input, each trading day must be present in every trend; gaps are an
    error (no imputation). The first common day is dropped because its
    return needs the previous close.
    """
    if len(ohlc) < 2:
        raise DataError("need at least 2 OHLC bars")
    names = [t.name for t in trends]
    if len(set(names)) != len(names) or {RETURN, VOLATILITY} & set(names):
        raise DataError("trend names must be unique and not clash with r/sigma")
    days = ohlc.dates
    start = max([days[0]] + [t.dates[0] for t in trends])
    end = min([days[-1]] + [t.dates[-1] for t in trends])
    keep = [i for i, d in enumerate(days) if start <= d <= end]
    if len(keep) < 2:
        raise DataError("date intersection of OHLC and trends is empty or a single day")
    common = [days[i] for i in keep]

    trend_cols = {}
    for t in trends:
        lookup = dict(zip(t.dates, t.values))
        missing = [d for d in common if d not in lookup]
        if missing:
            raise DataError(f"trend {t.name!r} has no value on trading day {missing[0]}")
        trend_cols[t.name] = np.array([lookup[d] for d in common[1:]], dtype=float)

    idx = np.array(keep)
    adj = ohlc.column("adj_close")[idx]
    r = np.log(adj[1:] / adj[:-1])
    sigma, clamped = garman_klass_series(OhlcSeries(tuple(ohlc.bars[i] for i in keep[1:])))
    columns = {RETURN: r, VOLATILITY: sigma, **trend_cols}
    return FeaturePanel(dates=tuple(common[1:]), columns=columns, clamped=clamped)


def split_train_test(panel: FeaturePanel, train_fraction: float) -> tuple[FeaturePanel, FeaturePanel]:
    """Chronological split; the training part gets ``floor(n * fraction)`` rows."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(panel)
    if n < 2:
        raise DataError("panel too short to split")
    n_train = int(math.floor(n * train_fraction))
    if n_train < 1 or n_train >= n:
        raise DataError(f"split of {n} rows at {train_fraction} leaves an empty side")
    return panel.rows(slice(0, n_train)), panel.rows(slice(n_train, n))


def schwert_max_lag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def adf_test(x: Iterable[float], max_lag: int | None = None) -> AdfResult:
    """Augmented Dickey-Fuller test with a constant, AIC lag choice.

    p-values come from MacKinnon's approximate response surface.
    """
    from statsmodels.tsa.stattools import adfuller

    x = np.asarray(x, dtype=float)
    if max_lag is None:
        max_lag = schwert_max_lag(len(x))
    if max_lag < 0:
        raise DataError("max_lag must be nonnegative")
    if len(x) < max_lag + 10:
        raise DataError(f"series of length {len(x)} too short for max_lag={max_lag}")
    if not np.all(np.isfinite(x)):
        raise DataError("series contains non-finite values")
    if np.ptp(x) == 0.0:
        raise DataError("zero-variance series")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        stat, pvalue, usedlag, *_ = adfuller(x, maxlag=max_lag, regression="c", autolag="AIC")
    return AdfResult(float(stat), float(pvalue), int(usedlag), bool(pvalue < 0.05))


def format_ohlc_csv(series: OhlcSeries) -> str:
    out = io.StringIO()
    out.write(",".join(OHLC_HEADER) + "\n")
    for b in series.bars:
        out.write(f"{b.date.isoformat()},{b.open!r},{b.high!r},{b.low!r},{b.close!r},{b.adj_close!r}\n")
    return out.getvalue()


def format_trends_csv(trends: Sequence[TrendSeries]) -> str:
    if not trends:
        raise DataError("no trends to write")
    dates = trends[0].dates
    if any(t.dates != dates for t in trends):
        raise DataError("trends must share one date index to be written wide")
    out = io.StringIO()
    out.write(",".join(["date"] + [t.name for t in trends]) + "\n")
    for i, d in enumerate(dates):
        out.write(",".join([d.isoformat()] + [repr(float(t.values[i])) for t in trends]) + "\n")
    return out.getvalue()
