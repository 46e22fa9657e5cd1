"""Mutual-information scoring of observation/normalization schemes.

MI is the plug-in estimate on equal-frequency (quantile) bins, in nats.
Binning uses ranks only, so estimates are invariant under strictly
monotone transforms of either variable. The score of a scheme is the sum
of per-feature MI between period-``i`` features and the period-``i+1``
target, i.e. the inputs are treated as conditionally independent.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import DataError, InfeasibleSchemeError
from .market_data import RETURN, VOLATILITY, FeaturePanel
from .scheme import INF, Scheme, aggregate_panel, format_k, normalized_frame

TargetKind = Literal["volatility", "return"]

DEFAULT_DT_VALUES = tuple(range(1, 11))
DEFAULT_K_VALUES = (5, 10, 20, 30, 60, 120, INF)

# Reduced input set of the original study's second LSTM.
PAPER_REDUCED_FEATURES = (VOLATILITY, RETURN, "comput", "crcard", "invest", "bnkrpt")


class SmallSampleWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Binning:
    codes: np.ndarray
    edges: np.ndarray
    n_effective: int
    merged: bool


@dataclass(frozen=True)
class MiEstimate:
    value: float
    n_samples: int
    n_bins: int


def quantile_bins(x, n_bins: int) -> Binning:
    """Equal-frequency bins.

    Sample ``i`` (0-based rank ``q``) goes to bin ``floor(q * n_bins / n)``;
    tied values share the rank of their first occurrence, so duplicates may
    leave fewer effective bins (``merged``).
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n_bins < 2:
        raise DataError("n_bins must be >= 2")
    if n < n_bins:
        raise DataError(f"{n} samples cannot fill {n_bins} bins")
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ranks = np.arange(n)
    # min-rank for ties
    first = np.r_[True, xs[1:] != xs[:-1]]
    tie_rank = np.maximum.accumulate(np.where(first, ranks, 0))
    codes = np.empty(n, dtype=np.int64)
    codes[order] = (tie_rank * n_bins) // n
    edges = np.quantile(x, np.arange(1, n_bins) / n_bins)
    n_eff = len(np.unique(codes))
    return Binning(codes, edges, n_eff, n_eff < n_bins)


def _mi_from_codes(a, b, n_bins, bias_correction) -> float:
    n = len(a)
    table = np.zeros((n_bins, n_bins))
    np.add.at(table, (a, b), 1.0)
    # marginals from integer counts are exact, so the estimate is bit-symmetric
    p = table / n
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    ia, ib = np.nonzero(p)
    terms = [p[i, j] * math.log(p[i, j] / (pa[i] * pb[j])) for i, j in zip(ia, ib)]
    mi = math.fsum(terms)
    if bias_correction == "miller-madow":
        mi -= (len(ia) - np.count_nonzero(pa) - np.count_nonzero(pb) + 1) / (2.0 * n)
    return max(mi, 0.0)


def mutual_information(x, y, n_bins: int = 10, bias_correction: str = "none") -> MiEstimate:
    """Plug-in MI (nats) between two samples after independent quantile binning."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise DataError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < n_bins * n_bins:
        raise DataError(f"{len(x)} samples < n_bins^2 = {n_bins * n_bins}")
    if bias_correction not in ("none", "miller-madow"):
        raise DataError(f"unknown bias correction {bias_correction!r}")
    if len(x) < 5 * n_bins * n_bins:
        warnings.warn(
            f"MI from {len(x)} samples with {n_bins} bins is strongly biased",
            SmallSampleWarning, stacklevel=2,
        )
    bx = quantile_bins(x, n_bins)
    by = quantile_bins(y, n_bins)
    value = _mi_from_codes(bx.codes, by.codes, n_bins, bias_correction)
    return MiEstimate(value, len(x), n_bins)


def scheme_frame(panel: FeaturePanel, scheme: Scheme) -> tuple[np.ndarray, list[str]]:
    """Z-scored aggregated features of a (training) panel under a scheme."""
    agg = aggregate_panel(panel, scheme.dt)
    Z, _ = normalized_frame(agg, scheme.k)
    return Z, list(agg.feature_order)


def panel_mi(Z, feature_names: Sequence[str], target: TargetKind = "volatility",
             n_bins: int = 10, bias_correction: str = "none") -> tuple[list[tuple[str, float]], float]:
    """Per-feature MI of period-``i`` features with the period-``i+1`` target.

    ``Z`` is a z-scored aggregated frame whose columns follow
    ``feature_names``. Returns ``([(name, mi), ...], summed_mi)``.
    """
    Z = np.asarray(Z, dtype=float)
    names = list(feature_names)
    target_col = {"volatility": VOLATILITY, "return": RETURN}.get(target)
    if target_col is None:
        raise DataError(f"unknown target {target!r}")
    if target_col not in names:
        raise DataError(f"panel has no {target_col!r} column")
    y = Z[1:, names.index(target_col)]
    X = Z[:-1]
    if len(y) < n_bins * n_bins:
        raise InfeasibleSchemeError(f"{len(y)} supervised rows < n_bins^2 = {n_bins * n_bins}")
    per = [(name, mutual_information(X[:, j], y, n_bins, bias_correction).value)
           for j, name in enumerate(names)]
    return per, math.fsum(v for _, v in per)


@dataclass(frozen=True)
class MiGrid:
    dt_values: tuple[int, ...]
    k_values: tuple[float, ...]
    values: np.ndarray
    n_samples: np.ndarray
    feasible: np.ndarray
    target_kind: str

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("dt,k,mi_sum,n_samples,feasible\n")
        for a, dt in enumerate(self.dt_values):
            for b, k in enumerate(self.k_values):
                ok = bool(self.feasible[a, b])
                mi = repr(float(self.values[a, b])) if ok else "nan"
                out.write(f"{dt},{format_k(k)},{mi},{int(self.n_samples[a, b])},{str(ok).lower()}\n")
        return out.getvalue()


def scan_grid(train_panel: FeaturePanel, dt_values=DEFAULT_DT_VALUES, k_values=DEFAULT_K_VALUES,
              target: TargetKind = "volatility", n_bins: int = 10,
              bias_correction: str = "none") -> MiGrid:
    """Summed MI over a (dt, k) grid, computed on the training panel only.

    Cells without enough supervised rows, or with a zero-variance window,
    are marked infeasible instead of failing the scan.
    """
    dt_values = tuple(int(v) for v in dt_values)
    k_values = tuple(k_values)
    if not dt_values or not k_values:
        raise DataError("grid axes must be nonempty")
    values = np.full((len(dt_values), len(k_values)), np.nan)
    n_samples = np.zeros(values.shape, dtype=np.int64)
    feasible = np.zeros(values.shape, dtype=bool)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallSampleWarning)
        for a, dt in enumerate(dt_values):
            for b, k in enumerate(k_values):
                try:
                    Z, names = scheme_frame(train_panel, Scheme(dt, k))
                except DataError:
                    continue
                n_samples[a, b] = max(len(Z) - 1, 0)
                try:
                    _, total = panel_mi(Z, names, target, n_bins, bias_correction)
                except InfeasibleSchemeError:
                    continue
                values[a, b] = total
                feasible[a, b] = True
    if not feasible.any():
        raise InfeasibleSchemeError("every grid cell is infeasible")
    return MiGrid(dt_values, k_values, values, n_samples, feasible, target)


def select_scheme(grid: MiGrid, min_samples: int = 0) -> Scheme:
    """Argmax of summed MI over feasible cells with at least ``min_samples`` rows.

    Ties go to the smaller dt, then the larger k.
    """
    best = None
    for a, dt in enumerate(grid.dt_values):
        for b, k in enumerate(grid.k_values):
            if not grid.feasible[a, b] or grid.n_samples[a, b] < min_samples:
                continue
            key = (-float(grid.values[a, b]), dt, -k)
            if best is None or key < best[0]:
                best = (key, Scheme(dt, k))
    if best is None:
        raise InfeasibleSchemeError(f"no feasible scheme with at least {min_samples} samples")
    return best[1]


@dataclass(frozen=True)
class FeatureRanking:
    entries: list[tuple[str, float]]

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.entries]

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("rank,feature,mi\n")
        for i, (name, mi) in enumerate(self.entries, start=1):
            out.write(f"{i},{name},{mi!r}\n")
        return out.getvalue()


def rank_features(panel: FeaturePanel, scheme: Scheme, target: TargetKind = "volatility",
                  n_bins: int = 10, top_n: int | None = None) -> FeatureRanking:
    try:
        Z, names = scheme_frame(panel, scheme)
    except DataError as exc:
        raise InfeasibleSchemeError(str(exc)) from None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallSampleWarning)
        per, _ = panel_mi(Z, names, target, n_bins)
    order = sorted(range(len(per)), key=lambda j: (-per[j][1], j))
    entries = [per[j] for j in order]
    if top_n is not None:
        entries = entries[:top_n]
    return FeatureRanking(entries)
