"""Report figures, written next to the CSV/JSON outputs.

Figures are rendered with the Agg backend and saved without a software
or date stamp so reruns are byte-identical.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "svg.hashsalt": "trendvol",
}

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def figsize(width=6.5, ratio=_GOLDEN):
    return (width, width * ratio)


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_mi_grid(grid, path):
    """Heat map of summed MI over the (dt, k) grid; infeasible cells blank."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(5.5, 0.8))
        values = np.where(grid.feasible, grid.values, np.nan)
        im = ax.imshow(values.T, origin="lower", aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(grid.dt_values)), [str(v) for v in grid.dt_values])
        ax.set_yticks(range(len(grid.k_values)),
                      ["inf" if k == math.inf else str(int(k)) for k in grid.k_values])
        ax.set_xlabel("observation interval dt (days)")
        ax.set_ylabel("normalization window k")
        ax.set_title(f"summed mutual information, target: {grid.target_kind}")
        fig.colorbar(im, ax=ax, label="MI (nats)")
        fig.tight_layout()
        return _save(fig, path)


def plot_ranking(ranking, path, top_n=10):
    entries = ranking.entries[:top_n]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(5.0, 0.6))
        names = [n for n, _ in entries][::-1]
        vals = [v for _, v in entries][::-1]
        ax.barh(names, vals, color="tab:orange")
        ax.set_xlabel("MI with next-period target (nats)")
        fig.tight_layout()
        return _save(fig, path)


def plot_history(histories, path):
    """Training/validation MAPE per epoch for each trained LSTM."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        for name, hist in histories.items():
            epochs = [h.epoch for h in hist]
            line, = ax.plot(epochs, [h.train_mape for h in hist], lw=1, label=f"{name} train")
            ax.plot(epochs, [h.val_mape for h in hist], lw=1, ls="--", color=line.get_color(),
                    label=f"{name} validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel("MAPE (%)")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_forecast(report, path, highlight=None):
    """Observed vs predicted volatility on the test windows, with a metrics inset."""
    highlight = highlight or report.best_model
    with plt.rc_context(STYLE):
        fig, (ax, bx) = plt.subplots(
            1, 2, figsize=figsize(9.0, 0.4), gridspec_kw={"width_ratios": [3, 1]})
        x = np.arange(len(report.targets))
        ax.plot(x, report.targets, color="tab:green", lw=1, label="observed")
        ax.plot(x, report.predictions[highlight], color="tab:red", lw=1, label=f"{highlight} forecast")
        ax.set_xlabel("test window")
        ax.set_ylabel("volatility")
        ax.legend(frameon=False)
        names = list(report.metrics)
        pos = np.arange(len(names))
        mape = [report.metrics[n].mape for n in names]
        rmse = [report.metrics[n].rmse for n in names]
        bx.bar(pos - 0.2, mape, width=0.4, color="tab:purple", label="MAPE (%)")
        bx2 = bx.twinx()
        bx2.bar(pos + 0.2, rmse, width=0.4, color="tab:cyan", label="RMSE")
        bx.set_xticks(pos, names, rotation=45, ha="right")
        bx.set_ylabel("MAPE (%)")
        bx2.set_ylabel("RMSE")
        fig.tight_layout()
        return _save(fig, path)


def plot_residual_acf(acf, path, title=""):
    """ACF and PACF stems with the +/-2/sqrt(n) band."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=figsize(8.0, 0.35), sharey=True)
        for ax, key, label in ((axes[0], "acf", "ACF"), (axes[1], "pacf", "PACF")):
            ax.vlines(acf["lags"], 0, acf[key], color="k", lw=1)
            ax.axhspan(-acf["band"], acf["band"], color="tab:blue", alpha=0.15)
            ax.axhline(0, color="k", lw=0.5)
            ax.set_xlabel("lag")
            ax.set_title(f"{label} {title}".strip())
        fig.tight_layout()
        return _save(fig, path)
