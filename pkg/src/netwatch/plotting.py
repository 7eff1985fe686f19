"""Static figures written next to the CSV/JSON outputs of the CLI."""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .charts import SignalLog  # noqa: E402
from .tergm import GofReport  # noqa: E402

DPI = 120


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def _time_labels(ax, ts: Sequence[int], labels: Mapping[int, str] | None) -> None:
    if not labels:
        return
    step = max(1, len(ts) // 8)
    ticks = list(ts)[::step]
    ax.set_xticks(ticks)
    ax.set_xticklabels([labels.get(t, str(t)) for t in ticks], rotation=30, ha="right", fontsize=7)


def chart_trace(log: SignalLog, path, title: str = "", phase2_start: int | None = None) -> None:
    """Statistic over time with the UCL as a horizontal line and signals as points."""
    ts = np.array([r.t for r in log.records])
    stat = np.array([r.statistic for r in log.records])
    fig, ax = plt.subplots(figsize=(9, 3.2))
    ax.plot(ts, stat, lw=0.9, color="0.2")
    if len(log):
        ax.axhline(log.records[0].ucl, color="tab:red", lw=1.0, label="UCL")
    sig = np.array([r.signal for r in log.records], dtype=bool)
    if sig.any():
        ax.scatter(ts[sig], stat[sig], s=10, color="tab:red", zorder=3, label="signal")
    if phase2_start is not None:
        ax.axvline(phase2_start, color="tab:blue", ls="--", lw=0.8, label="monitoring start")
    ax.set_xlabel("t")
    ax.set_ylabel("statistic")
    ax.set_title(title or log.chart)
    ax.legend(loc="upper left", fontsize=7, frameon=False)
    _time_labels(ax, ts, log.labels)
    _save(fig, path)


def acf_panels(acfs: Mapping[str, np.ndarray], path, n_obs: int | None = None, title: str = "") -> None:
    names = list(acfs)
    cols = min(4, len(names))
    rows = math.ceil(len(names) / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(3 * cols, 2.4 * rows), squeeze=False)
    for ax, name in zip(axes.flat, names):
        rho = np.asarray(acfs[name])
        lags = np.arange(rho.shape[0])
        ax.vlines(lags, 0, rho, color="0.2")
        ax.axhline(0, color="0.5", lw=0.6)
        if n_obs:
            band = 1.96 / math.sqrt(n_obs)
            ax.axhline(band, color="tab:blue", ls="--", lw=0.7)
            ax.axhline(-band, color="tab:blue", ls="--", lw=0.7)
        ax.set_title(name, fontsize=9)
        ax.set_ylim(-1, 1.05)
        ax.set_xlabel("lag")
    for ax in list(axes.flat)[len(names):]:
        ax.set_visible(False)
    if title:
        fig.suptitle(title, fontsize=10)
    _save(fig, path)


def ced_curves(curves: Mapping[str, Mapping[float, float]], path, xlabel: str, arl0: float | None = None) -> None:
    """CED against the chart parameter, one line per anomaly case; minima are marked."""
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for name, curve in curves.items():
        xs = sorted(curve)
        ys = np.array([curve[x] for x in xs], dtype=float)
        line, = ax.plot(xs, ys, marker=".", lw=1, label=name)
        if np.isfinite(ys).any():
            k = int(np.nanargmin(ys))
            ax.scatter([xs[k]], [ys[k]], s=40, color=line.get_color(), zorder=3)
    if arl0:
        ax.axhline(arl0, color="0.5", ls=":", lw=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("CED")
    ax.set_yscale("log")
    ax.legend(fontsize=7, ncol=2, frameon=False)
    _save(fig, path)


def gof_boxes(report: GofReport, path) -> None:
    """Simulated quantile boxes per bin with the observed medians overlaid."""
    fams = list(report.families)
    fig, axes = plt.subplots(len(fams), 1, figsize=(9, 2.2 * len(fams)))
    for ax, fam in zip(np.atleast_1d(axes), fams):
        bins = report.families[fam]
        stats = [
            {"label": b.label, "whislo": b.min, "q1": b.q1, "med": b.median, "q3": b.q3, "whishi": b.max, "fliers": []}
            for b in bins
        ]
        ax.bxp(stats, showfliers=False, widths=0.6)
        ax.plot(np.arange(1, len(bins) + 1), [b.observed for b in bins], color="tab:red", lw=1, marker=".")
        ax.set_title(fam, fontsize=9)
        ax.tick_params(axis="x", labelsize=6, rotation=90 if len(bins) > 20 else 0)
        if len(bins) > 30:
            for k, lab in enumerate(ax.get_xticklabels()):
                lab.set_visible(k % 5 == 0)
    _save(fig, path)


def series_lines(ts: Sequence[int], values: np.ndarray, names: Sequence[str], path, title: str = "", hline: float | None = None) -> None:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[0] != len(ts):
        values = values.T
    fig, axes = plt.subplots(len(names), 1, figsize=(8, 1.8 * len(names)), sharex=True, squeeze=False)
    for k, (ax, name) in enumerate(zip(axes[:, 0], names)):
        ax.plot(ts, values[:, k], lw=0.8, color="0.2")
        if hline is not None and len(names) == 1:
            ax.axhline(hline, color="tab:red", ls="--", lw=0.8)
        ax.set_ylabel(name, fontsize=8)
    axes[-1, 0].set_xlabel("t")
    if title:
        axes[0, 0].set_title(title, fontsize=10)
    _save(fig, path)
