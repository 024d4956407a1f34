"""Figures written next to the data files.

PNG output drops the software and date metadata, so identical data gives
identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def paths_figure(times, xs, ys, path, xlabel="xi^1", ylabel="xi^0", title=None):
    """Trajectories as curves in the (xs, ys) plane, one per path."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for x, y in zip(xs, ys):
        ax.plot(x, y, lw=0.6, alpha=0.7)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return save(fig, path)


def series_figure(x, series: dict, path, xlabel="", ylabel="", logx=False, logy=False,
                  errors: dict | None = None, hline: float | None = None, title=None):
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, y in series.items():
        y = np.asarray(y, dtype=float)
        if errors and name in errors:
            ax.errorbar(x, y, yerr=errors[name], marker="o", ms=3, capsize=2, label=name)
        else:
            ax.plot(x, y, marker="o", ms=3, label=name)
    if hline is not None:
        ax.axhline(hline, color="k", lw=0.8, ls="--")
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    return save(fig, path)


def bar_figure(labels, values, path, ylabel="", hline: float | None = None, title=None):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(range(len(values)), values)
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    if hline is not None:
        ax.axhline(hline, color="k", lw=0.8, ls="--")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return save(fig, path)
