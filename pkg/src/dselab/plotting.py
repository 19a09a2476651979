"""Report figures (SVG) for benchmark traces and sensitivity sweeps."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (6.4, 3.6),
    "svg.hashsalt": "dselab",  # stable element ids between runs
}


def new(nrows=1, ncols=1, **kw):
    with plt.rc_context(RC):
        return plt.subplots(nrows=nrows, ncols=ncols, **kw)


def save(fig, path: str | Path) -> Path:
    path = Path(path)
    with plt.rc_context(RC):
        fig.tight_layout()
        fig.savefig(path, format=path.suffix.lstrip(".") or "svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_convergence(traces: Iterable, path: str | Path) -> Path:
    """Largest per-iteration change and cumulative floats sent, one line per run."""
    fig, (ax1, ax2) = new(1, 2, figsize=(9, 3.4))
    for tr in traces:
        label = f"{tr.method} {tr.mode.value}"
        it = np.arange(1, tr.iterations + 1)
        delta = np.where(tr.max_delta > 0, tr.max_delta, np.nan)
        ax1.semilogy(it, delta, lw=0.8, label=label)
        ax2.plot(it, np.cumsum(tr.floats_sent), lw=0.8, label=label)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("max |x(t) - x(t-1)|")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("floats transmitted (cumulative)")
    ax1.set_xscale("log")
    ax2.set_xscale("log")
    ax2.legend(loc="best")
    return save(fig, path)


def plot_sweep(sweep, path: str | Path, title: str = "") -> Path:
    """Grouped bars of area objectives per perturbed measurement, with chi-square limits."""
    m, K = sweep.objectives.shape
    fig, ax = new(figsize=(max(6.4, 0.22 * m), 3.6))
    width = 0.8 / K
    x = np.arange(m)
    colors = plt.get_cmap("tab10").colors
    for k in range(K):
        ax.bar(x + (k - (K - 1) / 2) * width, sweep.objectives[:, k], width, color=colors[k % 10], label=f"area {k + 1}")
        if np.isfinite(sweep.thresholds[k]):
            ax.axhline(sweep.thresholds[k], color=colors[k % 10], ls="--", lw=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(sweep.labels, rotation=90, fontsize=6)
    ax.set_ylabel("area objective")
    ax.set_yscale("symlog", linthresh=1.0)
    if title:
        ax.set_title(title)
    ax.legend(ncol=K, loc="upper right")
    return save(fig, path)
