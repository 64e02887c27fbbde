"""Report figures written as PNG next to the CSV output.

Figures are built on the Agg canvas directly (no pyplot state), and the
PNG metadata is pinned so identical inputs give identical files.
"""

from __future__ import annotations

import io

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .iofmt import atomic_write

PNG_META = {"Software": None}


def _save(fig, path):
    FigureCanvasAgg(fig)
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata=PNG_META)
    atomic_write(path, buf.getvalue())


def plot_rank_curve(path, trace_counts, mean, lo=None, hi=None, label="mean rank", title=None):
    """Key rank against the number of attack traces (log-scaled rank)."""
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    if lo is not None and hi is not None:
        ax.fill_between(trace_counts, lo, hi, alpha=0.25, linewidth=0, label="min-max")
    ax.plot(trace_counts, mean, lw=1.5, label=label)
    ax.set_yscale("log")
    ax.set_ylim(0.8, 300)
    ax.set_xlabel("attack traces")
    ax.set_ylabel("key rank")
    ax.axhline(1, color="0.5", lw=0.8, ls=":")
    ax.legend(loc="upper right", frameon=False)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_evaluation(path, result, title=None):
    plot_rank_curve(path, result.trace_counts, result.mean, result.rank_min,
                    result.rank_max, title=title)


def plot_correlation_map(path, cmap, title=None):
    """Line plot for a 1D map, heat map (first channel) for 2D/3D maps."""
    vals = np.asarray(cmap.values)
    fig = Figure(figsize=(6, 4.5))
    ax = fig.add_subplot()
    if vals.ndim == 1:
        ax.plot(np.arange(vals.size), vals, lw=1.2)
        ax.set_xlabel("sample")
        ax.set_ylabel("correlation")
    else:
        if vals.ndim == 3:
            vals = vals[..., 0]
        lim = max(float(np.max(np.abs(vals))), 1e-12)
        im = ax.imshow(vals, cmap="RdBu_r", vmin=-lim, vmax=lim, interpolation="nearest")
        fig.colorbar(im, ax=ax, label="correlation")
        ax.set_xlabel("column")
        ax.set_ylabel("row")
    ax.set_title(title or cmap.target_description or "correlation map")
    fig.tight_layout()
    _save(fig, path)


def plot_history(path, history):
    epochs = [h["epoch"] for h in history]
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    ax.plot(epochs, [h["train_loss"] for h in history], label="train")
    ax.plot(epochs, [h["val_loss"] for h in history], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)
