"""SVG figures for experiment artifacts.

Output is byte-stable: the SVG hash salt is fixed and no date is embedded.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "lrbs"
_META = {"Date": None, "Creator": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def timeseries_plot(path, x, series: dict, ylabel: str = "", logy: bool = False, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, y in series.items():
        ax.plot(x[: len(y)], y, lw=1, label=str(label))
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if 1 < len(series) <= 10:
        ax.legend(fontsize=7)
    _save(fig, path)


def field_plot(path, field: np.ndarray, title: str = "") -> None:
    """Heatmap for 2d fields, profile for 1d fields."""
    a = np.asarray(field, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(4.5, 4) if a.ndim == 2 else (6, 3))
    if a.ndim == 1:
        ax.plot(np.arange(a.size), a, lw=1)
        ax.set_xlabel("site")
        ax.set_ylabel("mass")
    else:
        img = a if a.ndim == 2 else a.reshape(a.shape[0], -1)
        im = ax.imshow(img, origin="lower", cmap="viridis", interpolation="nearest")
        fig.colorbar(im, ax=ax, shrink=0.8)
    if title:
        ax.set_title(title)
    _save(fig, path)


def spacetime_plot(path, mask: np.ndarray, title: str = "") -> None:
    """Boolean (time, site) array such as a percolation cluster."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.imshow(np.asarray(mask, dtype=float), origin="lower", aspect="auto", cmap="Greys", interpolation="nearest")
    ax.set_xlabel("site")
    ax.set_ylabel("time")
    if title:
        ax.set_title(title)
    _save(fig, path)
