"""Report figures. Everything renders off-screen to PNG files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 8,
    "axes.labelsize": 8,
    "axes.titlesize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "lines.linewidth": 1.2,
    "savefig.dpi": 150,
}


def cm_to_inches(cm: float) -> float:
    return cm / 2.54


def setup_figure(width_cm: float = 12, height_cm: float = 8, ncols: int = 1):
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, ncols, figsize=(cm_to_inches(width_cm), cm_to_inches(height_cm)),
                                 constrained_layout=True)
    return fig, axes


def save_figure(fig, path: str | Path) -> Path:
    path = Path(path)
    with plt.rc_context(STYLE):
        fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def figure_path(csv_path: str | Path) -> Path:
    """The PNG written next to a CSV report."""
    return Path(csv_path).with_suffix(".png")


def plot_eval(costs: Sequence[float], label: str, path: str | Path) -> Path:
    """Per-instance costs (left) and their histogram (right)."""
    costs = np.asarray(costs, dtype=float)
    fig, (ax0, ax1) = setup_figure(16, 7, ncols=2)
    ax0.plot(np.arange(len(costs)), costs, marker="o", ms=2, lw=0.6)
    ax0.axhline(costs.mean(), color="C3", lw=0.8, ls="--", label=f"mean {costs.mean():.3f}")
    ax0.set_xlabel("instance")
    ax0.set_ylabel("cost")
    ax0.legend()
    ax1.hist(costs, bins=min(20, max(1, len(costs))), color="C0", alpha=0.8)
    ax1.set_xlabel("cost")
    ax1.set_ylabel("count")
    fig.suptitle(label)
    return save_figure(fig, path)


def plot_k_sweep(ks: Sequence[int], avg: Sequence[float], std: Sequence[float],
                 time_s: Sequence[float], path: str | Path) -> Path:
    """Mean cost (with one standard deviation) and mean time against K."""
    fig, (ax0, ax1) = setup_figure(16, 7, ncols=2)
    ax0.errorbar(ks, avg, yerr=std, marker="o", ms=3, capsize=2)
    ax0.set_xlabel("K")
    ax0.set_ylabel("mean cost")
    ax1.plot(ks, time_s, marker="s", ms=3, color="C1")
    ax1.set_xlabel("K")
    ax1.set_ylabel("mean time [s]")
    return save_figure(fig, path)


def plot_curves(x: Sequence[float], series: dict[str, Sequence[float]], xlabel: str,
                path: str | Path) -> Path:
    """One panel per named series, sharing the x axis (training logs)."""
    fig, axes = setup_figure(6 * len(series) + 2, 7, ncols=len(series))
    axes = np.atleast_1d(axes)
    for ax, (name, ys) in zip(axes, series.items()):
        ys = np.asarray(ys, dtype=float)
        ok = np.isfinite(ys)
        ax.plot(np.asarray(x)[ok], ys[ok], marker="." if ok.sum() < 50 else None)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(name)
    return save_figure(fig, path)


def plot_routes(depot, customers: np.ndarray, tours: Sequence[Sequence[int]], title: str,
                path: str | Path) -> Path:
    fig, ax = setup_figure(10, 10)
    cmap = plt.get_cmap("tab20")
    for i, t in enumerate(tours):
        pts = np.vstack([depot, customers[list(t)], depot])
        ax.plot(pts[:, 0], pts[:, 1], color=cmap(i % 20), lw=0.9)
    ax.scatter(customers[:, 0], customers[:, 1], s=4, color="0.3", zorder=3)
    ax.scatter([depot[0]], [depot[1]], marker="s", s=30, color="k", zorder=4)
    ax.set_aspect("equal")
    ax.set_title(title)
    return save_figure(fig, path)
