"""Figure rendering for run reports.

Figures are rendered to files next to the CSV outputs; the CSVs remain the
numeric contract and the figures are a convenience view of the same data.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .simulation import MetricsRecord, SimResult


def save_metrics_figure(records: list[MetricsRecord], path) -> None:
    """Three stacked panels: mean basis count, max fill distance, sup error."""
    t = [r.t for r in records]
    fig, axes = plt.subplots(3, 1, figsize=(6.5, 7.5), sharex=True)
    axes[0].plot(t, [r.mean_basis_count for r in records], marker="o", color="k")
    axes[0].set_ylabel("mean basis count")
    axes[1].plot(t, [r.max_fill_distance for r in records], marker="o", color="k")
    axes[1].set_ylabel("max fill distance")
    axes[2].semilogy(t, [max(r.sup_error, 1e-300) for r in records], marker="o", color="k")
    axes[2].set_ylabel("sup error")
    axes[2].set_xlabel("t")
    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_error_surface_figure(result: SimResult, path) -> None:
    """Final |field - fused| heat map with each agent's centers overlaid."""
    pts = result.surface_points
    err = result.surface_error
    if pts.shape[1] != 2:
        return  # surface rendering is a 2-D view
    xs = np.unique(pts[:, 0])
    ys = np.unique(pts[:, 1])
    Z = err.reshape(len(xs), len(ys))
    fig, ax = plt.subplots(figsize=(6.5, 5.2))
    mesh = ax.pcolormesh(xs, ys, Z.T, shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="|error|")
    markers = ["o", "s", "^", "v", "D", "P", "*", "X"]
    for agent in result.agents:
        ax.scatter(
            agent.centers[:, 0],
            agent.centers[:, 1],
            s=6,
            marker=markers[(agent.id - 1) % len(markers)],
            label=f"agent {agent.id}",
            alpha=0.7,
            edgecolors="none",
        )
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_figure(per_factor: dict[float, list[MetricsRecord]], path) -> None:
    """Sup-error traces for each hyperparameter scale factor; the matched
    factor (c = 1), when present, is drawn in black."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for factor in sorted(per_factor):
        records = per_factor[factor]
        t = [r.t for r in records]
        e = [max(r.sup_error, 1e-300) for r in records]
        if factor == 1.0:
            ax.semilogy(t, e, color="k", lw=2.0, label="c = 1")
        else:
            ax.semilogy(t, e, lw=1.2, label=f"c = {factor:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("sup error")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
