"""Figure rendering for experiment reports.

Produces the regret figure that accompanies the CSV output: one mean
curve per policy with a shaded one-standard-deviation band, plus the
theoretical bound when available. Rendering is headless (Agg backend)
and SVG metadata is pinned so identical inputs give identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .runner import PolicyAggregate

matplotlib.rcParams["svg.hashsalt"] = "factored-bandits"


def render_regret_figure(
    path: str | Path,
    aggregates: Sequence[PolicyAggregate],
    grid: np.ndarray,
    bound: np.ndarray | None = None,
    normalize: bool = False,
    optimal_mean: float = 1.0,
    title: str = "",
) -> None:
    """Write the mean-and-band cumulative regret figure to ``path``."""
    scale = optimal_mean if (normalize and optimal_mean > 0) else 1.0
    idx = grid - 1
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for agg in aggregates:
        mean = agg.mean[idx] / scale
        std = agg.std[idx] / scale
        (line,) = ax.plot(grid, mean, label=agg.policy_id, linewidth=1.5)
        ax.fill_between(grid, mean - std, mean + std, color=line.get_color(), alpha=0.25, linewidth=0)
    if bound is not None:
        ax.plot(grid, bound / scale, "k--", linewidth=1.0, label="bound")
    ax.set_xlabel("time step")
    ax.set_ylabel("normalized cumulative regret" if normalize else "cumulative regret")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
