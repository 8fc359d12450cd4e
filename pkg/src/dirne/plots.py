"""Figure rendering for the curve-shaped CLI outputs.

Kept separate so nothing else in the package imports matplotlib; the
CLI loads this module only when a figure was actually requested.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

__all__ = ["render_curve"]


def render_curve(
    path: str | Path,
    x: Sequence[float],
    series: Mapping[str, Sequence[float]],
    *,
    xlabel: str,
    ylabel: str,
    title: str,
    logx: bool = False,
    logy: bool = False,
) -> None:
    """Render one or more aligned series against ``x`` to an image file."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5), constrained_layout=True)
    for label, values in series.items():
        ax.plot(x, values, marker="o", markersize=3, linewidth=1.2, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    if len(series) > 1:
        ax.legend()
    fig.savefig(path, dpi=150)
    plt.close(fig)
