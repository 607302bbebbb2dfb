"""Render experiment curves to PNG files (headless backend)."""
from __future__ import annotations

import os
from collections import OrderedDict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 120,
    "axes.labelsize": 11,
    "axes.titlesize": 12,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 9,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
}


def plot_curves(curves, out_dir, title: str = "") -> list:
    """One figure per curve group (ungrouped curves get their own figure)."""
    os.makedirs(out_dir, exist_ok=True)
    groups = OrderedDict()
    for c in curves:
        groups.setdefault(c.group or c.name, []).append(c)
    paths = []
    with plt.rc_context(STYLE):
        for name, members in groups.items():
            fig, ax = plt.subplots()
            for c in members:
                x = np.asarray(c.x, dtype=float)
                y = np.asarray(c.y, dtype=float)
                style = "--" if c.name.endswith("bound") else "-o"
                ax.plot(x, y, style, label=c.name)
                if c.logy:
                    ax.set_yscale("log")
            ax.set_xlabel(members[0].xlabel)
            ax.set_ylabel(members[0].ylabel)
            ax.set_title(f"{title}: {name}" if title else name)
            if len(members) > 1:
                ax.legend()
            fig.tight_layout()
            path = os.path.join(out_dir, f"{name}.png")
            fig.savefig(path)
            plt.close(fig)
            paths.append(path)
    return paths
