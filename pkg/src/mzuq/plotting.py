"""Static SVG comparison plots (overlays and relative-error curves).

Figures have an 800x500 viewport (SVG user units are points, 72 per inch).
The SVG hash salt and the date metadata are fixed so that identical data
produce identical files.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# reference run first: black, then blue, red as in the usual three-curve layout
COLORS = ["black", "tab:blue", "tab:red", "tab:green", "tab:orange", "tab:purple"]
STYLE = {
    "svg.hashsalt": "mzuq",
    "svg.fonttype": "path",
    "figure.figsize": (800 / 72, 500 / 72),
    "figure.dpi": 72,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 9,
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def overlay_plot(path, times, series: dict, title: str = "", ylabel: str = ""):
    """One line per run; ``series`` maps label -> values on ``times``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i, (label, y) in enumerate(series.items()):
            ax.plot(times, y, color=COLORS[i % len(COLORS)], lw=1.2, label=label)
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend(loc="best")
        return _save(fig, path)


def error_plot(path, times, series: dict, title: str = "", log_scale: bool = False):
    """Relative-error curves; on a log axis zeros and NaNs are left out."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        any_positive = False
        for i, (label, err) in enumerate(series.items()):
            err = np.asarray(err, dtype=float)
            color = COLORS[(i + 1) % len(COLORS)]
            if log_scale:
                err = np.where(err > 0, err, np.nan)
                any_positive |= bool(np.any(np.isfinite(err)))
            ax.plot(times, err, color=color, lw=1.2, label=label)
        if log_scale:
            ax.set_yscale("log")
            if not any_positive:
                ax.set_ylim(1e-16, 1.0)
        ax.set_xlabel("t")
        ax.set_ylabel("relative error")
        ax.set_title(title)
        if series:
            ax.legend(loc="best")
        return _save(fig, path)
