"""Static SVG histograms of session start times and durations."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np

from .simulator import read_sessions

TAGS = ("destination", "enroute")


def session_histograms(sources: Mapping[str, Path], out: Path) -> list[Path]:
    """One figure per quantity; a panel per tag, one step curve per labelled source.

    Sources without a ``sessions.csv`` next to their report are skipped.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "evdeploy"  # stable element ids
    sessions = {}
    for name, directory in sources.items():
        path = Path(directory) / "sessions.csv"
        if path.exists():
            sessions[name] = read_sessions(path.read_text())
    if not sessions:
        return []

    written = []
    for quantity, unit, bins in (("start", "h", np.arange(0, 24.5, 0.5)),
                                 ("duration", "h", np.arange(0, 8.25, 0.25))):
        fig, axes = plt.subplots(1, len(TAGS), figsize=(10, 3.6), sharey=False)
        for ax, tag in zip(axes, TAGS):
            for name, rows in sessions.items():
                if quantity == "start":
                    vals = [s.start / 3600 for s in rows if s.tag == tag]
                else:
                    vals = [(s.end - s.start) / 3600 for s in rows if s.tag == tag]
                if vals:
                    ax.hist(vals, bins=bins, histtype="step", label=f"{name} (n={len(vals)})")
            ax.set_title(tag)
            ax.set_xlabel(f"{quantity} [{unit}]")
            ax.set_ylabel("sessions")
            if ax.has_data():
                ax.legend(fontsize=7)
        fig.tight_layout()
        path = Path(out) / f"sessions_{quantity}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
