"""Figure rendering for report tables.

The report path turns the delimited check tables into one PNG per check
group: margin-versus-time curves for time-gridded checks, per-state bars
for the curvature profile, and flat margin plots otherwise.  Rendering is
presentation only; the tables stay the canonical output.
"""

from __future__ import annotations

import math
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _base_name(label):
    for sep in ("[", "."):
        if sep in label:
            label = label.split(sep, 1)[0]
    return label


def render_figures(rows, out_dir):
    """Render one figure per check group; returns the written paths."""
    groups = defaultdict(list)
    for r in rows:
        if r.margin is None or (isinstance(r.margin, float) and math.isinf(r.margin)):
            continue
        groups[_base_name(r.check)].append(r)
    fig_dir = os.path.join(out_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    written = []
    for name in sorted(groups):
        rs = groups[name]
        fig, ax = plt.subplots(figsize=(6.0, 3.6), dpi=150)
        timed = [r for r in rs if r.time is not None]
        if name == "curvature":
            states = [r.state for r in rs if r.state is not None]
            vals = [r.margin for r in rs if r.state is not None]
            ax.plot(states, vals, lw=0.9)
            ax.set_xlabel("state")
            ax.set_ylabel("K(x)")
            ax.set_yscale("symlog", linthresh=1.0)
        elif timed:
            series = defaultdict(list)
            for r in timed:
                series[r.check].append((r.time, r.margin))
            for label in sorted(series):
                pts = sorted(series[label])
                ax.plot([p[0] for p in pts], [p[1] for p in pts],
                        marker="o", ms=3, lw=0.9, label=label)
            ax.set_xlabel("t")
            ax.set_ylabel("worst margin")
            if len(series) > 1:
                ax.legend(fontsize=7)
        else:
            ax.plot(range(len(rs)), [r.margin for r in rs],
                    marker="o", ms=3, lw=0.9)
            ax.set_xlabel("row")
            ax.set_ylabel("margin")
        ax.axhline(0.0, color="0.6", lw=0.6)
        ax.set_title(name, fontsize=9)
        fig.tight_layout()
        path = os.path.join(fig_dir, f"{name}.png")
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written
