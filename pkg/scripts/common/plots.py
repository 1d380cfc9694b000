#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Static SVG line charts. Output is byte-stable: no date metadata, fixed hash salt.
"""

import os
from typing import Dict, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from scripts.common.csvio import ARTIFACT, ensure_dir  # noqa: E402

plt.rcParams["svg.hashsalt"] = ARTIFACT
plt.rcParams["svg.fonttype"] = "none"

Series = Tuple[Sequence[float], Sequence[float]]


def line_chart(path: str, series: Dict[str, Series], title: str, xlabel: str, ylabel: str,
               logy: bool = True) -> Optional[str]:
    """Draw one or more (x, y) series; nonpositive y values are dropped on a log axis."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    drawn = 0
    for label, (x, y) in series.items():
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        keep = np.isfinite(x) & np.isfinite(y)
        if logy:
            keep &= y > 0
        if not np.any(keep):
            continue
        ax.plot(x[keep], y[keep], label=label, linewidth=1.2)
        drawn += 1
    if drawn == 0:
        plt.close(fig)
        return None
    if logy:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    if drawn > 1:
        ax.legend()
    ensure_dir(os.path.dirname(path))
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def trajectory_plots(outdir: str, columns: Dict[str, np.ndarray]) -> Dict[str, str]:
    """E(t), ||dE||(t) and ||w - w*||(t) from trajectory columns keyed by CSV name."""
    t = columns["t"]
    written = {}
    e = columns["E"]
    p = line_chart(os.path.join(outdir, "energy.svg"), {"E(t) - min E": (t, e - np.nanmin(e))},
                   "energy", "t", "E - min E")
    if p:
        written["energy"] = p
    p = line_chart(os.path.join(outdir, "gradient.svg"),
                   {"||dE||_2": (t, columns["grad_l2"]), "||dE||_V*": (t, columns["grad_Vstar"])},
                   "first variation", "t", "norm")
    if p:
        written["gradient"] = p
    if "dist_l2" in columns:
        p = line_chart(os.path.join(outdir, "distance.svg"),
                       {"||w - w*||_2": (t, columns["dist_l2"]), "||w - w*||_V": (t, columns.get("dist_V", t * np.nan))},
                       "distance to the stationary state", "t", "norm")
        if p:
            written["distance"] = p
    return written
