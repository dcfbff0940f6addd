"""SVG figures for ratio and block experiments (cosmetic; CSV is the record)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamp so reruns give identical files
plt.rcParams["svg.hashsalt"] = "selfnorm"
_META = {"Date": None}


def ratio_figure(path, xs, ratios: dict, lo=None, hi=None, title: str = ""):
    """Plot one or more ratio curves against ``x`` with a reference line at 1.

    ``ratios`` maps a legend label to the ratio values; ``lo``/``hi`` give a
    band for the first curve.
    """
    xs = np.asarray(xs, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.axhline(1.0, color="0.6", lw=0.8, ls="--")
    for i, (label, values) in enumerate(ratios.items()):
        line, = ax.plot(xs, values, marker="o", ms=3, lw=1.2, label=label)
        if i == 0 and lo is not None and hi is not None:
            ax.fill_between(xs, lo, hi, color=line.get_color(), alpha=0.2, lw=0)
    ax.set_xlabel("x")
    ax.set_ylabel("empirical tail / approximation")
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
