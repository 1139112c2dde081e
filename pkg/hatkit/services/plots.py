"""WER-vs-beam curves rendered to SVG.

SVG output is byte-stable: a fixed hash salt and no date metadata.
"""

import logging
from pathlib import Path
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams.update({"svg.hashsalt": "hatkit", "font.family": "DejaVu Sans", "axes.unicode_minus": False})
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

LINESTYLES = {True: "-", False: "--"}


def plot_beam_curves(table: pd.DataFrame, path: Union[str, Path], title: Optional[str] = None) -> Path:
    """One curve per (temperature, λ₁, λ₂); solid = length norm on, dashed = off."""
    path = Path(path)
    rows = table.dropna(subset=["wer"])
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    groups = rows.groupby(["temperature", "lambda1", "lambda2", "length_norm"], sort=True)
    for (temperature, lambda1, lambda2, length_norm), group in groups:
        group = group.sort_values("beam")
        label = f"Z={temperature:g}, λ1={lambda1:g}, λ2={lambda2:g}, norm={'on' if length_norm else 'off'}"
        ax.plot(group["beam"], group["wer"], linestyle=LINESTYLES[bool(length_norm)], marker="o", label=label)
    ax.set_xlabel("Beam size")
    ax.set_ylabel("WER")
    if not rows.empty:
        ax.set_xticks(sorted(rows["beam"].unique()))
        ax.legend(loc="best", fontsize=7)
    ax.grid(True, alpha=0.3)
    if title:
        ax.set_title(title)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"Wrote beam curves to {path}")
    return path
