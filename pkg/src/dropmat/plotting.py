"""Figures written next to the CSV reports.

Only the Agg backend is used, so rendering works headless. PNG metadata is
stripped to keep repeated runs byte-stable.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from dropmat.mlp import MATERIALS, ConfusionMatrix, TrainReport  # noqa: E402
from dropmat.segmentation import DropSegment, SegmentationConfig  # noqa: E402
from dropmat.signal import MagnitudeSeries  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
}


def savefig(fig, path: str | Path, dpi: int = 150) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=dpi, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_training_curves(report: TrainReport, path: str | Path) -> Path:
    """Validation loss and accuracy against epoch, on twin axes."""
    epochs = np.arange(1, len(report.val_loss) + 1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        ax.plot(epochs, report.val_loss, color="tab:red", label="validation loss")
        if report.train_loss:
            ax.plot(epochs, report.train_loss, color="tab:red", ls="--", lw=0.8, label="training loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("cross-entropy loss")
        ax2 = ax.twinx()
        ax2.spines["right"].set_visible(True)
        ax2.plot(epochs, report.val_accuracy, color="tab:blue", label="validation accuracy")
        ax2.set_ylabel("accuracy")
        ax2.set_ylim(0, 1.02)
        lines = ax.get_lines() + ax2.get_lines()
        ax.legend(lines, [ln.get_label() for ln in lines], loc="center right")
        fig.tight_layout()
        return savefig(fig, path)


def plot_confusion(cm: ConfusionMatrix, path: str | Path, labels=MATERIALS) -> Path:
    counts = cm.counts
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.6, 4.0))
        im = ax.imshow(counts, cmap="Blues")
        ax.set_xticks(range(len(labels)), labels, rotation=30, ha="right")
        ax.set_yticks(range(len(labels)), labels)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        threshold = counts.max() / 2 if counts.size else 0
        for i in range(counts.shape[0]):
            for j in range(counts.shape[1]):
                ax.text(j, i, int(counts[i, j]), ha="center", va="center",
                        color="white" if counts[i, j] > threshold else "black")
        ax.set_title(f"overall accuracy {100 * cm.overall_accuracy:.2f}%")
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
        fig.tight_layout()
        return savefig(fig, path)


def plot_segment(mag: MagnitudeSeries, segment: DropSegment, path: str | Path,
                 cfg: SegmentationConfig | None = None) -> Path:
    """Full magnitude trace with the cut shaded and the boundaries marked."""
    cfg = cfg or SegmentationConfig()
    t = np.arange(len(mag)) / mag.sample_rate_hz
    fs = mag.sample_rate_hz
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.0))
        ax.plot(t, mag.values, lw=0.8, color="k")
        ax.axvspan(segment.t_c / fs, segment.t_w / fs, color="tab:orange", alpha=0.25, label="cut")
        ax.axvline(segment.weightless_start / fs, color="tab:blue", ls="--", lw=0.8, label="free fall")
        ax.axhline(cfg.touchdown_threshold, color="tab:red", ls=":", lw=0.8, label="touchdown threshold")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("|a| (m/s$^2$)")
        ax.legend(loc="upper right")
        fig.tight_layout()
        return savefig(fig, path)
