"""Report writers: JSON-lines records plus rendered figures.

Every CLI entry point that reports numbers writes them as one JSON object
per line, and drops matplotlib PNGs next to the .jsonl so a run directory
is self-describing.  Figures are rendered headlessly (Agg).
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402


def write_jsonl(path, records) -> int:
    """Write records (iterable of dicts) one per line; returns the count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")
            n += 1
    return n


def read_jsonl(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    return [json.loads(line) for line in lines if line.strip()]


def _as_grid_axes(count: int, cols: int):
    rows = (count + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols,
                             figsize=(1.2 * cols, 1.2 * rows),
                             squeeze=False)
    return fig, [ax for row in axes for ax in row]


def save_image_grid(path, images: np.ndarray, side: int,
                    titles=None, cols: int = 8,
                    value_range=(0.0, 1.0)) -> None:
    """Render flat images (N, side*side) as a grayscale grid PNG."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 1:
        images = images[None, :]
    if images.shape[1] != side * side:
        raise ValueError(f"images have {images.shape[1]} pixels, "
                         f"expected {side * side}")
    count = images.shape[0]
    fig, axes = _as_grid_axes(count, min(cols, count))
    lo, hi = value_range
    for i, ax in enumerate(axes):
        ax.set_axis_off()
        if i >= count:
            continue
        ax.imshow(images[i].reshape(side, side), cmap="gray",
                  vmin=lo, vmax=hi, interpolation="nearest")
        if titles is not None and i < len(titles):
            ax.set_title(str(titles[i]), fontsize=6)
    fig.tight_layout(pad=0.3)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_training_curves(path, phase2_records: list[dict]) -> None:
    """Loss trajectories over joint-phase iterations."""
    fig, (ax_loss, ax_dep) = plt.subplots(1, 2, figsize=(9, 3.5))
    if phase2_records:
        iters = [r["iteration"] for r in phase2_records]
        for key in ("reconstruction", "pixel", "adversarial",
                    "generator_adv"):
            if key in phase2_records[0]:
                ax_loss.plot(iters, [r[key] for r in phase2_records],
                             label=key, linewidth=0.8)
        ax_loss.legend(fontsize=7)
        ax_loss.set_xlabel("iteration")
        ax_loss.set_ylabel("loss")
        if "dependence" in phase2_records[0]:
            ax_dep.plot(iters,
                        [r["dependence"] for r in phase2_records],
                        color="tab:red", linewidth=0.8)
        ax_dep.set_xlabel("iteration")
        ax_dep.set_ylabel("target/latent dependence")
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_phase1_curve(path, phase1_records: list[dict]) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if phase1_records:
        epochs = [r["epoch"] for r in phase1_records]
        ax.plot(epochs, [r["train_loss_end"] for r in phase1_records],
                label="train loss", linewidth=0.9)
        acc = [r.get("accuracy") for r in phase1_records]
        if any(a is not None for a in acc):
            ax2 = ax.twinx()
            ax2.plot(epochs, acc, color="tab:green", linewidth=0.9,
                     label="held-out accuracy")
            ax2.set_ylabel("accuracy")
        ax.set_xlabel("epoch")
        ax.set_ylabel("classification loss")
        ax.legend(fontsize=7, loc="upper right")
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_protocol_curves(path, results: list[dict]) -> None:
    """Error rate against edit intensity, one line per attribute."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for result in results:
        label = str(result["attribute"])
        if "spearman" in result:
            label += f" (rho={result['spearman']:+.2f})"
        ax.plot(result["intensities"], result["error_rates"],
                marker="o", markersize=3, linewidth=0.9, label=label)
    ax.set_xlabel("edit intensity")
    ax.set_ylabel("attribute-negative rate")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(fontsize=7)
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
