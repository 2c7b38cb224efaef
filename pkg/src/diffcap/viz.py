"""Matplotlib figure rendering: diff-mask and cluster overlays, metric charts."""
from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib import patches

from .clustering import ClusterSet
from .imaging import ImagePair, PixelDiffMask

_BOX_COLORS = plt.get_cmap("tab10").colors


def render_diff_overlay(pair: ImagePair, mask: PixelDiffMask,
                        clusters: ClusterSet, out_path) -> Path:
    """Four-panel figure: the two originals on top, the pixel-difference mask
    bottom-left, and the cluster segmentation bottom-right."""
    fig, axes = plt.subplots(2, 2, figsize=(8, 8))
    axes[0, 0].imshow(pair.img1)
    axes[0, 0].set_title("image 1")
    axes[0, 1].imshow(pair.img2)
    axes[0, 1].set_title("image 2")
    axes[1, 0].imshow(mask.bits, cmap="gray", vmin=0, vmax=1)
    axes[1, 0].set_title("difference mask")
    seg = mask.bits.astype(float) * 0.0
    for c in clusters.clusters:
        seg = seg + (c.id + 1) * c.mask
    axes[1, 1].imshow(seg, cmap="tab10", interpolation="nearest")
    axes[1, 1].set_title(f"clusters (K={clusters.k})")
    for ax in axes.flat:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=100)
    plt.close(fig)
    return out_path


def render_cluster_boxes(pair: ImagePair, clusters: ClusterSet, out_path) -> Path:
    """Both originals side by side with a bounding box drawn per cluster."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 5))
    for ax, img, title in ((axes[0], pair.img1, "image 1"),
                           (axes[1], pair.img2, "image 2")):
        ax.imshow(img)
        ax.set_title(title)
        ax.set_xticks([])
        ax.set_yticks([])
        for c in clusters.clusters:
            r0, c0, r1, c1 = c.bbox
            color = _BOX_COLORS[c.id % len(_BOX_COLORS)]
            ax.add_patch(patches.Rectangle(
                (c0 - 0.5, r0 - 0.5), c1 - c0 + 1, r1 - r0 + 1,
                linewidth=1.5, edgecolor=color, facecolor="none"))
            ax.text(c0, max(r0 - 2, 0), str(c.id), color=color, fontsize=9)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=100)
    plt.close(fig)
    return out_path


def render_metric_bars(report: dict, out_path) -> Path:
    """Bar chart over the scalar fields of an evaluation report."""
    keys = [k for k, v in report.items() if isinstance(v, (int, float))]
    values = [float(report[k]) for k in keys]
    fig, ax = plt.subplots(figsize=(max(4, 0.9 * len(keys)), 4))
    ax.bar(range(len(keys)), values, color="tab:blue")
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels(keys, rotation=45, ha="right")
    for i, v in enumerate(values):
        ax.text(i, v, f"{v:.3f}", ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("score")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=100)
    plt.close(fig)
    return out_path
