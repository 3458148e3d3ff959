"""Rendering layouts as class-colored rectangles (matplotlib, file output only).

Colors are deterministic per class index so the same class keeps its visual
identity across figures, runs, and the editor UI.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Rectangle

from .core import DatasetSchema, Layout

_PALETTE = plt.get_cmap("tab20")


def class_color(index: int) -> tuple:
    return _PALETTE(index % 20)


def render_layout(ax, layout: Layout, schema: DatasetSchema, title: str | None = None) -> None:
    """Draw one layout onto an axes, y-down like screen coordinates."""
    ax.set_xlim(0, 1)
    ax.set_ylim(1, 0)
    ax.set_aspect(layout.canvas_h / layout.canvas_w)
    ax.set_xticks([])
    ax.set_yticks([])
    for comp in layout.components:
        x0, y0, x1, y1 = comp.box.corners()
        ax.add_patch(
            Rectangle(
                (x0, y0),
                x1 - x0,
                y1 - y0,
                facecolor=class_color(comp.cls.index),
                edgecolor="black",
                linewidth=0.8,
                alpha=0.75,
            )
        )
    if title:
        ax.set_title(title, fontsize=8)


def save_gallery(
    layouts: list[Layout],
    schema: DatasetSchema,
    path: str | Path,
    n_cols: int = 4,
    max_layouts: int = 16,
) -> Path:
    """Grid of layouts with a shared class legend; format follows the suffix."""
    path = Path(path)
    shown = layouts[:max_layouts]
    n = max(len(shown), 1)
    n_cols = min(n_cols, n)
    n_rows = (n + n_cols - 1) // n_cols
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(2.2 * n_cols, 2.8 * n_rows))
    axes = [axes] if n == 1 and n_rows * n_cols == 1 else list(axes.flat)
    for i, ax in enumerate(axes):
        if i < len(shown):
            render_layout(ax, shown[i], schema, title=f"#{i}")
        else:
            ax.axis("off")
    handles = [
        plt.Line2D([], [], marker="s", linestyle="", color=class_color(i), label=name)
        for i, name in enumerate(schema.classes)
    ]
    fig.legend(handles=handles, loc="lower center", ncol=min(schema.K, 6), fontsize=7)
    fig.tight_layout(rect=(0, 0.06, 1, 1))
    fig.savefig(path)
    plt.close(fig)
    return path


def save_layout(layout: Layout, schema: DatasetSchema, path: str | Path) -> Path:
    """Single layout to SVG/PNG (the suffix decides)."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(3.2, 3.2 * layout.canvas_h / layout.canvas_w))
    render_layout(ax, layout, schema)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def save_metric_bars(
    trial_rows: list[dict],
    path: str | Path,
) -> Path:
    """Per-trial bars plus the mean for each metric column present."""
    path = Path(path)
    metrics = [k for k in ("overlap", "piou", "alignment", "docsim", "fid") if
               any(r.get(k) is not None for r in trial_rows)]
    fig, axes = plt.subplots(1, len(metrics), figsize=(2.4 * len(metrics), 2.6))
    if len(metrics) == 1:
        axes = [axes]
    for ax, metric in zip(axes, metrics):
        values = [r[metric] for r in trial_rows if r.get(metric) is not None]
        ax.bar(range(len(values)), values, color="#4878a8")
        ax.axhline(sum(values) / len(values), color="#b04030", linewidth=1.2)
        ax.set_title(metric, fontsize=9)
        ax.set_xlabel("trial", fontsize=7)
        ax.tick_params(labelsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
