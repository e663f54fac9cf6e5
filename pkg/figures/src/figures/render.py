"""Rendering of solver CSVs: membrane profiles with shaded coincidence
regions, diagnostic time series, and log-log scaling tables."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .readers import (SchemaError, Table, read_table, snapshot_layout,
                      timeseries_layout)

__all__ = ["render_snapshot", "render_timeseries", "render_scaling"]

MASK_COLORS = ("tab:orange", "tab:green", "tab:purple", "tab:red",
               "tab:brown", "tab:pink")


def _shade_true_runs(ax, x, flags, color, label):
    """Shade maximal runs of coincident nodes, half a cell widened."""
    if len(x) > 1:
        half = 0.5 * (x[1] - x[0])
    else:
        half = 0.5
    started = False
    j = 0
    labeled = False
    while j < len(flags):
        if flags[j]:
            start = x[j] - half
            while j + 1 < len(flags) and flags[j + 1]:
                j += 1
            ax.axvspan(start, x[j] + half, color=color, alpha=0.18,
                       label=None if labeled else label)
            labeled = True
        j += 1


def render_snapshot(csv_path, out_image) -> None:
    """Profiles plus shaded coincidence bands (1D) or heatmaps (2D)."""
    table = read_table(csv_path)
    coords, comps, masks = snapshot_layout(table)
    if "y" not in coords:
        fig, ax = plt.subplots(figsize=(7, 4))
        x = np.array(table.column("x"))
        for name in comps:
            ax.plot(x, table.column(name), label=name)
        for name, color in zip(masks, MASK_COLORS):
            flags = np.array(table.column(name)) > 0.5
            _shade_true_runs(ax, x, flags, color, name)
        ax.set_xlabel("x")
        ax.set_ylabel("membrane height")
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        fig.savefig(out_image, dpi=150)
        plt.close(fig)
        return

    x = np.array(table.column("x"))
    y = np.array(table.column("y"))
    xs = np.unique(x)
    ys = np.unique(y)
    if len(xs) * len(ys) != len(x):
        raise SchemaError(f"{table.path}: nodes do not fill a grid")
    n_panels = len(comps) + (1 if masks else 0)
    fig, axes = plt.subplots(1, n_panels, figsize=(3.2 * n_panels, 3.2),
                             squeeze=False)
    extent = (xs.min(), xs.max(), ys.min(), ys.max())
    for ax, name in zip(axes[0], comps):
        grid = np.array(table.column(name)).reshape(len(ys), len(xs))
        im = ax.imshow(grid, origin="lower", extent=extent, aspect="auto")
        fig.colorbar(im, ax=ax, shrink=0.8)
        ax.set_title(name, fontsize=9)
    if masks:
        ax = axes[0][-1]
        overlay = np.zeros((len(ys), len(xs)))
        for level, name in enumerate(masks, start=1):
            flags = np.array(table.column(name)).reshape(len(ys), len(xs))
            overlay += (flags > 0.5) * level
        im = ax.imshow(overlay, origin="lower", extent=extent, aspect="auto",
                       cmap="viridis")
        fig.colorbar(im, ax=ax, shrink=0.8)
        ax.set_title("coincidence", fontsize=9)
    fig.tight_layout()
    fig.savefig(out_image, dpi=150)
    plt.close(fig)


def render_timeseries(csv_path, out_image, log_scale: bool = False) -> None:
    """Norms, constraint diagnostics, and mask areas against time."""
    table = read_table(csv_path)
    groups = timeseries_layout(table)
    t = table.column("t")
    panels = [(title, names) for title, names in
              (("component norms", groups["norms"]),
               ("constraint diagnostics", groups["diagnostics"]),
               ("coincidence areas", groups["areas"]),
               ("distance to stationary", groups["distances"]))
              if names]
    fig, axes = plt.subplots(len(panels), 1, figsize=(7, 2.4 * len(panels)),
                             sharex=True, squeeze=False)
    for ax, (title, names) in zip(axes[:, 0], panels):
        for name in names:
            ax.plot(t, table.column(name), label=name)
        ax.set_ylabel(title, fontsize=8)
        ax.legend(loc="best", fontsize=7)
        if log_scale and title != "component norms":
            positive = [v for name in names for v in table.column(name)
                        if v > 0]
            if positive:
                ax.set_yscale("log")
    axes[-1, 0].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(out_image, dpi=150)
    plt.close(fig)


def render_scaling(csv_path, out_image) -> None:
    """Log-log plot of a sweep table with slope-1 and slope-2 guides."""
    table = read_table(csv_path)
    scale_name = table.columns[0]
    scale = np.array(table.column(scale_name), dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    positive_scale = scale > 0
    anchor_y = None
    for name in table.columns[1:]:
        values = np.array(table.column(name), dtype=float)
        keep = positive_scale & (values > 0) & np.isfinite(values)
        if not np.any(keep):
            continue
        ax.loglog(scale[keep], values[keep], "o-", label=name)
        if anchor_y is None:
            anchor_y = values[keep][0]
    if anchor_y is not None and np.any(positive_scale):
        s = np.sort(scale[positive_scale])
        for slope, style in ((1, "--"), (2, ":")):
            guide = anchor_y * (s / s[0]) ** slope
            ax.loglog(s, guide, style, color="gray", linewidth=1,
                      label=f"slope {slope}")
    ax.set_xlabel(scale_name)
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_image, dpi=150)
    plt.close(fig)
