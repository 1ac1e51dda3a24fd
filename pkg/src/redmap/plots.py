"""Headless figure rendering for sweep tables."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import BoundaryNorm

from .sweep import PSTAR_BIN, WBIF_BIN, SweepTable


def render_table(table: SweepTable, out_path, title: str = "") -> str:
    """Render a sweep table to an image file and return the path.

    Shape-plane tables (columns starting alpha, beta) become binned
    heatmaps; diagram tables become dot rasters of sample versus axis.
    """
    names = table.axis_names
    if len(names) >= 3 and names[0] == "alpha" and names[1] == "beta":
        _render_map(table, out_path, title)
    else:
        _render_diagram(table, out_path, title)
    return str(out_path)


def _render_diagram(table: SweepTable, out_path, title: str) -> None:
    xs = []
    ys = []
    for row in table.rows:
        if row[1] is not None:
            xs.append(row[0])
            ys.append(row[1])
    fig, ax = plt.subplots(figsize=(8.0, 5.0))
    ax.plot(xs, ys, ".", color="black", markersize=0.8, rasterized=True)
    ax.set_xlabel(table.axis_names[0])
    ax.set_ylabel("q")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=160)
    plt.close(fig)


def _render_map(table: SweepTable, out_path, title: str) -> None:
    field = table.axis_names[2]
    alphas = sorted({row[0] for row in table.rows})
    betas = sorted({row[1] for row in table.rows})
    ai = {v: i for i, v in enumerate(alphas)}
    bi = {v: i for i, v in enumerate(betas)}
    grid = np.full((len(betas), len(alphas)), np.nan)
    for row in table.rows:
        if row[2] is not None:
            grid[bi[row[1]], ai[row[0]]] = row[2]
    bin_size = PSTAR_BIN if field == "pstar" else WBIF_BIN
    top = np.nanmax(grid) if np.any(np.isfinite(grid)) else bin_size
    edges = np.arange(0.0, top + 2.0 * bin_size, bin_size)
    if len(edges) < 3:
        edges = np.array([0.0, bin_size, 2.0 * bin_size])
    cmap = plt.get_cmap("viridis", len(edges) - 1)
    norm = BoundaryNorm(edges, cmap.N)
    fig, ax = plt.subplots(figsize=(7.0, 5.6))
    mesh = ax.pcolormesh(alphas, betas, grid, cmap=cmap, norm=norm,
                         shading="nearest")
    fig.colorbar(mesh, ax=ax, label=field)
    ax.set_xlabel("alpha")
    ax.set_ylabel("beta")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=160)
    plt.close(fig)
