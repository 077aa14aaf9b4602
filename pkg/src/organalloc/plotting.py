"""Figures written next to the CSV/JSON reports: priority mosaics and
box plots of simulated life outcomes."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .simulator import SummaryTable  # noqa: E402

STYLE = {
    "font.size": 8,
    "axes.titlesize": 8,
    "axes.labelsize": 8,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "savefig.dpi": 150,
}
# png metadata without version strings, so figures are byte-stable
_META = {"Software": None}


def priority_mosaic(rank: np.ndarray, grid_shape, path: str | Path, title: str = "",
                    ncols: int = 10) -> Path:
    """One small S_wl x S_mu panel per waiting period, blue = high priority.

    ``rank`` is (T, n) with 1 = first; any per-cell order works, e.g. the
    position table of a LAS strategy.
    """
    n_wl, n_mu = grid_shape
    T = rank.shape[0]
    nrows = math.ceil(T / ncols)
    grid = rank.reshape(T, n_wl, n_mu).astype(float)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(nrows, ncols, figsize=(ncols * 0.8 + 1.0, nrows * 0.8 + 0.5),
                                 squeeze=False, layout="constrained")
        fig.patch.set_facecolor("0.85")
        vmin, vmax = grid.min(), grid.max()
        for s, ax in enumerate(axes.flat):
            ax.set_xticks([])
            ax.set_yticks([])
            if s >= T:
                ax.set_visible(False)
                continue
            # x: S_wl bin, y: S_mu bin, bin 1 at the top
            im = ax.imshow(grid[s].T, cmap="RdBu_r", vmin=vmin, vmax=vmax,
                           interpolation="nearest")
            ax.set_title(str(s + 1), pad=1.5)
        cbar = fig.colorbar(im, ax=axes.ravel().tolist(), shrink=0.6)
        cbar.set_label("priority rank (low = first)")
        if title:
            fig.suptitle(title)
        fig.savefig(path, metadata=_META)
        plt.close(fig)
    return Path(path)


def outcome_boxplots(table: SummaryTable, path: str | Path) -> Path:
    """Per-run averages of list, post-transplant and total life by strategy."""
    panels = [("wl_life", "life in waiting list"), ("pt_life", "post-transplant life"),
              ("total_life", "total life")]
    return _boxplots(table, panels, path, "days")


def waiting_boxplots(table: SummaryTable, path: str | Path) -> Path:
    panels = [("wait_untransplanted", "never transplanted"),
              ("wait_transplanted", "transplanted")]
    return _boxplots(table, panels, path, "days on list")


def _boxplots(table, panels, path, ylabel):
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 3.0))
        for ax, (metric, label) in zip(np.atleast_1d(axes), panels):
            data = [table.per_run[name][metric] for name in table.strategies]
            ax.boxplot(data, tick_labels=table.strategies, showfliers=False)
            ax.set_title(label)
            ax.set_ylabel(ylabel)
            ax.tick_params(axis="x", rotation=30)
        fig.tight_layout()
        fig.savefig(path, metadata=_META)
        plt.close(fig)
    return Path(path)
