"""Priority ranking of (period, state) pairs by order of entry into the allocable set.

As the penalty decreases from a value where nothing is allocable, cells join
the allocable set and never leave it. Each sweep step bisects for the next
entry point to resolution ``alpha``; all cells joining in that step share a
rank.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .hjb import PolicySolution, allocable_masks, backward_pass, penalty_bracket
from .model import Model

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 1e-4
SECTIONS = 15


@dataclass(frozen=True)
class AllocableSet:
    c: float
    mask: np.ndarray  # (T, n) bool

    @property
    def members(self) -> set[tuple[int, int]]:
        """(period, state) pairs, state 1-based."""
        return {(int(s), int(i) + 1) for s, i in zip(*np.nonzero(self.mask))}

    def __len__(self) -> int:
        return int(self.mask.sum())

    def issubset(self, other: "AllocableSet") -> bool:
        return not (self.mask & ~other.mask).any()


def allocable_set(model: Model, c: float) -> AllocableSet:
    sol = backward_pass(model, c)
    return AllocableSet(c, sol.allocable)


@dataclass(frozen=True)
class RankingTable:
    rank: np.ndarray  # (T, n) int, 1 = highest priority
    c_entry: np.ndarray  # (T, n) float, nan where never allocable
    phi0: np.ndarray  # (T, n) allocation index at c = 0
    n_ranked: int  # number of sweep steps that produced entrants
    alpha: float

    @property
    def allocable_at_zero(self) -> np.ndarray:
        return ~np.isnan(self.c_entry)

    def ordered_pairs(self) -> list[tuple[int, int]]:
        """Total order of (period, 0-based state) cells, best first.

        Shared ranks are broken by larger index at zero penalty, then longer
        waiting time, then lower state index.
        """
        T, n = self.rank.shape
        s, i = np.meshgrid(np.arange(T), np.arange(n), indexing="ij")
        keys = (i.ravel(), -s.ravel(), -self.phi0.ravel(), self.rank.ravel())
        order = np.lexsort(keys)
        return [(int(k // n), int(k % n)) for k in order]

    def position(self) -> np.ndarray:
        """(T, n) position of each cell in :meth:`ordered_pairs` (0 = first)."""
        T, n = self.rank.shape
        pos = np.empty(T * n, dtype=np.int64)
        flat = [s * n + i for s, i in self.ordered_pairs()]
        pos[flat] = np.arange(T * n)
        return pos.reshape(T, n)


class _MaskCache:
    """Allocable masks evaluated during a sweep, indexed by penalty."""

    def __init__(self, model: Model):
        self.model = model
        self.cs: list[float] = []
        self.counts: list[int] = []
        self.masks: dict[float, np.ndarray] = {}
        self.solves = 0

    def many(self, cs: Sequence[float]) -> list[np.ndarray]:
        todo = sorted({float(c) for c in cs} - self.masks.keys())
        if todo:
            for c, m in zip(todo, allocable_masks(self.model, todo)):
                self.masks[c] = m
                k = bisect.bisect_left(self.cs, c)
                self.cs.insert(k, c)
                self.counts.insert(k, int(m.sum()))
            self.solves += len(todo)
        return [self.masks[float(c)] for c in cs]

    def __call__(self, c: float) -> np.ndarray:
        return self.many([c])[0]

    def count(self, c: float) -> int:
        return int(self.masks[c].sum())

    def bracket(self, upper: float, count: int) -> tuple[float, float]:
        """Tightest known (lo, hi) below ``upper`` around the next entry point."""
        k = bisect.bisect_left(self.cs, upper)
        lo, hi = 0.0, upper
        for j in range(k - 1, -1, -1):
            if self.counts[j] > count:
                lo = self.cs[j]
                break
            hi = self.cs[j]
        return lo, hi

    def prune(self, upper: float) -> None:
        k = bisect.bisect_right(self.cs, upper)
        for c in self.cs[k:]:
            del self.masks[c]
        del self.cs[k:], self.counts[k:]


def _rank_never_allocable(rank, current, phi0, step):
    rest = ~current
    if rest.any():
        # never-allocable cells follow all finite ranks, by phi at zero penalty
        cells = np.argwhere(rest)
        order = np.lexsort((cells[:, 1], cells[:, 0], -phi0[rest]))
        for k, (s, i) in enumerate(cells[order]):
            rank[s, i] = step + 1 + k


def _sweep(model: Model, alpha: float, n_steps: int, sections: int):
    """Sequential sweep: one bracketing search per rank step."""
    T, n = model.horizon_T, model.n_states
    cache = _MaskCache(model)
    upper = penalty_bracket(model)
    while cache(upper).any():
        upper *= 2.0
    current = np.zeros((T, n), dtype=bool)
    rank = np.zeros((T, n), dtype=np.int64)
    c_entry = np.full((T, n), np.nan)
    at_zero = cache(0.0)

    step = 0
    while step < n_steps and (at_zero & ~current).any():
        count = int(current.sum())
        lo, hi = cache.bracket(upper, count)
        while hi - lo > alpha:
            probes = np.linspace(lo, hi, sections + 2)[1:-1]
            cache.many(probes)
            lo, hi = cache.bracket(hi, count)
        entering = cache(lo) & ~current
        step += 1
        rank[entering] = step
        c_entry[entering] = lo
        current |= entering
        upper = lo
        cache.prune(upper)
    log.debug("sweep: %d steps, %d masks evaluated", step, cache.solves)
    return rank, c_entry, current, step


def entry_thresholds(model: Model, tol: float) -> np.ndarray:
    """Penalty at which each cell joins the allocable set, to within ``tol``.

    Returns the lower end of each final bracket (a penalty at which the cell
    is allocable), or nan for cells not allocable at zero penalty. All cells
    are bisected together, one batched backward pass per halving.
    """
    T, n = model.horizon_T, model.n_states
    upper = penalty_bracket(model)
    while allocable_masks(model, [upper]).any():
        upper *= 2.0
    at_zero = allocable_masks(model, [0.0])[0].ravel()
    cells = np.nonzero(at_zero)[0]
    lo = np.zeros(len(cells))
    hi = np.full(len(cells), upper)
    active = np.arange(len(cells))
    while active.size:
        mid = 0.5 * (lo[active] + hi[active])
        masks = allocable_masks(model, mid).reshape(len(active), -1)
        inside = masks[np.arange(len(active)), cells[active]]
        lo[active[inside]] = mid[inside]
        hi[active[~inside]] = mid[~inside]
        active = active[hi[active] - lo[active] > tol]
    out = np.full(T * n, np.nan)
    out[cells] = lo
    return out.reshape(T, n)


def _group_by_entry(c_entry: np.ndarray, alpha: float, n_steps: int):
    T, n = c_entry.shape
    rank = np.zeros((T, n), dtype=np.int64)
    current = np.zeros((T, n), dtype=bool)
    flat = c_entry.ravel()
    cells = np.nonzero(~np.isnan(flat))[0]
    cells = cells[np.argsort(-flat[cells], kind="stable")]
    step, k = 0, 0
    while k < len(cells) and step < n_steps:
        step += 1
        head = flat[cells[k]]
        while k < len(cells) and flat[cells[k]] > head - alpha:
            rank.flat[cells[k]] = step
            current.flat[cells[k]] = True
            k += 1
    entry = np.where(current, c_entry, np.nan)
    return rank, entry, current, step


def rank_pairs(
    model: Model,
    alpha: float = DEFAULT_ALPHA,
    n_steps: int | None = None,
    method: str = "parallel",
    sections: int = SECTIONS,
) -> RankingTable:
    """Rank cells by the order in which they become allocable.

    ``method="sweep"`` walks the penalty down step by step, narrowing a
    bracket around the next entry point until it is no wider than ``alpha``;
    every cell entering inside that bracket shares the step's rank.
    ``method="parallel"`` computes every cell's entry threshold at once (to
    ``alpha / 16``) and then groups cells whose thresholds fall within
    ``alpha`` of the leading cell of a step. Both rely on the allocable sets
    being nested, and agree except for cells within ``alpha`` of each other.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    T, n = model.horizon_T, model.n_states
    if n_steps is None:
        n_steps = 10 * n * T
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if method == "sweep":
        rank, c_entry, current, step = _sweep(model, alpha, n_steps, sections)
    elif method == "parallel":
        thresholds = entry_thresholds(model, alpha / 16)
        rank, c_entry, current, step = _group_by_entry(thresholds, alpha, n_steps)
    else:
        raise ValueError(f"unknown ranking method {method!r}")
    phi0 = backward_pass(model, 0.0).phi
    _rank_never_allocable(rank, current, phi0, step)
    return RankingTable(rank, c_entry, phi0, step, alpha)


@dataclass
class NestingViolation:
    c_upper: float
    c_lower: float
    pairs: list[tuple[int, int]]


def verify_nesting(
    model: Model,
    c_grid: Sequence[float],
    solver: Callable[[Model, float], PolicySolution] = backward_pass,
) -> list[NestingViolation]:
    """Check that allocable sets grow along a descending penalty grid."""
    grid = list(c_grid)
    if any(a < b for a, b in zip(grid, grid[1:])):
        raise ValueError("c_grid must be sorted in descending order")
    sets = [solver(model, c).allocable for c in grid]
    report = []
    for (c1, m1), (c2, m2) in zip(zip(grid, sets), zip(grid[1:], sets[1:])):
        lost = m1 & ~m2
        if lost.any():
            pairs = [(int(s), int(i) + 1) for s, i in zip(*np.nonzero(lost))]
            report.append(NestingViolation(c1, c2, pairs))
    return report


def heatmap_grid(table: RankingTable, grid_shape: Iterable[int]) -> dict:
    """Ranks laid out as periods x S_wl x S_mu for plotting.

    State k (0-based) sits at S_wl bin ``k // n_mu`` and S_mu bin ``k % n_mu``.
    """
    n_wl, n_mu = grid_shape
    T, n = table.rank.shape
    if n_wl * n_mu != n:
        raise ValueError(f"grid {n_wl}x{n_mu} does not cover {n} states")
    return {
        "layout": ["period", "S_wl", "S_mu"],
        "shape": [T, n_wl, n_mu],
        "n_ranked": table.n_ranked,
        "alpha": table.alpha,
        "rank": table.rank.reshape(T, n_wl, n_mu).tolist(),
    }
