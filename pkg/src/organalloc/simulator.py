"""Seeded Monte Carlo simulation of the waiting list under priority strategies.

A replication draws one cohort: arrivals, organ counts, each patient's
counterfactual health path and tie-break keys. Every strategy replays the
same cohort, so strategy comparisons are paired. Within a calendar period the
order is arrivals, then allocations, then health transitions.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .model import Model
from .ranking import RankingTable

# sub-stream ids, one generator per (replication, purpose)
_ARRIVALS, _ORGANS, _STATES, _PATHS, _TIEBREAK, _RANDOM, _PTLIFE = range(7)


def substream(seed: int, replication: int, purpose: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(replication, purpose))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# strategies


def _order_from_position(pos: np.ndarray) -> list[tuple[int, int]]:
    T, n = pos.shape
    order = np.argsort(pos.ravel(), kind="stable")
    return [(int(k // n), int(k % n)) for k in order]


def _score_positions(scores: np.ndarray) -> np.ndarray:
    """Position table for descending scores; ties by longer wait, then lower state."""
    T, n = scores.shape
    s, i = np.meshgrid(np.arange(T), np.arange(n), indexing="ij")
    order = np.lexsort((i.ravel(), -s.ravel(), -scores.ravel()))
    pos = np.empty(T * n, dtype=np.int64)
    pos[order] = np.arange(T * n)
    return pos.reshape(T, n)


@dataclass(frozen=True)
class RankingStrategy:
    ranking: RankingTable
    name: str = "proposed"

    def positions(self) -> np.ndarray:
        return self.ranking.position()


@dataclass(frozen=True)
class WorstStrategy:
    """Exact reversal of a ranking's total order."""

    ranking: RankingTable
    name: str = "worst"

    def positions(self) -> np.ndarray:
        pos = self.ranking.position()
        return pos.size - 1 - pos


@dataclass(frozen=True)
class LasStrategy:
    scores: np.ndarray  # (T, n), higher = more priority
    name: str = "las"

    def positions(self) -> np.ndarray:
        return _score_positions(np.asarray(self.scores, dtype=float))


@dataclass(frozen=True)
class RefinedLasStrategy(LasStrategy):
    name: str = "refined_las"


@dataclass(frozen=True)
class RandomStrategy:
    name: str = "random"

    def positions(self) -> None:
        return None


Strategy = RankingStrategy | WorstStrategy | LasStrategy | RefinedLasStrategy | RandomStrategy


def strategy_order(strategy: Strategy) -> list[tuple[int, int]] | None:
    """Explicit priority order of (period, 0-based state) cells, or None for
    the random strategy, which has no fixed order."""
    pos = strategy.positions()
    return None if pos is None else _order_from_position(pos)


# ---------------------------------------------------------------------------
# cohort and single run


@dataclass(frozen=True)
class Cohort:
    """Everything random about one replication, shared by all strategies."""

    arrival_period: np.ndarray  # (N,)
    paths: np.ndarray  # (N, T) 1-based state at each waiting period, 0 once dead
    death_period: np.ndarray  # (N,) periods started alive on the list
    organs: np.ndarray  # (arrival_periods,)
    tiebreak: np.ndarray  # (N,)
    random_keys: np.ndarray  # (N, T)
    pt_uniform: np.ndarray  # (N,)

    @property
    def n_patients(self) -> int:
        return self.arrival_period.size


def draw_cohort(model: Model, seed: int, arrival_periods: int, replication: int = 0) -> Cohort:
    if arrival_periods < 1:
        raise ValueError(f"arrival_periods must be >= 1, got {arrival_periods}")
    T, n = model.horizon_T, model.n_states
    counts = substream(seed, replication, _ARRIVALS).poisson(model.patient_rate, arrival_periods)
    organs = substream(seed, replication, _ORGANS).poisson(model.organ_rate, arrival_periods)
    arrival = np.repeat(np.arange(arrival_periods), counts)
    N = arrival.size
    state = substream(seed, replication, _STATES).choice(n, size=N, p=model.initial_dist) + 1

    u = substream(seed, replication, _PATHS).random((N, T))
    cdf = np.cumsum(model.transition, axis=2)
    cdf[:, :, -1] = 1.0
    paths = np.zeros((N, T), dtype=np.int64)
    cur = state
    for k in range(T):
        paths[:, k] = cur
        alive = cur > 0
        nxt = np.zeros(N, dtype=np.int64)
        rows = cdf[k, cur[alive]]
        nxt[alive] = (u[alive, k][:, None] >= rows).sum(axis=1)
        cur = nxt
    death_period = (paths > 0).sum(axis=1)

    return Cohort(
        arrival_period=arrival,
        paths=paths,
        death_period=death_period,
        organs=organs,
        tiebreak=substream(seed, replication, _TIEBREAK).random(N),
        random_keys=substream(seed, replication, _RANDOM).random((N, T)),
        pt_uniform=substream(seed, replication, _PTLIFE).random(N),
    )


@dataclass
class RunOutcome:
    strategy: str
    arrival_period: np.ndarray
    initial_state: np.ndarray
    transplanted: np.ndarray  # bool
    transplant_period: np.ndarray  # waiting period at transplant, -1 if none
    transplant_state: np.ndarray  # 1-based, 0 if none
    wl_days: np.ndarray
    pt_days: np.ndarray
    paths: np.ndarray = field(repr=False)
    n_organs: int = 0

    @property
    def n_patients(self) -> int:
        return self.arrival_period.size

    @property
    def n_transplants(self) -> int:
        return int(self.transplanted.sum())

    @property
    def total_days(self) -> np.ndarray:
        return self.wl_days + self.pt_days

    def aggregates(self) -> dict[str, float]:
        tx = self.transplanted
        wl = float(self.wl_days.mean()) if self.n_patients else 0.0
        pt = float(self.pt_days.mean()) if self.n_patients else 0.0
        return {
            "wl_life": wl,
            "pt_life": pt,
            "total_life": wl + pt,
            "wait_untransplanted": float(self.wl_days[~tx].mean()) if (~tx).any() else 0.0,
            "wait_transplanted": float(self.wl_days[tx].mean()) if tx.any() else 0.0,
            "n_patients": float(self.n_patients),
            "n_organs": float(self.n_organs),
            "n_transplants": float(self.n_transplants),
        }

    def write_event_log(self, fh: IO[str]) -> None:
        for k in range(self.n_patients):
            d = int((self.paths[k] > 0).sum())
            rec = {
                "strategy": self.strategy,
                "patient": k,
                "arrival_period": int(self.arrival_period[k]),
                "state_path": self.paths[k, :d].tolist(),
                "transplanted": bool(self.transplanted[k]),
                "transplant_period": int(self.transplant_period[k]),
                "transplant_state": int(self.transplant_state[k]),
                "wl_days": float(self.wl_days[k]),
                "pt_days": float(self.pt_days[k]),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def allocate(
    model: Model, cohort: Cohort, strategy: Strategy, pt_mode: str = "expected"
) -> RunOutcome:
    """Replay a cohort under one strategy.

    Keys do not change within a period, so handing organs out one at a time
    and re-ranking after each is the same as taking the top ``organs[t]``
    candidates.
    """
    if pt_mode not in ("expected", "exponential"):
        raise ValueError(f"unknown pt_mode {pt_mode!r}")
    N = cohort.n_patients
    pos = strategy.positions()
    tx_period = np.full(N, -1, dtype=np.int64)
    tx_state = np.zeros(N, dtype=np.int64)
    waiting = np.ones(N, dtype=bool)

    for t, m in enumerate(cohort.organs):
        if m == 0:
            continue
        k = t - cohort.arrival_period
        cand = np.nonzero(waiting & (k >= 0) & (k < cohort.death_period))[0]
        if cand.size == 0:
            continue  # organs arriving to an empty list are discarded
        kc = k[cand]
        st = cohort.paths[cand, kc]
        if pos is None:
            primary = -cohort.random_keys[cand, kc]
        else:
            primary = pos[kc, st - 1]
        chosen = cand[np.lexsort((cohort.tiebreak[cand], primary))[:m]]
        tx_period[chosen] = k[chosen]
        tx_state[chosen] = cohort.paths[chosen, k[chosen]]
        waiting[chosen] = False

    transplanted = tx_period >= 0
    period_days = model.period_days
    wl_days = period_days * np.where(transplanted, tx_period, cohort.death_period).astype(float)
    pt_days = np.zeros(N)
    idx = np.nonzero(transplanted)[0]
    mean = model.pt_life[tx_period[idx], tx_state[idx] - 1]
    if pt_mode == "expected":
        pt_days[idx] = mean
    else:
        pt_days[idx] = -mean * np.log1p(-cohort.pt_uniform[idx])
    return RunOutcome(
        strategy=strategy.name,
        arrival_period=cohort.arrival_period,
        initial_state=cohort.paths[:, 0],
        transplanted=transplanted,
        transplant_period=tx_period,
        transplant_state=tx_state,
        wl_days=wl_days,
        pt_days=pt_days,
        paths=cohort.paths,
        n_organs=int(cohort.organs.sum()),
    )


def simulate_run(
    model: Model,
    strategy: Strategy,
    seed: int,
    arrival_periods: int,
    replication: int = 0,
    pt_mode: str = "expected",
) -> RunOutcome:
    cohort = draw_cohort(model, seed, arrival_periods, replication)
    return allocate(model, cohort, strategy, pt_mode)


# ---------------------------------------------------------------------------
# replication

METRICS = ("wl_life", "pt_life", "total_life", "wait_untransplanted", "wait_transplanted")


@dataclass
class SummaryTable:
    strategies: list[str]
    per_run: dict[str, dict[str, np.ndarray]]  # strategy -> metric -> (n_runs,)
    n_runs: int
    base_seed: int

    def mean(self, strategy: str, metric: str) -> float:
        return float(self.per_run[strategy][metric].mean())

    def sd(self, strategy: str, metric: str) -> float:
        return float(self.per_run[strategy][metric].std(ddof=1))

    def rows(self) -> list[dict]:
        out = []
        for name in self.strategies:
            row = {"strategy": name, "n_runs": self.n_runs}
            for metric in METRICS + ("n_patients", "n_organs", "n_transplants"):
                row[f"mean_{metric}"] = self.mean(name, metric)
                row[f"sd_{metric}"] = self.sd(name, metric)
            out.append(row)
        return out


def _replication(args):
    model, strategies, seed, r, arrival_periods, pt_mode = args
    cohort = draw_cohort(model, seed, arrival_periods, r)
    return [allocate(model, cohort, s, pt_mode).aggregates() for s in strategies]


def replicate(
    model: Model,
    strategies: Sequence[Strategy],
    n_runs: int,
    base_seed: int,
    arrival_periods: int,
    pt_mode: str = "expected",
    workers: int = 1,
) -> SummaryTable:
    if n_runs < 2:
        raise ValueError(f"n_runs must be >= 2, got {n_runs}")
    names = _unique_names([s.name for s in strategies])
    jobs = [(model, list(strategies), base_seed, r, arrival_periods, pt_mode) for r in range(n_runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replication, jobs, chunksize=max(1, n_runs // (4 * workers))))
    else:
        results = [_replication(j) for j in jobs]
    keys = results[0][0].keys()
    per_run = {
        name: {m: np.array([res[j][m] for res in results]) for m in keys}
        for j, name in enumerate(names)
    }
    return SummaryTable(names, per_run, n_runs, base_seed)


def _unique_names(names: Iterable[str]) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for name in names:
        if name in seen:
            seen[name] += 1
            out.append(f"{name}_{seen[name]}")
        else:
            seen[name] = 1
            out.append(name)
    return out
