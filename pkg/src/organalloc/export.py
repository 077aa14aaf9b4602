"""CSV and JSON writers for trajectories, solutions, rankings and summaries.

Floats are written with ``repr`` so files round-trip exactly and repeated
runs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .hjb import PolicySolution
from .model import OccupancyTrajectory
from .ranking import RankingTable, heatmap_grid
from .simulator import RunOutcome, SummaryTable


def _fmt(x: Any) -> Any:
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return ""
        return repr(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _jsonable(x: Any) -> Any:
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: str | Path, obj: Any) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _cells(shape):
    T, n = shape
    for s in range(T):
        for i in range(n):
            yield s, i


def write_trajectory_csv(path, traj: OccupancyTrajectory) -> None:
    rows = (
        (s, i + 1, traj.pi_pre[s, i], traj.pi_post[s, i], traj.psi[s, i])
        for s, i in _cells(traj.psi.shape)
    )
    write_csv(path, ("period", "state", "pi_pre", "pi_post", "psi"), rows)


def write_solution_csv(path, sol: PolicySolution) -> None:
    rows = (
        (s, i + 1, sol.phi[s, i], sol.eta[s, i], sol.gamma[s, i], sol.lam[s, i])
        for s, i in _cells(sol.lam.shape)
    )
    write_csv(path, ("period", "state", "phi", "eta", "gamma", "lambda"), rows)


def solution_dict(sol: PolicySolution) -> dict:
    return {
        "c": sol.c,
        "objective": sol.objective,
        "penalized_objective": sol.penalized,
        "transplant_fraction": sol.fraction,
        "topped_up": sol.topped_up,
        "singular_cells": [[s, i + 1] for s, i in sol.singular],
        "lambda": sol.lam,
        "phi": sol.phi,
        "eta": sol.eta,
        "gamma": sol.gamma,
    }


def write_ranking_csv(path, table: RankingTable) -> None:
    rows = (
        (s, i + 1, table.rank[s, i], table.c_entry[s, i], table.phi0[s, i])
        for s, i in _cells(table.rank.shape)
    )
    write_csv(path, ("period", "state", "rank", "c_entry", "phi_at_c0"), rows)


def write_heatmap_json(path, table: RankingTable, grid_shape) -> None:
    write_json(path, heatmap_grid(table, grid_shape))


def write_summary_csv(path, table: SummaryTable) -> None:
    rows = table.rows()
    header = list(rows[0].keys())
    write_csv(path, header, ([r[h] for h in header] for r in rows))


def summary_dict(table: SummaryTable) -> dict:
    return {
        "n_runs": table.n_runs,
        "base_seed": table.base_seed,
        "strategies": table.strategies,
        "summary": table.rows(),
        "per_run": table.per_run,
    }


def write_outcome_csv(path, outcome: RunOutcome) -> None:
    rows = (
        (
            k,
            outcome.arrival_period[k],
            outcome.initial_state[k],
            int(outcome.transplanted[k]),
            outcome.transplant_period[k],
            outcome.transplant_state[k],
            outcome.wl_days[k],
            outcome.pt_days[k],
        )
        for k in range(outcome.n_patients)
    )
    write_csv(
        path,
        (
            "patient",
            "arrival_period",
            "initial_state",
            "transplanted",
            "transplant_period",
            "transplant_state",
            "wl_days",
            "pt_days",
        ),
        rows,
    )
