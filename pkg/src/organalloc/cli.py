"""Command-line entry point: ``organalloc <command> [options]``.

Exit status is 0 on success, 1 when an input fails validation and 2 when a
solver or simulation step fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import export
from .hjb import SolverError, backward_pass, fractional_topup, solve_budget
from .las import (
    CovariateError,
    CovariateRecord,
    GridThresholds,
    discretize_state,
    linear_predictor_pt,
    linear_predictor_wl,
    model_score_table,
)
from .model import ModelError, load_model, propagate_occupancy, save_model, check_feasibility
from .ranking import DEFAULT_ALPHA, rank_pairs, verify_nesting
from .simulator import (
    LasStrategy,
    RandomStrategy,
    RankingStrategy,
    RefinedLasStrategy,
    WorstStrategy,
    replicate,
    simulate_run,
)
from .synthetic import GridParams, grid_model

log = logging.getLogger("organalloc")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
STRATEGIES = ("proposed", "las", "refined_las", "random", "worst")
DEFAULT_ARRIVAL_PERIODS = 9


class InputError(Exception):
    pass


def _load(path: str):
    try:
        return load_model(path)
    except FileNotFoundError as exc:
        raise InputError(f"model file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_validate(args) -> int:
    model = _load(args.model)
    print(
        f"ok: {model.n_states} states, {model.horizon_T} periods of "
        f"{model.period_days:g} days, budget rho/tau = {model.budget:.6g}"
    )
    return EXIT_OK


def cmd_solve(args) -> int:
    model = _load(args.model)
    out = _outdir(args.out)
    if args.c is not None:
        if args.c < 0:
            raise InputError("--c must be non-negative")
        sol = backward_pass(model, args.c)
    else:
        _, sol = solve_budget(model, args.tol)
        if args.topup:
            sol = fractional_topup(model, sol, rank_pairs(model, args.alpha))
    traj = propagate_occupancy(model, sol.lam)
    feas = check_feasibility(traj, model)
    export.write_solution_csv(out / "solution.csv", sol)
    export.write_trajectory_csv(out / "trajectory.csv", traj)
    info = export.solution_dict(sol)
    info["budget"] = model.budget
    info["feasibility"] = feas.lines()
    export.write_json(out / "solution.json", info)
    print(
        f"c = {sol.c:.9g}  fraction = {sol.fraction:.9g}  "
        f"life gain upper bound = {sol.objective:.6f} days per arriving patient"
    )
    return EXIT_OK


def cmd_rank(args) -> int:
    model = _load(args.model)
    out = _outdir(args.out)
    table = rank_pairs(model, args.alpha, args.steps)
    export.write_ranking_csv(out / "ranking.csv", table)
    export.write_heatmap_json(out / "heatmap.json", table, model.grid_shape)
    finite = table.c_entry[~np.isnan(table.c_entry)]
    grid = sorted({0.0, *np.linspace(0.0, float(finite.max()) if finite.size else 1.0, 20)},
                  reverse=True)
    violations = verify_nesting(model, grid)
    export.write_json(
        out / "nesting.json",
        {"c_grid": grid, "violations": [v.__dict__ for v in violations]},
    )
    if args.figures:
        from .plotting import priority_mosaic

        priority_mosaic(table.rank, model.grid_shape, out / "heatmap.png", "proposed ranking")
    print(f"{table.n_ranked} rank steps, {len(violations)} nesting violations")
    return EXIT_OK if not violations else EXIT_FAILED


def build_strategies(model, names, alpha):
    ranking = None
    strategies = []
    for name in names:
        if name in ("proposed", "worst") and ranking is None:
            ranking = rank_pairs(model, alpha)
        if name == "proposed":
            strategies.append(RankingStrategy(ranking))
        elif name == "worst":
            strategies.append(WorstStrategy(ranking))
        elif name == "las":
            strategies.append(LasStrategy(model_score_table(model)))
        elif name in ("refined_las", "refined"):
            strategies.append(RefinedLasStrategy(model_score_table(model, refined=True)))
        elif name == "random":
            strategies.append(RandomStrategy())
        else:
            raise InputError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGIES)}")
    return strategies


def cmd_compare(args) -> int:
    model = _load(args.model)
    out = _outdir(args.out)
    if args.runs < 2:
        raise InputError("--runs must be at least 2")
    names = [s.strip() for s in args.strategies.split(",") if s.strip()]
    strategies = build_strategies(model, names, args.alpha)
    table = replicate(
        model, strategies, args.runs, args.seed, args.arrival_periods, args.pt_mode, args.workers
    )
    export.write_summary_csv(out / "summary.csv", table)
    export.write_json(out / "summary.json", export.summary_dict(table))
    if args.event_log:
        with open(out / "events.ndjson", "w") as fh:
            for strat in strategies:
                simulate_run(model, strat, args.seed, args.arrival_periods,
                             pt_mode=args.pt_mode).write_event_log(fh)
    if args.figures:
        from .plotting import outcome_boxplots, priority_mosaic, waiting_boxplots

        outcome_boxplots(table, out / "outcomes.png")
        waiting_boxplots(table, out / "waiting.png")
        for name, strat in zip(table.strategies, strategies):
            pos = strat.positions()
            if pos is not None:
                priority_mosaic(pos + 1, model.grid_shape, out / f"priority_{name}.png", name)
    for row in table.rows():
        print(
            f"{row['strategy']:>12s}  wl {row['mean_wl_life']:8.1f} ({row['sd_wl_life']:.1f})"
            f"  pt {row['mean_pt_life']:8.1f} ({row['sd_pt_life']:.1f})"
            f"  total {row['mean_total_life']:8.1f} ({row['sd_total_life']:.1f})"
        )
    return EXIT_OK


SCORE_COLUMNS = ("row", "s_wl", "s_mu", "wl_bin", "mu_bin")


def _parse_cuts(text: str) -> GridThresholds:
    try:
        wl, mu = text.split(":")
        return GridThresholds(tuple(map(float, wl.split(","))), tuple(map(float, mu.split(","))))
    except ValueError as exc:
        raise InputError(f"bad --thresholds {text!r}: {exc}") from exc


def cmd_score(args) -> int:
    try:
        with open(args.covariates, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError as exc:
        raise InputError(f"covariate file not found: {args.covariates}") from exc
    records = []
    for k, row in enumerate(rows):
        try:
            records.append(CovariateRecord.from_mapping(row))
        except CovariateError as exc:
            raise InputError(f"row {k + 1}: {exc}") from exc
    s_wl = [linear_predictor_wl(r) for r in records]
    s_mu = [linear_predictor_pt(r) for r in records]
    if args.thresholds:
        cuts = _parse_cuts(args.thresholds)
    else:
        cuts = GridThresholds.from_quantiles(s_wl, s_mu)
    bins = [discretize_state(a, b, cuts) for a, b in zip(s_wl, s_mu)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    export.write_csv(
        out,
        SCORE_COLUMNS,
        ((k + 1, a, b, wb, mb) for k, (a, b, (wb, mb)) in enumerate(zip(s_wl, s_mu, bins))),
    )
    print(f"scored {len(records)} records -> {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    model = grid_model(GridParams(horizon_T=args.horizon))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    print(f"wrote {model.n_states}-state, {model.horizon_T}-period model to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="organalloc",
        description="Allocation policies, priority rankings and waiting-list simulation.",
    )
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a model file")
    v.add_argument("--model", required=True)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("solve", help="optimal policy for a penalty or for the organ budget")
    s.add_argument("--model", required=True)
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--c", type=float, help="penalty in days; default: match the budget")
    s.add_argument("--tol", type=float, default=1e-6, help="bisection tolerance on c")
    s.add_argument("--topup", action="store_true", help="fill the budget gap fractionally")
    s.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("rank", help="priority ranking of (period, state) cells")
    r.add_argument("--model", required=True)
    r.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    r.add_argument("--steps", type=int, default=None)
    r.add_argument("--figures", action="store_true", help="also render heatmap.png")
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_rank)

    c = sub.add_parser("compare", help="simulate strategies over paired replications")
    c.add_argument("--model", required=True)
    c.add_argument("--runs", type=int, default=200)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--strategies", default=",".join(STRATEGIES))
    c.add_argument("--arrival-periods", type=int, default=DEFAULT_ARRIVAL_PERIODS)
    c.add_argument("--pt-mode", choices=("expected", "exponential"), default="expected")
    c.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--event-log", action="store_true", help="write events.ndjson for replication 0")
    c.add_argument("--figures", action="store_true", help="also render box plots and mosaics")
    c.add_argument("--out", default="out")
    c.set_defaults(func=cmd_compare)

    sc = sub.add_parser("score", help="linear predictors and grid bins for a covariate CSV")
    sc.add_argument("--covariates", required=True)
    sc.add_argument("--thresholds", help="'w1,w2,w3:m1,m2,m3'; default: sample quartiles")
    sc.add_argument("--out", default="out/scores.csv")
    sc.set_defaults(func=cmd_score)

    sy = sub.add_parser("synth", help="write the synthetic 4x4 grid model")
    sy.add_argument("--horizon", type=int, default=100)
    sy.add_argument("--out", default="model.json")
    sy.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ModelError as exc:
        for line in exc.violations:
            print(f"invalid: {line}", file=sys.stderr)
        return EXIT_INVALID
    except (InputError, CovariateError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
