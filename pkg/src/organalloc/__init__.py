"""Optimal organ-allocation rates, priority rankings and waiting-list simulation."""

from .hjb import PolicySolution, SolverError, backward_pass, brute_force_optimum, fractional_topup, solve_budget
from .model import (
    Model,
    ModelError,
    OccupancyTrajectory,
    check_feasibility,
    load_model,
    objective_life_gain,
    propagate_occupancy,
    transplant_fraction,
    validate_model,
)
from .ranking import RankingTable, allocable_set, rank_pairs, verify_nesting

__all__ = [
    "Model",
    "ModelError",
    "OccupancyTrajectory",
    "PolicySolution",
    "RankingTable",
    "SolverError",
    "allocable_set",
    "backward_pass",
    "brute_force_optimum",
    "check_feasibility",
    "fractional_topup",
    "load_model",
    "objective_life_gain",
    "propagate_occupancy",
    "rank_pairs",
    "solve_budget",
    "transplant_fraction",
    "validate_model",
    "verify_nesting",
]
