"""Penalized backward recursion for the optimal allocation policy.

For a penalty ``c`` (days of life charged per transplant) the recursion runs
backwards from the last period and produces, per (period, state):

* ``eta``   expected future life gain if not transplanted now,
* ``gamma`` probability of a future transplant,
* ``phi``   the allocation index (mu - eta) / (1 - gamma).

A cell is allocated iff ``phi > c``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from .model import Model, objective_life_gain, propagate_occupancy, transplant_fraction

if TYPE_CHECKING:
    from .ranking import RankingTable

BRUTE_FORCE_LIMIT = 20
BRACKET_MARGIN = 1.05


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class PolicySolution:
    c: float
    lam: np.ndarray  # (T, n) allocation fractions
    phi: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    objective: float  # unpenalized expected life gain per arriving patient
    fraction: float  # transplant fraction per arriving patient
    singular: tuple[tuple[int, int], ...] = field(default=())  # cells where gamma == 1
    topped_up: bool = False

    @property
    def penalized(self) -> float:
        return self.objective - self.c * self.fraction

    @property
    def allocable(self) -> np.ndarray:
        return self.phi > self.c


def _evaluate(model: Model, lam: np.ndarray) -> tuple[float, float]:
    traj = propagate_occupancy(model, lam)
    return objective_life_gain(traj, model), transplant_fraction(traj)


def _recursion(model: Model, c: np.ndarray):
    """Backward recursion for a batch of penalties ``c`` (shape (K,)).

    Returns (take, phi, eta, gamma), each of shape (K, T, n). Products use
    einsum, whose per-element reduction order does not depend on K (BLAS
    matmul does), so a batch reproduces single-penalty results bit for bit.
    """
    T, n = model.horizon_T, model.n_states
    A = model.alive_transition
    mu = model.life_gain
    K = c.shape[0]
    c = c[:, None]
    take = np.zeros((K, T, n), dtype=bool)
    phi = np.zeros((K, T, n))
    eta = np.zeros((K, T, n))
    gamma = np.zeros((K, T, n))
    # value / probability carried into the start of period s+1, per state
    gain_next = np.zeros((K, n))
    prob_next = np.zeros((K, n))
    for s in range(T - 1, -1, -1):
        if s < T - 1:
            eta[:, s] = np.einsum("ij,kj->ki", A[s], gain_next)
            gamma[:, s] = np.einsum("ij,kj->ki", A[s], prob_next)
        denom = 1.0 - gamma[:, s]
        adv = mu[s] - eta[:, s]
        with np.errstate(divide="ignore", invalid="ignore"):
            phi[:, s] = np.where(denom <= 0.0, np.where(adv > 0, np.inf, -np.inf), adv / denom)
        take[:, s] = phi[:, s] > c
        gain_next = np.where(take[:, s], mu[s], eta[:, s])
        prob_next = np.where(take[:, s], 1.0, gamma[:, s])
    return take, phi, eta, gamma


def backward_pass(model: Model, c: float) -> PolicySolution:
    if c < 0:
        raise ValueError(f"penalty must be non-negative, got {c}")
    take, phi, eta, gamma = (a[0] for a in _recursion(model, np.array([float(c)])))
    lam = take.astype(float)
    singular = tuple((int(s), int(i)) for s, i in zip(*np.nonzero(gamma >= 1.0)))
    obj, frac = _evaluate(model, lam)
    return PolicySolution(float(c), lam, phi, eta, gamma, obj, frac, singular)


def allocable_masks(model: Model, cs) -> np.ndarray:
    """Allocable cells for many penalties at once, shape (len(cs), T, n)."""
    cs = np.asarray(cs, dtype=float)
    if (cs < 0).any():
        raise ValueError("penalties must be non-negative")
    return _recursion(model, cs)[0]


def _enumerate(model: Model, chunk: int = 1 << 14):
    """Yield (policies, objective, fraction) for every {0,1} policy, chunked."""
    T, n = model.horizon_T, model.n_states
    bits = T * n
    A = model.alive_transition
    mu = model.life_gain
    total = 1 << bits
    shifts = np.arange(bits, dtype=np.int64)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        lam = ((codes[:, None] >> shifts) & 1).astype(float).reshape(-1, T, n)
        pi = np.broadcast_to(model.initial_dist, (len(codes), n)).copy()
        obj = np.zeros(len(codes))
        frac = np.zeros(len(codes))
        for s in range(T):
            taken = pi * lam[:, s]
            obj += taken @ mu[s]
            frac += taken.sum(axis=1)
            pi = (pi - taken) @ A[s]
        yield lam, obj, frac


def brute_force_optimum(model: Model, c: float) -> tuple[np.ndarray, float]:
    """Exhaustive search over all deterministic policies.

    Returns the first maximizer of ``objective - c * fraction`` in
    enumeration order, together with its penalized value.
    """
    if model.n_states * model.horizon_T > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"instance too large for enumeration: n*T = "
            f"{model.n_states * model.horizon_T} > {BRUTE_FORCE_LIMIT}"
        )
    best_val, best_lam = -np.inf, None
    for lam, obj, frac in _enumerate(model):
        val = obj - c * frac
        k = int(np.argmax(val))
        if val[k] > best_val:
            best_val, best_lam = float(val[k]), lam[k].copy()
    return best_lam, best_val


def penalty_bracket(model: Model) -> float:
    """A penalty at which no cell is allocable."""
    top = float(np.max(np.abs(model.life_gain)))
    return BRACKET_MARGIN * top if top > 0 else 1.0


def solve_budget(model: Model, tol: float = 1e-6) -> tuple[float, PolicySolution]:
    """Smallest penalty whose optimal policy respects the organ budget.

    The transplant fraction is a non-increasing step function of the penalty,
    so plain bisection on ``[0, penalty_bracket(model)]`` locates the budget
    crossing to within ``tol``.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    budget = model.budget
    sol_lo = backward_pass(model, 0.0)
    if sol_lo.fraction <= budget:
        return 0.0, sol_lo
    lo, hi = 0.0, penalty_bracket(model)
    sol_hi = backward_pass(model, hi)
    if sol_hi.fraction > budget:
        raise SolverError(
            f"fraction {sol_hi.fraction:.6g} at bracket c={hi:.6g} still exceeds budget"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        sol = backward_pass(model, mid)
        if not sol_hi.fraction <= sol.fraction <= sol_lo.fraction:
            raise SolverError(
                "transplant fraction is not monotone in the penalty: "
                f"f({lo:.9g})={sol_lo.fraction:.12g}, f({mid:.9g})={sol.fraction:.12g}, "
                f"f({hi:.9g})={sol_hi.fraction:.12g}"
            )
        if sol.fraction <= budget:
            hi, sol_hi = mid, sol
        else:
            lo, sol_lo = mid, sol
    return hi, sol_hi


def fractional_topup(
    model: Model, solution: PolicySolution, ranking: "RankingTable", tol: float = 1e-9
) -> PolicySolution:
    """Spend the budget left over by a step-function solution.

    Cells are raised in priority order. The transplant fraction is affine in
    any single cell's allocation level, so each cell's level is solved for
    in closed form.
    """
    budget = model.budget
    lam = solution.lam.copy()
    frac = solution.fraction
    if frac > budget + tol:
        raise ValueError(f"solution fraction {frac:.6g} already exceeds budget {budget:.6g}")
    for s, i in ranking.ordered_pairs():
        if budget - frac <= tol:
            break
        if lam[s, i] >= 1.0:
            continue
        lo_level = lam[s, i]
        lam[s, i] = 1.0
        _, f_full = _evaluate(model, lam)
        if f_full <= budget:
            frac = f_full
            continue
        slope = (f_full - frac) / (1.0 - lo_level)
        lam[s, i] = lo_level + (budget - frac) / slope
        _, frac = _evaluate(model, lam)
    obj, frac = _evaluate(model, lam)
    return replace(solution, lam=lam, objective=obj, fraction=frac, topped_up=True)


def enumerate_policies(T: int, n: int):
    """All deterministic policies as (T, n) arrays; for small instances only."""
    for bits in itertools.product((0.0, 1.0), repeat=T * n):
        yield np.array(bits).reshape(T, n)
