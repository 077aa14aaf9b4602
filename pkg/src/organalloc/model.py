"""Discrete waiting-list model, occupancy propagation and budget accounting.

States are indexed 1..n for alive, untransplanted patients; index 0 is death.
Waiting time is measured in periods s = 0..T-1. Allocation in period s acts on
the occupancy held at the start of s, after which survivors move through P_s.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

PROB_TOL = 1e-12


class ModelError(ValueError):
    """Raised when a parameter bundle violates one or more model invariants."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid model:\n  " + "\n  ".join(self.violations))


@dataclass(frozen=True)
class Model:
    n_states: int
    horizon_T: int
    period_days: float
    transition: np.ndarray  # (T, n+1, n+1), death at index 0
    initial_dist: np.ndarray  # (n,)
    life_gain: np.ndarray  # (T, n)
    pt_life: np.ndarray  # (T, n)
    organ_rate: float
    patient_rate: float
    state_grid: tuple[int, int] | None = None  # (S_wl bins, S_mu bins), optional

    @property
    def alive_transition(self) -> np.ndarray:
        """P_s restricted to alive -> alive moves, shape (T, n, n)."""
        return self.transition[:, 1:, 1:]

    @property
    def budget(self) -> float:
        return self.organ_rate / self.patient_rate

    @property
    def grid_shape(self) -> tuple[int, int]:
        if self.state_grid is not None:
            return self.state_grid
        root = int(round(self.n_states**0.5))
        if root * root == self.n_states:
            return (root, root)
        return (self.n_states, 1)

    def with_initial_dist(self, dist) -> "Model":
        return validate_model({**self.to_dict(), "initial_dist": list(dist)})

    def to_dict(self) -> dict[str, Any]:
        out = {
            "n_states": self.n_states,
            "horizon_T": self.horizon_T,
            "period_days": self.period_days,
            "transition": self.transition.tolist(),
            "initial_dist": self.initial_dist.tolist(),
            "life_gain": self.life_gain.tolist(),
            "pt_life": self.pt_life.tolist(),
            "organ_rate": self.organ_rate,
            "patient_rate": self.patient_rate,
        }
        if self.state_grid is not None:
            out["state_grid"] = list(self.state_grid)
        return out


REQUIRED_FIELDS = (
    "n_states",
    "horizon_T",
    "transition",
    "initial_dist",
    "life_gain",
    "pt_life",
    "organ_rate",
    "patient_rate",
)


def validate_model(raw: Mapping[str, Any]) -> Model:
    """Build a :class:`Model` from a parameter bundle.

    Every violated invariant is collected before raising, so a single
    :class:`ModelError` lists all problems with the bundle.
    """
    missing = [k for k in REQUIRED_FIELDS if k not in raw]
    if missing:
        raise ModelError([f"missing field '{k}'" for k in missing])

    errors: list[str] = []
    n = int(raw["n_states"])
    T = int(raw["horizon_T"])
    period_days = float(raw.get("period_days", 30))
    if n < 1:
        errors.append(f"n_states must be >= 1, got {n}")
    if T < 1:
        errors.append(f"horizon_T must be >= 1, got {T}")
    if period_days <= 0:
        errors.append(f"period_days must be positive, got {period_days}")
    if errors:
        raise ModelError(errors)

    def as_array(key, shape):
        try:
            arr = np.asarray(raw[key], dtype=float)
        except (TypeError, ValueError):
            errors.append(f"{key}: not a rectangular numeric array")
            return None
        if arr.shape != shape:
            errors.append(f"{key}: expected shape {shape}, got {arr.shape}")
            return None
        if not np.all(np.isfinite(arr)):
            errors.append(f"{key}: non-finite entries")
            return None
        return arr

    P = as_array("transition", (T, n + 1, n + 1))
    p0 = as_array("initial_dist", (n,))
    gain = as_array("life_gain", (T, n))
    pt = as_array("pt_life", (T, n))

    if P is not None:
        for s, i in zip(*np.nonzero((P < 0).any(axis=2))):
            errors.append(f"transition row (s={s}, i={i}) has a negative probability")
        sums = P.sum(axis=2)
        for s, i in zip(*np.nonzero(np.abs(sums - 1.0) > PROB_TOL)):
            errors.append(
                f"transition row (s={s}, i={i}) sums to {sums[s, i]!r}, not 1"
            )
        for s in range(T):
            if abs(P[s, 0, 0] - 1.0) > PROB_TOL:
                errors.append(f"transition (s={s}): death row must be absorbing")
        dead_last = np.abs(P[T - 1, 1:, 0] - 1.0) > PROB_TOL
        for i in np.nonzero(dead_last)[0]:
            errors.append(
                f"transition row (s={T - 1}, i={i + 1}) must put all mass on death "
                "at the horizon"
            )
    if p0 is not None:
        if (p0 < 0).any():
            errors.append("initial_dist has negative entries")
        if abs(p0.sum() - 1.0) > PROB_TOL:
            errors.append(f"initial_dist sums to {p0.sum()!r}, not 1")
    if pt is not None and (pt < 0).any():
        errors.append("pt_life has negative entries")

    rho = float(raw["organ_rate"])
    tau = float(raw["patient_rate"])
    if rho < 0:
        errors.append(f"organ_rate must be >= 0, got {rho}")
    if tau <= 0:
        errors.append(f"patient_rate must be positive, got {tau}")
    elif rho >= tau:
        errors.append(f"organ_rate ({rho}) must be below patient_rate ({tau})")

    grid = raw.get("state_grid")
    if grid is not None:
        grid = tuple(int(g) for g in grid)
        if len(grid) != 2 or grid[0] * grid[1] != n:
            errors.append(f"state_grid {list(grid)} does not cover {n} states")

    if errors:
        raise ModelError(errors)
    for arr in (P, p0, gain, pt):
        arr.setflags(write=False)
    return Model(n, T, period_days, P, p0, gain, pt, rho, tau, grid)


def load_model(path: str | Path) -> Model:
    with open(path) as fh:
        raw = json.load(fh)
    return validate_model(raw)


def save_model(model: Model, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1)


@dataclass(frozen=True)
class OccupancyTrajectory:
    """Per-arriving-patient occupancy under a fixed policy.

    ``pi_pre`` and ``death_mass`` have T+1 rows; row T is the state after the
    horizon (all alive mass has died by then).
    """

    pi_pre: np.ndarray  # (T+1, n)
    pi_post: np.ndarray  # (T, n)
    psi: np.ndarray  # (T, n)
    death_mass: np.ndarray  # (T+1,) cumulative deaths before period s

    @property
    def transplanted_before(self) -> np.ndarray:
        """Cumulative transplant mass before each period, shape (T+1,)."""
        return np.concatenate([[0.0], np.cumsum(self.psi.sum(axis=1))])


def _check_policy(model: Model, policy) -> np.ndarray:
    lam = np.asarray(policy, dtype=float)
    if lam.shape != (model.horizon_T, model.n_states):
        raise ValueError(
            f"policy shape {lam.shape} does not match model "
            f"({model.horizon_T}, {model.n_states})"
        )
    return lam


def propagate_occupancy(model: Model, policy) -> OccupancyTrajectory:
    lam = _check_policy(model, policy)
    T, n = model.horizon_T, model.n_states
    P = model.transition
    pi_pre = np.zeros((T + 1, n))
    pi_post = np.zeros((T, n))
    psi = np.zeros((T, n))
    death = np.zeros(T + 1)
    pi_pre[0] = model.initial_dist
    for s in range(T):
        psi[s] = pi_pre[s] * lam[s]
        pi_post[s] = pi_pre[s] - psi[s]
        pi_pre[s + 1] = pi_post[s] @ P[s, 1:, 1:]
        death[s + 1] = death[s] + pi_post[s] @ P[s, 1:, 0]
    return OccupancyTrajectory(pi_pre, pi_post, psi, death)


def objective_life_gain(traj: OccupancyTrajectory, model: Model) -> float:
    """Expected life gain (days) per arriving patient."""
    if traj.psi.shape != model.life_gain.shape:
        raise ValueError("trajectory does not match model dimensions")
    return float(np.sum(traj.psi * model.life_gain))


def transplant_fraction(traj: OccupancyTrajectory) -> float:
    return float(traj.psi.sum())


@dataclass
class FeasibilityReport:
    psi_violations: list[tuple[int, int]] = field(default_factory=list)
    negative_occupancy: list[tuple[int, int]] = field(default_factory=list)
    fraction: float = 0.0
    budget: float = 1.0
    within_budget: bool = True

    @property
    def feasible(self) -> bool:
        return not (self.psi_violations or self.negative_occupancy) and self.within_budget

    def lines(self) -> list[str]:
        out = [f"psi outside [0, pi_pre] at (s={s}, i={i})" for s, i in self.psi_violations]
        out += [f"negative occupancy at (s={s}, i={i})" for s, i in self.negative_occupancy]
        if not self.within_budget:
            out.append(
                f"transplant fraction {self.fraction:.6g} exceeds budget {self.budget:.6g}"
            )
        return out


def check_feasibility(
    traj: OccupancyTrajectory, model: Model, tol: float = PROB_TOL
) -> FeasibilityReport:
    """Check the per-cell transplant bounds and the organ budget.

    Reported (s, i) use the 1-based alive-state index.
    """
    psi, pre = traj.psi, traj.pi_pre[: model.horizon_T]
    bad_psi = (psi < -tol) | (psi > pre + tol)
    bad_occ = (traj.pi_pre < -tol).copy()
    bad_occ[:-1] |= traj.pi_post < -tol
    frac = transplant_fraction(traj)
    return FeasibilityReport(
        psi_violations=[(int(s), int(i) + 1) for s, i in zip(*np.nonzero(bad_psi))],
        negative_occupancy=[(int(s), int(i) + 1) for s, i in zip(*np.nonzero(bad_occ))],
        fraction=frac,
        budget=model.budget,
        within_budget=frac <= model.budget + tol,
    )


def expected_waitlist_life(transition: np.ndarray, period_days: float) -> np.ndarray:
    """Expected remaining days on the list without transplant, shape (T, n).

    A patient alive at the start of period s is credited the whole period,
    matching the simulator's accounting.
    """
    T = transition.shape[0]
    A = transition[:, 1:, 1:]
    resid = np.zeros((T + 1, A.shape[1]))
    for s in range(T - 1, -1, -1):
        resid[s] = period_days + A[s] @ resid[s + 1]
    return resid[:T]
