"""Model generators: a lung-list-like 4x4 grid and small random instances.

The grid model stands in for the UNOS-fitted parameters, which are not
public. States are (S_wl, S_mu) bins; a larger bin means shorter expected life
on the list (S_wl) or after transplant (S_mu). Life gain is post-transplant
life minus the expected counterfactual list life, so the solver objective
and the simulator's accounting agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Model, expected_waitlist_life, validate_model

FITTED_ORGAN_RATE = 104.0
FITTED_PATIENT_RATE = 173.0


@dataclass(frozen=True)
class GridParams:
    horizon_T: int = 100
    period_days: float = 30.0
    # monthly probability of death on the list, per S_wl bin
    death_prob: tuple[float, ...] = (0.01, 0.03, 0.08, 0.18)
    # post-transplant life (days) per S_mu bin, at waiting period 0
    pt_base: tuple[float, ...] = (3600.0, 2400.0, 1400.0, 600.0)
    # relative loss of post-transplant life per S_wl bin above the first
    pt_wl_penalty: float = 0.06
    # relative loss of post-transplant life per period waited
    pt_wait_decay: float = 0.002
    # per-period probabilities of moving one bin up (sicker) / down
    wl_up: float = 0.10
    wl_down: float = 0.04
    mu_up: float = 0.06
    mu_down: float = 0.03
    initial_wl: tuple[float, ...] = (0.35, 0.30, 0.20, 0.15)
    initial_mu: tuple[float, ...] = (0.30, 0.30, 0.25, 0.15)
    organ_rate: float = FITTED_ORGAN_RATE
    patient_rate: float = FITTED_PATIENT_RATE


def _bin_walk(k: int, up: float, down: float) -> np.ndarray:
    """One-step transition matrix of a reflecting walk on k bins."""
    M = np.zeros((k, k))
    for a in range(k):
        u = up if a < k - 1 else 0.0
        d = down if a > 0 else 0.0
        M[a, a] = 1.0 - u - d
        if u:
            M[a, a + 1] = u
        if d:
            M[a, a - 1] = d
    return M


def grid_model(params: GridParams = GridParams()) -> Model:
    n_wl, n_mu = len(params.death_prob), len(params.pt_base)
    n, T = n_wl * n_mu, params.horizon_T
    # state k = a * n_mu + b for S_wl bin a, S_mu bin b
    move = np.kron(
        _bin_walk(n_wl, params.wl_up, params.wl_down),
        _bin_walk(n_mu, params.mu_up, params.mu_down),
    )
    die = np.repeat(np.asarray(params.death_prob), n_mu)
    P = np.zeros((T, n + 1, n + 1))
    P[:, 0, 0] = 1.0
    P[:, 1:, 0] = die
    P[:, 1:, 1:] = (1.0 - die)[:, None] * move
    P[T - 1, 1:, :] = 0.0
    P[T - 1, 1:, 0] = 1.0

    a = np.repeat(np.arange(n_wl), n_mu)
    b = np.tile(np.arange(n_mu), n_wl)
    base = np.asarray(params.pt_base)[b] * (1.0 - params.pt_wl_penalty * a)
    wait = np.clip(1.0 - params.pt_wait_decay * np.arange(T), 0.0, None)
    pt = wait[:, None] * base[None, :]
    gain = pt - expected_waitlist_life(P, params.period_days)
    p0 = np.outer(params.initial_wl, params.initial_mu).ravel()
    return validate_model(
        {
            "n_states": n,
            "horizon_T": T,
            "period_days": params.period_days,
            "transition": P,
            "initial_dist": p0 / p0.sum(),
            "life_gain": gain,
            "pt_life": pt,
            "organ_rate": params.organ_rate,
            "patient_rate": params.patient_rate,
            "state_grid": (n_wl, n_mu),
        }
    )


def random_model(
    rng: np.random.Generator,
    n_states: int,
    horizon_T: int,
    gain_range: tuple[float, float] = (-50.0, 400.0),
    budget: float | None = None,
    period_days: float = 30.0,
) -> Model:
    """Random instance with Dirichlet transition rows (death included)."""
    n, T = n_states, horizon_T
    P = np.zeros((T, n + 1, n + 1))
    P[:, 0, 0] = 1.0
    P[:, 1:, :] = rng.dirichlet(np.ones(n + 1), size=(T, n))
    P[T - 1, 1:, :] = 0.0
    P[T - 1, 1:, 0] = 1.0
    p0 = rng.dirichlet(np.ones(n))
    gain = rng.uniform(*gain_range, size=(T, n))
    pt = rng.uniform(0.0, 3000.0, size=(T, n))
    if budget is None:
        budget = rng.uniform(0.05, 0.95)
    tau = FITTED_PATIENT_RATE
    return validate_model(
        {
            "n_states": n,
            "horizon_T": T,
            "period_days": period_days,
            "transition": P,
            "initial_dist": p0,
            "life_gain": gain,
            "pt_life": pt,
            "organ_rate": budget * tau,
            "patient_rate": tau,
        }
    )
