"""Lung Allocation Score (LAS) and the refined, uncapped variant.

Covariate records are turned into the two linear predictors (waiting-list and
post-transplant hazard), survival curves are summarized by one-year areas, and
the predictors are binned onto the simulator's state grid. Coefficients live
in ``data/*.json``, one row per table line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np

from .model import Model

DIAGNOSIS_GROUPS = ("A", "B", "C", "D")
DETAILED_DIAGNOSES = {
    "none": None,
    "bronchiectasis": "A",
    "eisenmenger": "B",
    "lymphangioleiomyomatosis": "A",
    "obliterative_bronchiolitis": "D",
    "pulmonary_fibrosis_not_idiopathic": "D",
    "sarcoidosis_pa_gt_30": "D",
    "sarcoidosis_pa_le_30": "A",
}
MIN_AGE = 12.0
ONE_YEAR = 365


class CovariateError(ValueError):
    pass


@dataclass(frozen=True)
class CovariateRecord:
    age: float
    bmi: float
    ventilation_status: bool
    creatinine: float
    creatinine_increase_150: bool
    diabetes: bool
    diagnosis_group: str
    detailed_diagnosis: str
    fvc_percent: float
    functional_status_no_assist: bool
    o2_rest: float
    pco2: float
    pco2_increase_15: bool
    pa_systolic: float
    six_minute_walk: float

    def __post_init__(self):
        if self.age < MIN_AGE:
            raise CovariateError(f"age {self.age} below {MIN_AGE}")
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                if not math.isfinite(v) or v < 0:
                    raise CovariateError(f"{f.name} must be a non-negative number, got {v}")
        if self.diagnosis_group not in DIAGNOSIS_GROUPS:
            raise CovariateError(f"unknown diagnosis group {self.diagnosis_group!r}")
        if self.detailed_diagnosis not in DETAILED_DIAGNOSES:
            raise CovariateError(f"unknown detailed diagnosis {self.detailed_diagnosis!r}")
        home = DETAILED_DIAGNOSES[self.detailed_diagnosis]
        if home is not None and home != self.diagnosis_group:
            raise CovariateError(
                f"{self.detailed_diagnosis} belongs to group {home}, "
                f"record has group {self.diagnosis_group}"
            )

    @classmethod
    def from_mapping(cls, row: Mapping[str, Any]) -> "CovariateRecord":
        """Parse a CSV-style row; missing covariates are rejected, not imputed."""
        kwargs = {}
        for f in fields(cls):
            if f.name not in row or row[f.name] in ("", None):
                raise CovariateError(f"missing covariate {f.name!r}")
            raw = row[f.name]
            if f.type == "bool":
                if isinstance(raw, str):
                    low = raw.strip().lower()
                    if low not in ("0", "1", "true", "false", "yes", "no"):
                        raise CovariateError(f"{f.name}: not a flag: {raw!r}")
                    raw = low in ("1", "true", "yes")
                kwargs[f.name] = bool(raw)
            elif f.type == "str":
                kwargs[f.name] = str(raw).strip()
            else:
                try:
                    kwargs[f.name] = float(raw)
                except ValueError as exc:
                    raise CovariateError(f"{f.name}: not a number: {raw!r}") from exc
        return cls(**kwargs)


@lru_cache(maxsize=None)
def load_coefficients(name: str) -> tuple[dict, ...]:
    """Coefficient rows for ``"waitlist"`` or ``"posttransplant"``."""
    text = resources.files("organalloc.data").joinpath(f"{name}_coefficients.json").read_text()
    return tuple(json.loads(text)["rows"])


def term(row: Mapping[str, Any], rec: CovariateRecord) -> float:
    """Contribution of one coefficient row to a linear predictor."""
    groups = row.get("applies_to")
    if groups is not None and rec.diagnosis_group not in groups:
        return 0.0
    coef = row["coefficient"]
    x = getattr(rec, row["field"])
    scale = row.get("scale", 1.0)
    thr = row.get("threshold")
    rule = row["rule"]
    if rule == "linear":
        return coef * scale * x
    if rule == "flag":
        return coef if x else 0.0
    if rule == "category":
        return coef if x == row["value"] else 0.0
    if rule == "below_gap":
        return coef * scale * (thr - x) if x < thr else 0.0
    if rule == "above_gap":
        return coef * scale * (x - thr) if x > thr else 0.0
    if rule == "linear_above":
        return coef * scale * x if x > thr else 0.0
    if rule == "at_least":
        return coef if x >= thr else 0.0
    if rule == "linear_if_adult":
        return coef * scale * x if rec.age >= thr else 0.0
    raise ValueError(f"unknown coefficient rule {rule!r}")


def linear_predictor(rec: CovariateRecord, table: str) -> float:
    return float(sum(term(row, rec) for row in load_coefficients(table)))


def linear_predictor_wl(rec: CovariateRecord) -> float:
    return linear_predictor(rec, "waitlist")


def linear_predictor_pt(rec: CovariateRecord) -> float:
    return linear_predictor(rec, "posttransplant")


@dataclass(frozen=True)
class SurvivalCurve:
    """Daily survival probabilities F(t), t = 0..t_max."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("survival curve must be a non-empty 1-d array")
        if v[0] > 1.0 + 1e-12 or (v < 0).any():
            raise ValueError("survival values must lie in [0, 1]")
        if (np.diff(v) > 1e-12).any():
            raise ValueError("survival curve must be non-increasing")
        object.__setattr__(self, "values", v)

    @property
    def t_max(self) -> int:
        return self.values.size - 1


def curve_from_baseline(baseline: Sequence[float], lp: float, lp_ref: float = 0.0) -> SurvivalCurve:
    """Proportional-hazards curve S0(t) ** exp(lp - lp_ref)."""
    return SurvivalCurve(np.asarray(baseline, dtype=float) ** math.exp(lp - lp_ref))


def auc_one_year(curve: SurvivalCurve) -> float:
    if curve.t_max < ONE_YEAR - 1:
        raise ValueError(f"curve covers {curve.t_max + 1} days, need {ONE_YEAR}")
    return float(curve.values[:ONE_YEAR].sum())


def las_score(wlauc: float, ptauc: float) -> float:
    for name, v in (("wlauc", wlauc), ("ptauc", ptauc)):
        if not 0.0 <= v <= ONE_YEAR:
            raise ValueError(f"{name}={v} outside [0, {ONE_YEAR}]")
    return 100.0 * (ptauc - 2.0 * wlauc + 730.0) / 1095.0


class RefinedScore(NamedTuple):
    score: float
    median_pt: float
    censored: bool  # post-transplant curve never reached 0.5


def median_survival(curve: SurvivalCurve) -> tuple[float, bool]:
    below = np.nonzero(curve.values <= 0.5)[0]
    if below.size == 0:
        return float(curve.t_max), True
    return float(below[0]), False


def refined_las(wl_curve_from_s: SurvivalCurve, pt_curve: SurvivalCurve) -> RefinedScore:
    """Uncapped score: median post-transplant survival minus twice the full
    waiting-list life expectancy (both in days)."""
    median, censored = median_survival(pt_curve)
    return RefinedScore(median - 2.0 * float(wl_curve_from_s.values.sum()), median, censored)


@dataclass(frozen=True)
class GridThresholds:
    wl_cuts: tuple[float, ...]
    mu_cuts: tuple[float, ...]

    def __post_init__(self):
        for name in ("wl_cuts", "mu_cuts"):
            cuts = np.asarray(getattr(self, name), dtype=float)
            if cuts.ndim != 1 or (np.diff(cuts) <= 0).any():
                raise ValueError(f"{name} must be strictly increasing")

    @classmethod
    def from_quantiles(cls, s_wl: Sequence[float], s_mu: Sequence[float], bins: int = 4):
        q = np.linspace(0, 1, bins + 1)[1:-1]
        return cls(
            tuple(np.quantile(np.asarray(s_wl, float), q)),
            tuple(np.quantile(np.asarray(s_mu, float), q)),
        )


def discretize_state(s_wl: float, s_mu: float, thresholds: GridThresholds) -> tuple[int, int]:
    """1-based (S_wl bin, S_mu bin); values on a cut go to the higher bin."""
    a = int(np.searchsorted(thresholds.wl_cuts, s_wl, side="right")) + 1
    b = int(np.searchsorted(thresholds.mu_cuts, s_mu, side="right")) + 1
    return a, b


# ---------------------------------------------------------------------------
# Scores on the model's (period, state) grid, used as simulator strategies.


def period_survival(model: Model, start: int) -> np.ndarray:
    """Probability of being alive on the list k periods after ``start``.

    Shape (n, T - start + 1); column 0 is all ones.
    """
    A = model.alive_transition
    n = model.n_states
    span = model.horizon_T - start
    out = np.empty((n, span + 1))
    v = np.eye(n)
    for k in range(span + 1):
        out[:, k] = v.sum(axis=1)
        if k < span:
            v = v @ A[start + k]
    return out


def _step_curve(surv: np.ndarray, period_days: int, days: int) -> SurvivalCurve:
    t = np.arange(days + 1)
    k = t // period_days
    return SurvivalCurve(np.where(k < surv.size, surv[np.minimum(k, surv.size - 1)], 0.0))


def waitlist_curve(model: Model, start: int, state: int, days: int) -> SurvivalCurve:
    """Daily list survival from period ``start`` in 0-based ``state``.

    Survival is held flat within a period, so the curve's sum equals the
    expected remaining list life used in the life-gain table.
    """
    surv = period_survival(model, start)[state]
    return _step_curve(surv, int(model.period_days), days)


def posttransplant_curve(mean_days: float, days: int) -> SurvivalCurve:
    """Exponential post-transplant survival with the given mean."""
    t = np.arange(days + 1)
    if mean_days <= 0:
        return SurvivalCurve(np.zeros(days + 1))
    return SurvivalCurve(np.exp(-t / mean_days))


def model_score_table(model: Model, refined: bool = False) -> np.ndarray:
    """LAS-type priority score for every (period, state) cell, shape (T, n).

    The original LAS ignores time already waited: every period reuses the
    waiting-list curve of a newly listed patient in the same state. The
    refined score conditions on the current period and drops the one-year cap.
    """
    T, n = model.horizon_T, model.n_states
    d = int(model.period_days)
    wl_days = max(ONE_YEAR, T * d)
    pt_days = max(ONE_YEAR, int(math.ceil(float(model.pt_life.max()) * math.log(2))) + 2)
    scores = np.zeros((T, n))
    fresh = period_survival(model, 0)
    for s in range(T):
        surv = period_survival(model, s) if refined else fresh
        for i in range(n):
            wl = _step_curve(surv[i], d, wl_days)
            pt = posttransplant_curve(float(model.pt_life[s, i]), pt_days)
            if refined:
                scores[s, i] = refined_las(wl, pt).score
            else:
                scores[s, i] = las_score(auc_one_year(wl), auc_one_year(pt))
    return scores
