from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from organalloc.las import (
    CovariateError,
    CovariateRecord,
    GridThresholds,
    SurvivalCurve,
    auc_one_year,
    curve_from_baseline,
    discretize_state,
    las_score,
    linear_predictor_pt,
    linear_predictor_wl,
    load_coefficients,
    median_survival,
    model_score_table,
    refined_las,
    waitlist_curve,
)
from organalloc.model import expected_waitlist_life

BASE = CovariateRecord(
    age=40.0,
    bmi=22.0,
    ventilation_status=False,
    creatinine=0.0,
    creatinine_increase_150=False,
    diabetes=False,
    diagnosis_group="A",
    detailed_diagnosis="none",
    fvc_percent=90.0,
    functional_status_no_assist=False,
    o2_rest=0.0,
    pco2=35.0,
    pco2_increase_15=False,
    pa_systolic=0.0,
    six_minute_walk=0.0,
)


def wl_delta(**change):
    return linear_predictor_wl(replace(BASE, **change)) - linear_predictor_wl(BASE)


def pt_delta(base=BASE, **change):
    return linear_predictor_pt(replace(base, **change)) - linear_predictor_pt(base)


# Per-covariate deltas worked out by hand, independent of the shipped data files.
WAITLIST_DELTAS = [
    ({"age": 50.0}, 0.014 * 10),
    ({"bmi": 18.0}, 0.116 * 2),
    ({"bmi": 25.0}, 0.0),
    ({"ventilation_status": True}, -0.444),
    ({"creatinine": 1.5}, 0.220 * 1.5),
    ({"age": 15.0, "creatinine": 1.5}, 0.014 * -25),
    ({"diabetes": True}, 0.173),
    ({"diagnosis_group": "B"}, 0.794),
    ({"diagnosis_group": "C"}, 1.126),
    ({"diagnosis_group": "D", "fvc_percent": 80.0}, 0.163),
    ({"detailed_diagnosis": "bronchiectasis"}, 0.182),
    ({"diagnosis_group": "B", "detailed_diagnosis": "eisenmenger"}, 0.794 - 1.04),
    ({"detailed_diagnosis": "lymphangioleiomyomatosis"}, -0.961),
    ({"diagnosis_group": "D", "fvc_percent": 80.0,
      "detailed_diagnosis": "obliterative_bronchiolitis"}, 0.163 - 0.416),
    ({"diagnosis_group": "D", "fvc_percent": 80.0,
      "detailed_diagnosis": "pulmonary_fibrosis_not_idiopathic"}, 0.163 + 0.014),
    ({"diagnosis_group": "D", "fvc_percent": 80.0,
      "detailed_diagnosis": "sarcoidosis_pa_gt_30"}, 0.163 - 0.44),
    ({"detailed_diagnosis": "sarcoidosis_pa_le_30"}, 0.613),
    ({"diagnosis_group": "D", "fvc_percent": 60.0}, 0.163 + 0.188 * 2),
    ({"fvc_percent": 60.0}, 0.0),
    ({"functional_status_no_assist": True}, -0.287),
    ({"o2_rest": 4.0}, 0.108 * 4),
    ({"diagnosis_group": "B", "o2_rest": 4.0}, 0.794 + 0.111 * 4),
    ({"pco2": 40.0}, 0.222),
    ({"pco2": 39.9}, 0.0),
    ({"pco2_increase_15": True}, -0.232),
    ({"pa_systolic": 60.0}, 0.003 * 6),
    ({"pa_systolic": 40.0}, 0.0),
    ({"diagnosis_group": "C", "pa_systolic": 30.0}, 1.126 + 0.016 * 3),
    ({"six_minute_walk": 500.0}, -0.075 * 5),
]

POSTTRANSPLANT_DELTAS = [
    ({"age": 55.0}, 4.4e-3 * 10),
    ({"age": 45.0}, 0.0),
    ({"creatinine": 2.0}, 0.177 * 2),
    ({"creatinine_increase_150": True}, 0.570),
    ({"ventilation_status": True}, -0.05),
    ({"diagnosis_group": "B"}, 0.263),
    ({"diagnosis_group": "C"}, 0.268),
    ({"diagnosis_group": "D"}, 0.171),
    ({"detailed_diagnosis": "bronchiectasis"}, 0.191),
    ({"diagnosis_group": "B", "detailed_diagnosis": "eisenmenger"}, 0.263 + 0.745),
    ({"detailed_diagnosis": "lymphangioleiomyomatosis"}, -0.625),
    ({"diagnosis_group": "D", "detailed_diagnosis": "obliterative_bronchiolitis"}, 0.171 + 0.035),
    ({"diagnosis_group": "D", "detailed_diagnosis": "pulmonary_fibrosis_not_idiopathic"},
     0.171 - 0.150),
    ({"diagnosis_group": "D", "detailed_diagnosis": "sarcoidosis_pa_gt_30"}, 0.171 - 0.230),
    ({"detailed_diagnosis": "sarcoidosis_pa_le_30"}, -0.043),
    ({"o2_rest": 5.0}, 6.6e-3 * 5),
    ({"diagnosis_group": "C", "o2_rest": 5.0}, 0.268 + 1.1e-3 * 5),
    ({"functional_status_no_assist": True}, -0.206),
]


@pytest.mark.parametrize("change,expected", WAITLIST_DELTAS)
def test_waitlist_coefficient(change, expected):
    assert wl_delta(**change) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("change,expected", POSTTRANSPLANT_DELTAS)
def test_posttransplant_coefficient(change, expected):
    assert pt_delta(**change) == pytest.approx(expected, abs=1e-12)


def test_posttransplant_walk():
    walked = replace(BASE, six_minute_walk=1200.0)
    assert pt_delta(walked, six_minute_walk=1000.0) == pytest.approx(3.0e-4 * 200, abs=1e-12)
    assert pt_delta(walked, six_minute_walk=1500.0) == 0.0


def test_adult_creatinine_rule():
    teen = replace(BASE, age=15.0)
    assert linear_predictor_pt(replace(teen, creatinine=3.0)) == linear_predictor_pt(teen)


def test_every_row_exercised():
    keys = {r["key"] for r in load_coefficients("waitlist")}
    assert len(keys) == 25 and len({r["key"] for r in load_coefficients("posttransplant")}) == 19


def test_reference_record_hand_sum():
    rec = replace(BASE, six_minute_walk=800.0, o2_rest=2.0, pa_systolic=50.0)
    expected = 0.014 * 40 + 0.108 * 2 + 0.003 * 5 - 0.075 * 8
    assert linear_predictor_wl(rec) == pytest.approx(expected, abs=1e-12)


def test_additivity():
    changes = {"age": 60.0, "diabetes": True, "o2_rest": 3.0, "six_minute_walk": 700.0}
    total = wl_delta(**changes)
    parts = sum(wl_delta(**{k: v}) for k, v in changes.items())
    assert total == pytest.approx(parts, abs=1e-12)


# ---------------------------------------------------------------- records


def test_record_validation():
    with pytest.raises(CovariateError, match="age"):
        replace(BASE, age=11.0)
    with pytest.raises(CovariateError, match="non-negative"):
        replace(BASE, bmi=-1.0)
    with pytest.raises(CovariateError, match="group"):
        replace(BASE, diagnosis_group="E")
    with pytest.raises(CovariateError, match="belongs to group B"):
        replace(BASE, detailed_diagnosis="eisenmenger")


def test_from_mapping():
    row = {k: str(v) for k, v in BASE.__dict__.items()}
    row["diabetes"] = "yes"
    rec = CovariateRecord.from_mapping(row)
    assert rec.diabetes and rec.age == 40.0
    del row["pco2"]
    with pytest.raises(CovariateError, match="missing covariate 'pco2'"):
        CovariateRecord.from_mapping(row)


# ---------------------------------------------------------------- curves and scores


def test_auc_examples():
    assert auc_one_year(SurvivalCurve(np.ones(365))) == 365
    assert auc_one_year(SurvivalCurve(np.zeros(400))) == 0
    assert auc_one_year(SurvivalCurve((np.arange(500) < 100).astype(float))) == 100
    with pytest.raises(ValueError):
        auc_one_year(SurvivalCurve(np.ones(364)))


def test_curve_validation():
    with pytest.raises(ValueError):
        SurvivalCurve(np.array([1.0, 0.5, 0.6]))
    with pytest.raises(ValueError):
        SurvivalCurve(np.array([1.2, 1.0]))


def test_proportional_hazards_curve():
    base = np.linspace(1.0, 0.5, 400)
    assert np.allclose(curve_from_baseline(base, 0.7, 0.7).values, base)
    assert (curve_from_baseline(base, 1.0).values <= base).all()


def test_las_extremes():
    assert las_score(0, 365) == 100
    assert las_score(365, 0) == 0
    assert abs(las_score(365, 365) - 100 * 365 / 1095) <= 1e-9
    with pytest.raises(ValueError):
        las_score(-1, 10)


@given(st.floats(0, 364), st.floats(0, 364), st.floats(0.01, 1))
def test_las_monotone(w, p, h):
    assert las_score(w, p + h) > las_score(w, p)
    assert las_score(w + h, p) < las_score(w, p)
    assert 0 <= las_score(w, p) <= 100


def test_median_and_refined():
    flat = SurvivalCurve(np.ones(400))
    assert median_survival(flat) == (399.0, True)
    step = SurvivalCurve(np.where(np.arange(400) < 50, 1.0, 0.4))
    assert median_survival(step) == (50.0, False)
    pt = SurvivalCurve(np.where(np.arange(600) < 300, 1.0, 0.2))
    wl = SurvivalCurve(np.r_[0.8, np.zeros(99)])
    result = refined_las(wl, pt)
    assert result.score == 300 - 2 * 0.8 and not result.censored


# ---------------------------------------------------------------- discretization


def test_discretize():
    cuts = GridThresholds((1.0, 2.0, 3.0), (-1.0, 0.0, 1.0))
    assert discretize_state(0.5, -5.0, cuts) == (1, 1)
    assert discretize_state(9.0, 5.0, cuts) == (4, 4)
    assert discretize_state(2.0, 0.0, cuts) == (3, 3)


def test_thresholds_increasing():
    with pytest.raises(ValueError):
        GridThresholds((1.0, 1.0, 2.0), (0.0, 1.0, 2.0))


def test_quantile_thresholds():
    cuts = GridThresholds.from_quantiles(np.arange(100.0), np.arange(100.0))
    bins = [discretize_state(v, v, cuts)[0] for v in np.arange(100.0)]
    assert np.bincount(bins)[1:].tolist() == [25, 25, 25, 25]


@given(st.floats(-10, 10), st.floats(0, 5))
def test_discretize_monotone(x, dx):
    cuts = GridThresholds((-2.0, 0.0, 2.0), (-2.0, 0.0, 2.0))
    assert discretize_state(x + dx, x + dx, cuts) >= discretize_state(x, x, cuts)


# ---------------------------------------------------------------- model tables


def test_waitlist_curve_sums_to_expected_life(grid10):
    resid = expected_waitlist_life(grid10.transition, grid10.period_days)
    for s in (0, 4, 9):
        for i in (0, 7, 15):
            curve = waitlist_curve(grid10, s, i, 400)
            assert curve.values.sum() == pytest.approx(resid[s, i], rel=1e-12)


def test_original_score_ignores_waiting_time(grid10):
    table = model_score_table(grid10)
    pt = grid10.pt_life
    # same post-transplant life gives the same score in every period
    same = np.isclose(pt, pt[0])
    assert np.allclose(table[same], np.broadcast_to(table[0], table.shape)[same])


def test_refined_score_prefers_longer_pt_life(grid10):
    table = model_score_table(grid10, refined=True)
    # within a list bin, a better post-transplant bin scores higher
    for a in range(4):
        assert (np.diff(table[:, a * 4:(a + 1) * 4], axis=1) < 0).all()
