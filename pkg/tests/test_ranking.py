from dataclasses import replace

import numpy as np
import pytest

from organalloc.hjb import backward_pass, penalty_bracket
from organalloc.model import validate_model
from organalloc.ranking import (
    allocable_set,
    heatmap_grid,
    rank_pairs,
    verify_nesting,
)
from organalloc.synthetic import random_model


def constant_gain(T, k, stay=0.7):
    P = np.zeros((T, 2, 2))
    P[:, 0, 0] = 1
    P[:-1, 1] = [1 - stay, stay]
    P[-1, 1, 0] = 1
    return validate_model(
        {
            "n_states": 1,
            "horizon_T": T,
            "transition": P,
            "initial_dist": [1.0],
            "life_gain": np.full((T, 1), k),
            "pt_life": np.zeros((T, 1)),
            "organ_rate": 1,
            "patient_rate": 2,
        }
    )


def one_period(gains):
    n = len(gains)
    P = np.zeros((1, n + 1, n + 1))
    P[0, :, 0] = 1
    return validate_model(
        {
            "n_states": n,
            "horizon_T": 1,
            "transition": P,
            "initial_dist": np.full(n, 1 / n),
            "life_gain": [gains],
            "pt_life": [np.zeros(n)],
            "organ_rate": 1,
            "patient_rate": 2,
        }
    )


# ---------------------------------------------------------------- allocable sets


def test_empty_above_bracket(instances):
    for model in instances[:20]:
        assert len(allocable_set(model, penalty_bracket(model))) == 0


def test_zero_gain_empty_at_zero(tiny):
    flat = validate_model({**tiny.to_dict(), "life_gain": np.zeros((2, 2))})
    assert len(allocable_set(flat, 0.0)) == 0


def test_members_are_one_based(tiny):
    assert allocable_set(tiny, 0.0).members == {(0, 1), (0, 2), (1, 1), (1, 2)}


def test_nested_pairs(instances):
    rng = np.random.default_rng(5)
    for model in instances:
        c1, c2 = sorted(rng.uniform(0, penalty_bracket(model), 2), reverse=True)
        assert allocable_set(model, c1).issubset(allocable_set(model, c2))


def test_nesting_on_grids(instances):
    for model in instances[:50]:
        grid = np.linspace(penalty_bracket(model), 0.0, 20)
        assert verify_nesting(model, grid) == []


def test_nesting_single_penalty(tiny):
    assert verify_nesting(tiny, [5.0]) == []


def test_nesting_needs_descending_grid(tiny):
    with pytest.raises(ValueError):
        verify_nesting(tiny, [1.0, 2.0])


def test_corrupted_index_reported(tiny):
    def corrupted(model, c):
        sol = backward_pass(model, c)
        phi = sol.phi.copy()
        if c < 50:
            phi[0, 0] = -1.0  # drops out as the penalty falls
        return replace(sol, phi=phi)

    report = verify_nesting(tiny, [100.0, 60.0, 40.0, 0.0], solver=corrupted)
    assert len(report) == 1
    assert report[0].c_upper == 60.0 and report[0].c_lower == 40.0
    assert report[0].pairs == [(0, 1)]


# ---------------------------------------------------------------- ranks


def test_single_period_orders_by_gain():
    gains = [30.0, 250.0, -4.0, 120.0, 7.5]
    table = rank_pairs(one_period(gains))
    assert table.rank[0].tolist() == [3, 1, 5, 2, 4]
    assert [i for _, i in table.ordered_pairs()] == list(np.argsort(gains)[::-1])


def test_constant_gain_enters_together():
    table = rank_pairs(constant_gain(6, 80.0))
    assert (table.rank == 1).all()
    assert table.n_ranked == 1


@pytest.mark.parametrize("method", ["parallel", "sweep"])
def test_rank_follows_entry(instances, method):
    for model in instances[:40]:
        t = rank_pairs(model, method=method)
        ok = t.allocable_at_zero
        ce, rk = t.c_entry[ok], t.rank[ok]
        for a in range(ce.size):
            later = ce < ce[a] - t.alpha
            assert (rk[later] > rk[a]).all()
        assert sorted(set(rk.tolist())) == list(range(1, t.n_ranked + 1))


def test_never_allocable_ranked_last():
    model = one_period([50.0, -10.0, -3.0, 20.0])
    t = rank_pairs(model)
    assert t.rank[0].tolist() == [1, 4, 3, 2]
    assert np.isnan(t.c_entry[0, 1]) and np.isnan(t.c_entry[0, 2])


def test_methods_agree(instances):
    for model in instances:
        a = rank_pairs(model, method="parallel")
        b = rank_pairs(model, method="sweep")
        assert np.array_equal(a.rank, b.rank)


def test_methods_agree_on_grid(grid10):
    a = rank_pairs(grid10, method="parallel")
    b = rank_pairs(grid10, method="sweep")
    assert np.array_equal(a.rank, b.rank)


def test_resolution_refinement(instances):
    for model in instances[:40]:
        coarse = rank_pairs(model, alpha=1.0).rank.ravel()
        fine = rank_pairs(model, alpha=0.5).rank.ravel()
        before = coarse[:, None] < coarse[None, :]
        assert (fine[:, None] < fine[None, :])[before].all()


def test_deterministic(grid10):
    a, b = rank_pairs(grid10), rank_pairs(grid10)
    assert np.array_equal(a.rank, b.rank)
    assert np.array_equal(a.c_entry, b.c_entry, equal_nan=True)


def test_step_budget_exhausted():
    gains = [40.0, 30.0, 20.0, 10.0]
    t = rank_pairs(one_period(gains), n_steps=2)
    assert t.n_ranked == 2
    assert t.rank[0].tolist() == [1, 2, 3, 4]
    assert np.isnan(t.c_entry[0, 2:]).all()


def test_bad_arguments(tiny):
    with pytest.raises(ValueError):
        rank_pairs(tiny, alpha=0.0)
    with pytest.raises(ValueError):
        rank_pairs(tiny, n_steps=0)
    with pytest.raises(ValueError):
        rank_pairs(tiny, method="other")


def test_position_is_permutation(grid10):
    pos = rank_pairs(grid10).position()
    assert sorted(pos.ravel().tolist()) == list(range(pos.size))


def test_ties_broken_by_index_then_wait():
    t = rank_pairs(constant_gain(4, 80.0))
    # equal rank and equal index: longer wait first
    assert t.ordered_pairs() == [(3, 0), (2, 0), (1, 0), (0, 0)]


# ---------------------------------------------------------------- heatmap


def test_heatmap_layout(grid10):
    t = rank_pairs(grid10)
    grid = heatmap_grid(t, grid10.grid_shape)
    assert grid["layout"] == ["period", "S_wl", "S_mu"]
    assert grid["shape"] == [10, 4, 4]
    cube = np.array(grid["rank"])
    # state k = a * 4 + b sits at S_wl bin a, S_mu bin b
    assert cube[3, 2, 1] == t.rank[3, 2 * 4 + 1]


def test_heatmap_shape_mismatch(grid10):
    with pytest.raises(ValueError):
        heatmap_grid(rank_pairs(grid10), (3, 5))


def test_grid_ranking_structure(grid100):
    t = rank_pairs(grid100)
    assert t.rank.shape == (100, 16)
    assert verify_nesting(grid100, np.linspace(penalty_bracket(grid100), 0, 20)) == []
    # healthiest post-transplant bin beats the sickest in the same list bin
    assert (t.rank[:, 0] < t.rank[:, 3]).all()
