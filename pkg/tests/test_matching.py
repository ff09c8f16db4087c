import csv
import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import NOISE
from noma_ee.channel import Scenario, ScenarioConfig, draw_scenario
from noma_ee.cluster import maximize_ee
from noma_ee.matching import (
    SCHEMES, Matching, SystemEvaluator, dc_match, greedy_init, is_swap_stable, mwm_gain,
    oma_mwm, random_match, run_scheme, swap_match, system_ee,
)
from noma_ee.oma import oma_maximize_ee
from noma_ee.oracle import count_matchings, exhaustive_matching, iter_matchings


def scenario(gains, sizes, min_rate=1.5, max_power=0.1):
    return Scenario(np.asarray(gains, float), sizes, min_rate, max_power, 1e-3, NOISE)


def small_config(u, m, seed=0):
    return ScenarioConfig(num_users=u, num_rbs=m, seed=seed)


# ---------------------------------------------------------------------------
# Matching type
# ---------------------------------------------------------------------------

def test_matching_inverse_and_swap():
    mt = Matching([0, 1, 0, 1], 2)
    assert mt.inverse == ((0, 2), (1, 3))
    assert mt.swapped(0, 1).inverse == ((1, 2), (0, 3))
    mt.check([2, 2])
    with pytest.raises(ValueError):
        mt.check([3, 1])
    with pytest.raises(ValueError):
        Matching([0, 2], 2)


def test_matching_from_slots():
    mt = Matching.from_slots([3, 0, 2, 1], [2, 2])
    assert mt.assignment.tolist() == [0, 1, 1, 0]


# ---------------------------------------------------------------------------
# greedy initial assignment
# ---------------------------------------------------------------------------

def test_greedy_one_user_per_rb_takes_best_gains():
    g = np.array([[5.0, 9.0, 1.0], [8.0, 7.0, 2.0], [3.0, 4.0, 6.0]]) * 1e-10
    assert greedy_init(scenario(g, [1, 1, 1])).assignment.tolist() == [1, 0, 2]


def test_greedy_single_rb_takes_everyone():
    assert greedy_init(scenario([[2e-10], [1e-10]], [2])).assignment.tolist() == [0, 0]


def test_greedy_gives_dominant_user_its_rb_first():
    # user 0 is far best on RB 1; the other users prefer RB 0
    g = np.array([[1e-11, 9e-9], [5e-10, 1e-10], [4e-10, 2e-10], [3e-10, 1e-10]])
    mt = greedy_init(scenario(g, [2, 2]))
    assert mt.assignment[0] == 1
    mt.check([2, 2])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(1, 8), st.integers(0, 1000))
def test_greedy_respects_cluster_sizes(u, m, seed):
    m = min(m, u)
    sc = draw_scenario(small_config(u, m, seed))
    greedy_init(sc).check(sc.cluster_sizes)


# ---------------------------------------------------------------------------
# maximum weight matching and random matching
# ---------------------------------------------------------------------------

def test_mwm_diagonal_dominant_is_identity():
    g = np.full((4, 4), 1e-11) + np.diag([1e-9, 2e-9, 3e-9, 4e-9])
    assert mwm_gain(scenario(g, [1, 1, 1, 1])).assignment.tolist() == [0, 1, 2, 3]


def test_mwm_attains_enumerated_maximum():
    sc = draw_scenario(small_config(4, 2, seed=5))
    best = max(sc.gains[np.arange(4), a].sum() for a in iter_matchings(sc.cluster_sizes))
    a = mwm_gain(sc).assignment
    assert sc.gains[np.arange(4), a].sum() == pytest.approx(best, rel=1e-12)


def test_mwm_is_invariant_to_user_order():
    sc = draw_scenario(small_config(6, 3, seed=2))
    perm = np.array([3, 0, 5, 1, 4, 2])
    permuted = Scenario(sc.gains[perm], sc.cluster_sizes, 1.5, 0.1, 1e-3, NOISE)
    total = lambda s: s.gains[np.arange(6), mwm_gain(s).assignment].sum()
    assert total(permuted) == pytest.approx(total(sc), rel=1e-12)


def test_random_match_is_reproducible_and_valid():
    sc = draw_scenario(small_config(12, 4))
    a, b = random_match(sc, 3, 7), random_match(sc, 3, 7)
    np.testing.assert_array_equal(a.assignment, b.assignment)
    a.check(sc.cluster_sizes)
    assert random_match(scenario([[1e-10]], [1]), 0).assignment.tolist() == [0]


def test_random_match_is_uniform_over_matchings():
    sc = draw_scenario(small_config(4, 2))
    keys = {tuple(a): i for i, a in enumerate(iter_matchings(sc.cluster_sizes))}
    draws = 10_000
    counts = np.zeros(len(keys))
    for t in range(draws):
        counts[keys[tuple(random_match(sc, 11, t).assignment)]] += 1
    expected = draws / len(keys)
    sigma = math.sqrt(expected * (1 - 1 / len(keys)))
    assert np.all(np.abs(counts - expected) < 3.5 * sigma)
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 20.5  # 99.9% quantile with 5 degrees of freedom


# ---------------------------------------------------------------------------
# system evaluation
# ---------------------------------------------------------------------------

def test_single_cluster_system_equals_cluster_solver():
    sc = scenario([[3e-10], [1e-10]], [2])
    inst, _ = sc.cluster(0, [0, 1])
    assert system_ee(sc, Matching([0, 0], 1)).system_ee == maximize_ee(inst).ee


def test_system_ee_is_sum_of_independent_clusters():
    sc = draw_scenario(small_config(4, 2, seed=9))
    mt = greedy_init(sc)
    expected = 0.0
    for m, users in enumerate(mt.inverse):
        sol = maximize_ee(sc.cluster(m, users)[0])
        expected += sol.ee if sol.feasible else 0.0
    assert system_ee(sc, mt).system_ee == pytest.approx(expected, rel=1e-14)


def test_all_infeasible_clusters_give_zero():
    sc = scenario(np.full((4, 2), 1e-13), [2, 2], min_rate=5.0, max_power=1e-6)
    sol = system_ee(sc, Matching([0, 0, 1, 1], 2))
    assert sol.system_ee == 0.0
    assert sol.infeasible_rbs == [0, 1]


def test_evaluator_caches_clusters():
    sc = draw_scenario(small_config(4, 2))
    ev = SystemEvaluator(sc)
    ev.cluster_ee(0, [0, 1])
    ev.cluster_ee(0, [1, 0])
    assert ev.solves == 1


def test_solution_exports():
    sol = swap_match(draw_scenario(small_config(6, 2, seed=4)))
    rows = list(csv.reader(io.StringIO(sol.to_csv())))
    assert rows[0][:2] == ["row", "rb"]
    assert rows[-1][0] == "summary" and float(rows[-1][4]) == pytest.approx(sol.system_ee)
    trace = list(csv.reader(io.StringIO(sol.trace_csv())))
    assert len(trace) == sol.swap_count + 1
    assert sol.user_powers().shape == (6,)


# ---------------------------------------------------------------------------
# swap matching
# ---------------------------------------------------------------------------

def test_no_swap_when_greedy_is_already_stable():
    # each user is strongest on its own RB by orders of magnitude
    g = np.array([[1e-9, 1e-13], [1e-13, 1e-9]])
    sol = swap_match(scenario(g, [1, 1]))
    assert sol.swap_count == 0
    assert sol.matching.assignment.tolist() == greedy_init(scenario(g, [1, 1])).assignment.tolist()


def test_crossed_start_is_fixed_by_one_swap():
    g = np.array([[1e-9, 1e-11], [1e-11, 1e-9]])
    sc = scenario(g, [1, 1], min_rate=0.5)
    crossed = Matching([1, 0], 2)
    sol = swap_match(sc, initial=crossed)
    assert sol.swap_count == 1
    assert sol.matching.assignment.tolist() == [0, 1]
    best = max(system_ee(sc, Matching(a, 2)).system_ee for a in iter_matchings([1, 1]))
    assert sol.system_ee == pytest.approx(best)


@pytest.mark.parametrize("seed", range(8))
def test_swap_trace_strictly_increases_and_ends_stable(seed):
    sc = draw_scenario(small_config(12, 4, seed))
    sol = swap_match(sc)
    assert sol.diagnostics["converged"]
    for r in sol.swap_trace:
        assert r.ee_after > r.ee_before
    for prev, nxt in zip(sol.swap_trace, sol.swap_trace[1:]):
        assert nxt.ee_before == prev.ee_after
    assert sol.swap_count < 60
    assert is_swap_stable(sc, sol)
    sol.matching.check(sc.cluster_sizes)
    assert sol.system_ee >= system_ee(sc, greedy_init(sc)).system_ee


def test_swap_with_oma_allocation():
    sc = draw_scenario(small_config(8, 4, seed=1))
    sol = swap_match(sc, "oma")
    assert is_swap_stable(sc, sol, oma_maximize_ee)


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def test_oma_mwm_one_user_per_rb_converges_fast():
    sc = draw_scenario(small_config(4, 4, seed=3))
    assert oma_mwm(sc).diagnostics["alternations"] <= 2


@pytest.mark.parametrize("seed", range(5))
def test_oma_mwm_keeps_best_alternation(seed):
    sc = draw_scenario(small_config(4, 2, seed))
    sol = oma_mwm(sc)
    hist = sol.diagnostics["ee_history"]
    assert sol.system_ee == max(hist)
    rand = system_ee(sc, random_match(sc, seed), oma_maximize_ee).system_ee
    best = exhaustive_matching(sc, oma_maximize_ee).system_ee
    assert rand <= best and sol.system_ee <= best + 1e-12


def test_dc_one_user_per_rb_distinct_favourites():
    g = np.array([[9e-10, 1e-10], [1e-10, 9e-10]])
    sol = dc_match(scenario(g, [1, 1]))
    assert sol.matching.assignment.tolist() == [0, 1]
    assert sol.diagnostics["rejections"] == 0


def test_dc_conflict_resolved_by_cluster_ee():
    # both prefer RB 0; RB 0 keeps the user with the better cluster EE
    g = np.array([[9e-10, 1e-10], [8e-10, 5e-10]])
    sc = scenario(g, [1, 1])
    sol = dc_match(sc)
    ev = SystemEvaluator(sc)
    keep = 0 if ev.cluster_ee(0, [0]) >= ev.cluster_ee(0, [1]) else 1
    assert sol.matching.assignment[keep] == 0
    assert sol.diagnostics["rejections"] == 1


def test_dc_single_rb_accepts_both():
    sol = dc_match(scenario([[2e-10], [1e-10]], [2]))
    assert sol.matching.assignment.tolist() == [0, 0]
    assert sol.diagnostics["rejections"] == 0 and not sol.diagnostics["forced_users"]


@pytest.mark.parametrize("scheme", SCHEMES)
def test_every_scheme_produces_valid_matching(scheme):
    sc = draw_scenario(small_config(10, 4, seed=6))
    sol = run_scheme(scheme, sc, seed=6)
    sol.matching.check(sc.cluster_sizes)
    assert sol.system_ee >= 0.0


def test_unknown_scheme():
    with pytest.raises(ValueError):
        run_scheme("HMA-best", draw_scenario(small_config(4, 2)))


def test_count_and_enumeration_agree():
    for sizes in ([2, 2], [3, 2, 2], [1, 1, 1]):
        listed = list(iter_matchings(sizes))
        assert len(listed) == count_matchings(sizes)
        assert len({tuple(a) for a in listed}) == len(listed)
        for a in listed:
            assert np.bincount(a, minlength=len(sizes)).tolist() == sizes


def test_exhaustive_dominates_heuristics():
    for seed in range(4):
        sc = draw_scenario(small_config(4, 2, seed))
        best = exhaustive_matching(sc).system_ee
        for scheme in ("HMA-prop", "HMA-MWM", "HMA-DC", "HMA-rand"):
            assert run_scheme(scheme, sc, seed).system_ee <= best * (1 + 1e-12)


def test_exhaustive_all_permutations_when_one_user_per_rb():
    sc = draw_scenario(small_config(4, 4, seed=8))
    sol = exhaustive_matching(sc)
    assert sol.diagnostics["matchings_enumerated"] == math.factorial(4)
    perms = [system_ee(sc, Matching(list(p), 4)).system_ee for p in itertools.permutations(range(4))]
    assert sol.system_ee == pytest.approx(max(perms))
    assert sol.system_ee >= system_ee(sc, mwm_gain(sc)).system_ee
