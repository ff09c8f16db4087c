import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import NOISE, random_cluster
from noma_ee.cluster import ClusterInstance, maximize_ee, per_user_rates, sum_rate
from noma_ee.oma import _oma_inner, oma_maximize_ee, oma_min_powers, oma_rates
from noma_ee.oracle import golden_section_max

seeds = st.integers(0, 2**32 - 1)


def test_single_user_rate_matches_noma(rng):
    inst = random_cluster(rng, 1)
    p = inst.max_powers * 0.3
    np.testing.assert_allclose(oma_rates(inst, p), per_user_rates(inst, p))


def test_rates_by_hand():
    inst = ClusterInstance([1.0, 1.0], 0.0, 10.0, 0.0, 1.0)
    np.testing.assert_array_equal(oma_rates(inst, [0.0, 0.0]), [0.0, 0.0])
    np.testing.assert_allclose(oma_rates(inst, [1.0, 1.0]), [0.5 * math.log2(3.0)] * 2)


def test_min_powers_by_hand():
    inst = ClusterInstance([1.0, 1.0], 1.0, 10.0, 0.0, 1.0)
    pmin, ok = oma_min_powers(inst)
    np.testing.assert_allclose(pmin, [1.5, 1.5])
    assert ok
    pmin, _ = oma_min_powers(ClusterInstance([1.0, 1.0], 0.0, 10.0, 0.0, 1.0))
    np.testing.assert_array_equal(pmin, [0.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), seeds)
def test_min_powers_meet_targets(n, seed):
    inst = random_cluster(np.random.default_rng(seed), n, max_power=1e6)
    pmin, _ = oma_min_powers(inst)
    np.testing.assert_allclose(oma_rates(inst, pmin), inst.min_rates, rtol=1e-9, atol=1e-12)


def test_infeasible_cluster():
    inst = ClusterInstance([1.0, 1.0], 3.0, [100.0, 1.0], 0.0, 1.0)
    sol = oma_maximize_ee(inst)
    assert not sol.feasible and sol.ee == 0.0
    assert sol.diagnostics["first_violation"] == 1


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_single_user_matches_noma_solver(seed):
    inst = random_cluster(np.random.default_rng(seed), 1)
    assert oma_maximize_ee(inst).ee == pytest.approx(maximize_ee(inst).ee, rel=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), seeds, st.floats(1.0, 1e6))
def test_inner_step_matches_scalar_oracle(n, seed, beta):
    inst = random_cluster(np.random.default_rng(seed), n)
    pmin, ok = oma_min_powers(inst)
    assume(ok)
    p = _oma_inner(inst, beta, pmin)
    for l in range(n):
        f = lambda x: math.log2(1 + n * x * inst.gains[l] / NOISE) / n - beta * x
        x = golden_section_max(f, pmin[l], inst.max_powers[l])
        assert f(p[l]) >= f(x) - 1e-9 * max(1.0, abs(f(x)))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 4), seeds)
def test_optimum_matches_per_user_oracle(n, seed):
    # at the optimum beta every user solves its own scalar problem
    inst = random_cluster(np.random.default_rng(seed), n)
    pmin, ok = oma_min_powers(inst)
    assume(ok)
    sol = oma_maximize_ee(inst)
    beta = sol.ee
    for l in range(n):
        f = lambda x: math.log2(1 + n * x * inst.gains[l] / NOISE) / n - beta * x
        x = golden_section_max(f, pmin[l], inst.max_powers[l])
        assert f(sol.powers[l]) == pytest.approx(f(x), rel=1e-6, abs=1e-9)
    assert np.all(np.diff(sol.diagnostics["betas"]) > 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 3), seeds)
def test_noma_dominates_without_rate_targets(n, seed):
    rng = np.random.default_rng(seed)
    inst = random_cluster(rng, n, min_rate=0.0)
    p = rng.uniform(0.0, 1.0, n) * inst.max_powers
    assert sum_rate(inst, p) >= oma_rates(inst, p).sum() - 1e-12
    assert maximize_ee(inst).ee >= oma_maximize_ee(inst).ee * (1 - 1e-9)
