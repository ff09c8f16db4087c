import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noma_ee.channel import (
    MIN_DISTANCE_M, Ringed, Scenario, ScenarioConfig, UniformDisk, cluster_sizes, dbm_to_watt,
    draw_scenario, noise_power, pathloss_db, placement_from_dict, rayleigh_power, trial_rng,
    watt_to_dbm,
)


@pytest.mark.parametrize("d_km, expected", [(1.0, 128.0), (0.1, 93.0), (0.15, 99.164)])
def test_pathloss_values(d_km, expected):
    assert pathloss_db(d_km) == pytest.approx(expected, abs=1e-3)


def test_pathloss_rejects_non_positive_distance():
    with pytest.raises(ValueError):
        pathloss_db(0.0)
    with pytest.raises(ValueError):
        pathloss_db([0.1, -1.0])


@pytest.mark.parametrize("psd, bw, expected", [(-174.0, 180e3, 7.16e-16), (0.0, 1.0, 1e-3),
                                               (-174.0, 1.0, 3.98e-21)])
def test_noise_power_values(psd, bw, expected):
    assert noise_power(psd, bw) == pytest.approx(expected, rel=2e-3)


def test_dbm_watt_conversions():
    assert dbm_to_watt(0.0) == pytest.approx(1e-3)
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert dbm_to_watt(23.0) == pytest.approx(0.1995, rel=1e-3)
    with pytest.raises(ValueError):
        watt_to_dbm(0.0)


@given(st.floats(-60.0, 60.0))
def test_dbm_round_trip(x):
    assert watt_to_dbm(dbm_to_watt(x)) == pytest.approx(x, abs=1e-9)


@pytest.mark.parametrize("u, m, sizes", [(12, 4, [3, 3, 3, 3]), (10, 4, [3, 3, 2, 2]),
                                         (4, 4, [1, 1, 1, 1]), (7, 3, [3, 2, 2])])
def test_cluster_sizes(u, m, sizes):
    assert cluster_sizes(u, m).tolist() == sizes


def test_cluster_sizes_rejects_more_rbs_than_users():
    with pytest.raises(ValueError):
        cluster_sizes(3, 4)


def test_draw_is_deterministic():
    cfg = ScenarioConfig(seed=7)
    a, b = draw_scenario(cfg, trial=3), draw_scenario(cfg, trial=3)
    np.testing.assert_array_equal(a.gains, b.gains)
    np.testing.assert_array_equal(a.distances, b.distances)
    c = draw_scenario(cfg, trial=4)
    assert not np.array_equal(a.gains, c.gains)


def test_streams_are_independent():
    x = trial_rng(1, 2, 0).random(4)
    y = trial_rng(1, 2, 1).random(4)
    assert not np.allclose(x, y)


def test_uniform_disk_distances_in_range():
    d = UniformDisk(150.0).distances(10_000, trial_rng(0))
    assert d.min() >= MIN_DISTANCE_M and d.max() <= 150.0
    # area-uniform: P(d <= r) ~ r^2 / R^2
    assert np.mean(d <= 75.0) == pytest.approx(0.25, abs=0.02)


def test_ringed_placement_divides_users_evenly():
    d = Ringed((50, 100, 150)).distances(12, trial_rng(0))
    values, counts = np.unique(d, return_counts=True)
    assert values.tolist() == [50.0, 100.0, 150.0]
    assert counts.tolist() == [4, 4, 4]


def test_mean_gain_matches_path_loss():
    cfg = ScenarioConfig(num_users=4, num_rbs=2, placement=Ringed((100.0,)), seed=3)
    draws = np.concatenate([draw_scenario(cfg, t).gains.ravel() for t in range(2000)])
    expected = 10.0 ** (-pathloss_db(0.1) / 10.0)
    stderr = draws.std() / math.sqrt(draws.size)
    assert abs(draws.mean() - expected) < 4 * stderr


def test_rayleigh_power_has_unit_mean():
    x = rayleigh_power(trial_rng(5), 200_000)
    assert x.mean() == pytest.approx(1.0, abs=0.01)
    assert x.var() == pytest.approx(1.0, abs=0.03)  # exponential(1)


def test_config_round_trip_and_unknown_fields():
    cfg = ScenarioConfig(num_users=6, num_rbs=3, placement=Ringed((50.0, 100.0)), seed=11)
    assert ScenarioConfig.from_json(json.dumps(cfg.to_dict())) == cfg
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict({"num_user": 3})
    with pytest.raises(ValueError):
        placement_from_dict({"type": "hexagon"})


def test_scenario_validation_and_cluster_order():
    gains = np.array([[1e-10, 3e-10], [4e-10, 1e-10], [2e-10, 2e-10], [5e-11, 1e-9]])
    sc = Scenario(gains, [2, 2], 1.0, 0.1, 1e-3, 7e-16)
    inst, members = sc.cluster(1, [0, 3])
    assert members.tolist() == [3, 0]
    np.testing.assert_array_equal(inst.gains, [1e-9, 3e-10])
    assert inst.circuit_power == pytest.approx(2e-3)
    assert Scenario.from_json(sc.to_json()).gains.tolist() == gains.tolist()
    with pytest.raises(ValueError):
        Scenario(gains, [3, 1], 1.0, 0.1, 1e-3, 7e-16)
    with pytest.raises(ValueError):
        Scenario(-gains, [2, 2], 1.0, 0.1, 1e-3, 7e-16)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.integers(1, 10))
def test_drawn_scenarios_respect_sizes(u, m):
    if m > u:
        m = u
    sc = draw_scenario(ScenarioConfig(num_users=u, num_rbs=m, seed=u * 31 + m))
    assert sc.gains.shape == (u, m)
    assert sc.cluster_sizes.sum() == u
    assert np.all(sc.gains > 0)
