import numpy as np
import pytest
from pytest import raises
from .closed_testing import (BoundSeries, BoundTracker, DiscoverySet, bound_series,
                             brute_force_bound, brute_force_running_max_series, multi_r_bounds,
                             p_value_closed_testing_bound, shortcut_bound)
from .eprocess import EProcessFamily, EValueMatrix
from .errors import ConfigError, InputError, SizeError
from .test_fixtures import WORKED_ALPHA, WORKED_E, WORKED_R, rng


def R(*indices, label="R"):
    return DiscoverySet(indices=indices, label=label)


def test_discovery_set_invariants():
    with raises(InputError):
        R()
    with raises(InputError):
        R(0, 1)
    with raises(InputError):
        R(2, 1)
    with raises(InputError):
        R(1, 1)
    s = R(1, 3, 4)
    assert s.size == 3
    assert s.mask(5).tolist() == [True, False, True, True, False]
    assert s.bits() == 0b1101
    with raises(InputError):
        s.check_range(3)


def test_discovery_set_parse():
    s = DiscoverySet.parse("top hits: 1,2,5-9")
    assert s.label == "top hits"
    assert s.indices == (1, 2, 5, 6, 7, 8, 9)
    assert DiscoverySet.parse(s.to_text()) == s
    assert DiscoverySet.parse("x:4,1").indices == (1, 4)
    for bad in ("no colon", "a:1,,2", "a:3-1", "a:1,1", "a:x", ":1"):
        with raises(InputError):
            DiscoverySet.parse(bad)


def test_shortcut_worked_instance():
    c, trace = shortcut_bound(WORKED_E, WORKED_R, WORKED_ALPHA)
    assert c == 1
    assert trace.k_star == 1
    assert trace.rhs == pytest.approx(4.5)
    assert trace.h_max == c
    assert 1 - c / WORKED_R.size == 0.5
    assert brute_force_bound(WORKED_E, WORKED_R, WORKED_ALPHA) == 1


def test_shortcut_witness_with_small_outside_value():
    e = [6.0, 2.0, 0.5, 10.0]
    assert shortcut_bound(e, R(1, 2), 0.2)[0] == 2
    assert brute_force_bound(e, R(1, 2), 0.2) == 2


def test_shortcut_all_zero_is_vacuous():
    c, trace = shortcut_bound(np.zeros(5), R(2, 3, 5), 0.05)
    assert c == 3
    assert trace.k_star == 2


def test_single_hypothesis_boundary():
    assert brute_force_bound([5.0], R(1), 0.2) == 0
    assert brute_force_bound([4.9], R(1), 0.2) == 1
    assert shortcut_bound([5.0], R(1), 0.2)[0] == 0
    assert shortcut_bound([4.9], R(1), 0.2)[0] == 1


def test_shortcut_errors():
    with raises(InputError):
        shortcut_bound([1.0, 2.0], R(3), 0.2)
    with raises(InputError):
        shortcut_bound([1.0, -2.0], R(1), 0.2)
    with raises(ConfigError):
        shortcut_bound([1.0, 2.0], R(1), 1.5)


def test_brute_force_size_guard():
    with raises(SizeError):
        brute_force_bound(np.ones(21), R(1), 0.2)


def test_shortcut_equals_brute_force(rng):
    "random instances, m <= 12, e log-uniform on [e^-3, e^5]"
    for _ in range(1000):
        m = int(rng.integers(1, 13))
        e = np.exp(rng.uniform(-3, 5, size=m))
        size = int(rng.integers(1, m + 1))
        s = DiscoverySet(indices=tuple(np.sort(rng.choice(m, size, replace=False)) + 1), label="R")
        alpha = float(rng.choice([0.05, 0.2]))
        assert shortcut_bound(e, s, alpha)[0] == brute_force_bound(e, s, alpha)


def test_k_star_joins_values_below_threshold(rng):
    for _ in range(200):
        e = np.exp(rng.uniform(-3, 5, size=10))
        _, trace = shortcut_bound(e, R(1, 2, 3), 0.2)
        assert trace.k_star == int(np.sum(e[3:] < 5.0))


def test_bound_nonincreasing_in_each_evalue(rng):
    for _ in range(200):
        e = np.exp(rng.uniform(-3, 5, size=8))
        s = R(1, 2, 4, 7)
        base = shortcut_bound(e, s, 0.2)[0]
        i = int(rng.integers(0, 8))
        raised = e.copy()
        raised[i] *= 1.0 + rng.uniform(0.1, 3.0)
        assert shortcut_bound(raised, s, 0.2)[0] <= base


def test_rejections_are_scale_homogeneous(rng):
    "multiplying e by 1/k and alpha by k keeps every decision"
    for _ in range(100):
        e = np.exp(rng.uniform(-3, 5, size=6))
        s = R(1, 2, 3)
        assert brute_force_bound(e, s, 0.05) == brute_force_bound(e / 4.0, s, 0.2)


def test_p_value_closed_testing():
    assert p_value_closed_testing_bound([1.0, 1.0, 1.0], R(1, 3), 0.2) == 2
    assert p_value_closed_testing_bound([0.01, 1.0], R(1, 2), 0.2) == 1
    assert p_value_closed_testing_bound([0.2], R(1), 0.2) == 0
    with raises(InputError):
        p_value_closed_testing_bound([0.0, 0.5], R(1), 0.2)
    with raises(SizeError):
        p_value_closed_testing_bound(np.full(21, 0.5), R(1), 0.2)


def test_bound_series_running_minimum():
    values = np.array([[1, 1, 1, 1], [20, 8, 0.5, 10], [6, 2, 0.5, 10]], dtype=float)
    series = bound_series(EValueMatrix(values), WORKED_R, 0.2)
    assert series.c_inst.tolist() == [2, 1, 2]
    assert series.c_ard.tolist() == [2, 1, 1]
    assert series.tdp_inst.tolist() == [0.0, 0.5, 0.0]
    assert series.tdp_ard.tolist() == [0.0, 0.5, 0.5]
    assert series.reported_tdp.tolist() == [0.0, 0.5, 0.5]
    assert BoundSeries(label="x", size=3, c_inst=np.array([3, 1, 2]),
                       c_ard=np.minimum.accumulate([3, 1, 2]), ard=False).reported_c.tolist() == [3, 1, 2]


def test_bound_series_all_ones():
    series = bound_series(EValueMatrix.ones(5, 7), R(1, 4, 5), 0.1)
    assert np.all(series.c_inst == 3)
    assert np.all(series.tdp_ard == 0.0)


def test_bound_series_matches_shortcut_rowwise(rng):
    values = np.vstack([np.ones(9), np.exp(rng.uniform(-3, 5, size=(30, 9)))])
    s = R(2, 3, 5, 8)
    series = bound_series(EValueMatrix(values), s, 0.05)
    for n, row in enumerate(values):
        assert series.c_inst[n] == shortcut_bound(row, s, 0.05)[0]
    assert np.all(np.diff(series.tdp_ard) >= 0)


def test_ard_on_simulated_alternative(rng):
    ys = rng.normal(0.6, 1.0, size=(60, 6))
    matrix = EValueMatrix.from_observations(ys, EProcessFamily(kind="gaussian_lr", delta=0.5))
    series = bound_series(matrix, R(1, 2, 3, 4), 0.2)
    assert np.all(np.diff(series.reported_tdp) >= 0)
    assert np.all((series.c_inst >= 0) & (series.c_inst <= 4))


def test_multi_r_bounds(rng):
    values = np.vstack([np.ones(6), np.exp(rng.uniform(-2, 4, size=(20, 6)))])
    matrix = EValueMatrix(values)
    small, big = R(1, 2, label="small"), R(1, 2, 3, 5, label="big")
    out = multi_r_bounds(matrix, [small, big, R(1, 2, label="copy")], 0.2)
    assert list(out) == ["small", "big", "copy"]
    assert np.array_equal(out["small"].c_inst, out["copy"].c_inst)
    assert np.all(out["small"].c_inst <= out["big"].c_inst)
    with raises(InputError):
        multi_r_bounds(matrix, [small, R(3, label="small")], 0.2)
    with raises(InputError):
        multi_r_bounds(matrix, [], 0.2)


def test_running_max_bound_is_tighter(rng):
    for _ in range(20):
        values = np.vstack([np.ones(7), np.exp(rng.uniform(-3, 3, size=(15, 7)))])
        matrix = EValueMatrix(values)
        s = R(1, 3, 4, 6)
        running_max = brute_force_running_max_series(matrix, s, 0.2)
        running_min = bound_series(matrix, s, 0.2).c_ard
        assert np.all(running_max <= running_min)
        assert np.all(np.diff(running_max) <= 0)
    with raises(SizeError):
        brute_force_running_max_series(EValueMatrix.ones(13), R(1), 0.2)


def test_tracker_matches_bound_series(rng):
    values = np.vstack([np.ones(5), np.exp(rng.uniform(-3, 4, size=(12, 5)))])
    matrix = EValueMatrix(values)
    sets = [R(1, 2, label="a"), R(2, 3, 4, 5, label="b")]
    rows = list(BoundTracker(sets, 0.2, 5).run(matrix))
    expected = multi_r_bounds(matrix, sets, 0.2)
    for s in sets:
        mine = [r for r in rows if r.set_label == s.label]
        assert mine == expected[s.label].rows()


def test_tracker_resumes_with_running_minimum(rng):
    values = np.vstack([np.ones(4), np.exp(rng.uniform(-3, 4, size=(10, 4)))])
    matrix = EValueMatrix(values)
    sets = [R(1, 2, label="a")]
    full = list(BoundTracker(sets, 0.2, 4).run(matrix))
    first = BoundTracker(sets, 0.2, 4)
    head = [r for n in range(6) for r in first.step(n, values[n])]
    second = BoundTracker(sets, 0.2, 4, running_min=dict(first.running_min))
    tail = list(second.run(matrix, start=6))
    assert head + tail == full
    with raises(InputError):
        BoundTracker(sets, 0.2, 4, running_min={"zzz": 1})
