import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpmon.evolving import (EvolvingConfig, ShiftingHeavyHitters,
                            ThresholdMonitorEvolving, run_heavy_hitters)
from dpmon.harness import gen_example1
from dpmon.noise import NoiseSource
from dpmon.svt import Answer, MonitorConfig, Query, ThresholdMonitor

BASE = dict(epsilon=1.0, delta=1e-6, scale1=2.0, scale2=1.0)


def make_cfg(threshold, k, n, **over):
    params = BASE | over
    return EvolvingConfig(threshold=threshold, k=k, n_users=n, **params)


def zeros(count):
    return NoiseSource.scripted([0.0] * count)


def test_config_validation():
    with pytest.raises(ValueError):
        make_cfg(1.0, 1, 3, scale1=1.0, scale2=1.0)  # cap must exceed scale
    with pytest.raises(ValueError):
        make_cfg(1.0, 1, 0)
    with pytest.raises(ValueError):
        make_cfg(1.0, 0, 3)
    with pytest.raises(ValueError):
        make_cfg(1.0, 1, 3, scale2=-1.0)


def test_init_counters_zero():
    tme = ThresholdMonitorEvolving(make_cfg(1.0, 1, 3), zeros(0))
    assert list(tme.counters) == [0.0, 0.0, 0.0]
    assert tme.round_index == 1


def test_snapshot_length_mismatch():
    tme = ThresholdMonitorEvolving(make_cfg(1.0, 1, 3), zeros(2))
    with pytest.raises(ValueError):
        tme.step(["a", "a"], Query({"a": 1.0}))


def test_budget_exhaustion_over_constant_data():
    tme = ThresholdMonitorEvolving(make_cfg(3.0, 1, 5), zeros(4))
    snap = ["a"] * 5
    assert tme.step(snap, Query({"a": 1.0})) is Answer.TOP   # sum 5 >= 3
    assert list(tme.counters) == [1.0] * 5
    assert tme.step(snap, Query({"a": 1.0})) is Answer.BOT   # everyone excluded


def test_below_threshold_leaves_counters():
    tme = ThresholdMonitorEvolving(make_cfg(3.0, 1, 5), zeros(2))
    snap = ["a", "b", "c", "d", "e"]
    assert tme.step(snap, Query({"a": 1.0})) is Answer.BOT   # sum 1 < 3
    assert list(tme.counters) == [0.0] * 5


def test_user_excluded_after_k_contributions():
    tme = ThresholdMonitorEvolving(make_cfg(1.0, 2, 2), zeros(6))
    snap = ["a", "b"]
    q = Query({"a": 1.0})
    assert tme.step(snap, q) is Answer.TOP   # sum 1 >= 1, user 0 -> 1
    assert tme.step(snap, q) is Answer.TOP   # user 0 -> 2 == k
    assert tme.step(snap, q) is Answer.BOT   # user 0 excluded, sum 0


def test_top_charges_exhausted_users_too():
    tme = ThresholdMonitorEvolving(make_cfg(0.5, 1, 2), zeros(4))
    assert tme.step(["a", "b"], Query({"a": 1.0})) is Answer.TOP
    assert list(tme.counters) == [1.0, 0.0]
    # user 0 is excluded from the sum but still gets charged on this top
    assert tme.step(["a", "b"], Query({"a": 0.5, "b": 1.0})) is Answer.TOP
    assert list(tme.counters) == [1.5, 1.0]


def test_excluded_inputs_never_affect_answers():
    noise = [0.7, -0.3, 1.1, 0.2, -0.9, 0.4, 0.0, 0.8]
    streams = []
    for variant in ("y", "z"):  # user 0's input after exclusion differs
        streams.append([["x", "x", "c0"],
                        [variant, "c1", "c2"],
                        [variant, "c1", "c1"],
                        [variant, variant, "c2"]])
    queries = [Query({"x": 1.0}), Query({"y": 1.0, "z": 1.0}),
               Query({"c1": 1.0}), Query({"y": 1.0, "z": 1.0})]
    transcripts = []
    for snaps in streams:
        tme = ThresholdMonitorEvolving(make_cfg(2.0, 1, 3), NoiseSource.scripted(noise))
        transcripts.append([tme.step(s, q) for s, q in zip(snaps, queries)])
        assert tme.counters[0] >= 1.0  # user 0 really was charged at step 1
    assert transcripts[0] == transcripts[1]


# -- batched point queries vs literal stepping -------------------------------

def reference_point_answers(tme, snapshot, candidates):
    return [tme.step(snapshot, Query({c: 1.0})) for c in candidates]


@given(st.lists(st.sampled_from(["a", "b", "c", "d"]), min_size=1, max_size=6),
       st.integers(min_value=1, max_value=3),
       st.integers(min_value=-8, max_value=8).map(lambda i: i / 2.0),
       st.lists(st.integers(min_value=-12, max_value=12).map(lambda i: i / 4.0),
                min_size=16, max_size=16))
def test_batch_equals_sequential_point_queries(snapshot, k, threshold, noise):
    n = len(snapshot)
    candidates = sorted(set(snapshot))
    need = 2 * len(candidates)
    cfg = make_cfg(threshold, k, n)
    batched = ThresholdMonitorEvolving(cfg, NoiseSource.scripted(noise[:need]))
    literal = ThresholdMonitorEvolving(cfg, NoiseSource.scripted(noise[:need]))
    got = batched.step_point_batch(snapshot, candidates)
    expected = reference_point_answers(literal, snapshot, candidates)
    assert got == expected
    assert np.array_equal(batched.counters, literal.counters)


def test_batch_equals_sequential_across_steps():
    snapshots = [["a", "a", "b", "c"], ["b", "b", "b", "a"], ["c", "c", "a", "a"]]
    rng = np.random.Generator(np.random.PCG64(5))
    noise = list((rng.random(48) * 8 - 4).round(2))
    cfg = make_cfg(1.5, 2, 4)
    batched = ThresholdMonitorEvolving(cfg, NoiseSource.scripted(noise))
    literal = ThresholdMonitorEvolving(cfg, NoiseSource.scripted(noise))
    for snap in snapshots:
        cands = sorted(set(snap))
        assert batched.step_point_batch(snap, cands) == \
            reference_point_answers(literal, snap, cands)
    assert np.array_equal(batched.counters, literal.counters)


# -- shifting heavy hitters ---------------------------------------------------

def test_shh_reports_heavy_element():
    snap = ["a"] * 6 + ["b"] * 4
    solver = ShiftingHeavyHitters(make_cfg(5.0, 1, 10), zeros(4))
    report = solver.step(snap)
    assert report.step == 1
    assert report.identified == {"a"}


def test_shh_all_distinct_reports_nothing():
    snap = [f"u{i}" for i in range(10)]
    solver = ShiftingHeavyHitters(make_cfg(2.0, 1, 10), zeros(20))
    assert solver.step(snap).identified == frozenset()


def test_shh_absent_elements_never_queried():
    # scripted noise sized exactly for the present candidates: any extra
    # query would exhaust the script and raise
    snap = ["a", "a", "b"]
    solver = ShiftingHeavyHitters(make_cfg(1.0, 1, 3), zeros(4))
    report = solver.step(snap)
    assert "zzz" not in report.identified
    assert report.identified <= set(snap)


def test_run_heavy_hitters_empty_stream():
    assert run_heavy_hitters(make_cfg(1.0, 1, 3), [], zeros(0)) == []


def test_shh_tracks_the_current_heavy_element():
    snapshots = [["a", "a", "a", "u1"], ["b", "b", "b", "u2"]]
    reports = run_heavy_hitters(make_cfg(2.5, 4, 4), snapshots, zeros(12))
    assert reports[0].identified == {"a"}
    assert reports[1].identified == {"b"}


def test_shh_monte_carlo_recall_on_scaled_stream():
    # tiny explicit scales so the margin is far below the heavy weights
    stream = gen_example1(64, seed=404)
    threshold, margin = 2.0, 1.0
    cfg = make_cfg(threshold, 4, 64, scale1=0.01, scale2=0.004)
    good_runs = 0
    runs = 200
    for run in range(runs):
        reports = run_heavy_hitters(cfg, stream.snapshots, NoiseSource.seeded(77, run))
        ok = True
        for row, report in zip(stream.truth, reports):
            present = set(stream.snapshots[row.step - 1])
            if not report.identified <= present:
                ok = False  # reported an element nobody holds
            if row.weight >= threshold + margin and row.element not in report.identified:
                ok = False
        good_runs += ok
    assert good_runs / runs >= 0.99


# -- agreement with the static monitor ----------------------------------------

def static_evolving_pair(snapshot, k, threshold, epsilon=0.5, delta=1e-2):
    mon_cfg = MonitorConfig(epsilon, delta, threshold, k)
    ev_cfg = EvolvingConfig(epsilon=epsilon, delta=delta, threshold=threshold,
                            k=k, scale1=mon_cfg.cap, scale2=mon_cfg.v_scale,
                            n_users=len(snapshot))
    return mon_cfg, ev_cfg


@given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=6),
       st.lists(st.dictionaries(st.sampled_from(["a", "b", "c"]),
                                st.sampled_from([0.0, 1.0]), max_size=3).map(Query),
                min_size=1, max_size=8),
       st.integers(min_value=-8, max_value=16).map(lambda i: i / 2.0),
       st.integers(min_value=0, max_value=2 ** 20))
def test_matches_static_monitor_k1_binary_queries(snapshot, queries, threshold, seed):
    _matches_static_monitor(snapshot, queries, threshold, seed, k=1)


@given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=6),
       st.lists(st.dictionaries(st.sampled_from(["a", "b", "c"]),
                                st.integers(min_value=0, max_value=8).map(lambda i: i / 8.0),
                                max_size=3).map(Query),
                min_size=1, max_size=8),
       st.integers(min_value=-8, max_value=16).map(lambda i: i / 2.0),
       st.integers(min_value=0, max_value=2 ** 20))
def test_matches_static_monitor_unlimited_budget(snapshot, queries, threshold, seed):
    _matches_static_monitor(snapshot, queries, threshold, seed, k=10 ** 9)


def _matches_static_monitor(snapshot, queries, threshold, seed, k):
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = list((rng.integers(-16, 17, size=2 * len(queries)) / 4.0))
    mon_cfg, ev_cfg = static_evolving_pair(snapshot, k, threshold)
    monitor = ThresholdMonitor(snapshot, mon_cfg, NoiseSource.scripted(noise))
    evolving = ThresholdMonitorEvolving(ev_cfg, NoiseSource.scripted(noise))
    for q in queries:
        assert monitor.step(q) is evolving.step(snapshot, q)
