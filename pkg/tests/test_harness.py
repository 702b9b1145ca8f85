import json
import math
from collections import Counter

import pytest

from dpmon.harness import (CSV_COLUMNS, ExperimentConfig, PrivacyBudget,
                           StreamSpec, calibrate_restart, example1_tier_sizes,
                           gen_example1, kstar_counted, read_database,
                           read_queries, read_stream, resolve_kstar,
                           run_baseline_restart, run_experiment, write_queries,
                           write_stream)
from dpmon.noise import NoiseSource
from dpmon.privacy_calc import advanced_composition, tau
from dpmon.svt import AboveThreshold, Answer, Query


def test_tier_sizes_at_desk_scale():
    assert example1_tier_sizes(4096) == (12, 8, 16)
    assert example1_tier_sizes(256) == (8, 4, 6)
    with pytest.raises(ValueError):
        example1_tier_sizes(8)  # collides: sizes (3, 2, 2)


def test_example1_structure_desk_scale():
    stream = gen_example1(4096, seed=1)
    by_tier = Counter(t.tier for t in stream.truth)
    assert by_tier == {"A": 342, "B": 512, "C": 256}
    assert stream.steps == 1110
    assert all(len(s) == 4096 for s in stream.snapshots[:5])
    assert kstar_counted(stream.truth, 4096) == 3


def test_example1_partitions_and_weights():
    stream = gen_example1(256, seed=9)
    sizes = dict(zip("ABC", example1_tier_sizes(256)))
    for tier in "ABC":
        rows = [t for t in stream.truth if t.tier == tier]
        members = [j for t in rows for j in t.members]
        assert sorted(members) == list(range(256))  # partition of the users
        size = sizes[tier]
        weights = Counter(t.weight for t in rows)
        remainder = 256 % size
        expected = Counter({size: 256 // size})
        if remainder:
            expected[remainder] += 1
        assert weights == expected
    assert kstar_counted(stream.truth, 256) == 3


def test_example1_heavy_element_placed_and_unique():
    stream = gen_example1(64, seed=3)
    seen = set()
    for row in stream.truth:
        snap = stream.snapshots[row.step - 1]
        counts = Counter(snap)
        assert counts[row.element] == row.weight
        assert row.element not in seen
        seen.add(row.element)
        # everyone else holds a singleton filler
        del counts[row.element]
        assert set(counts.values()) == {1} or not counts


def test_example1_domain_size_matches_distinct_count():
    stream = gen_example1(64, seed=3)
    distinct = {x for snap in stream.snapshots for x in snap}
    assert stream.domain_size == len(distinct)


def test_stream_roundtrip(tmp_path):
    stream = gen_example1(64, seed=5)
    path = tmp_path / "stream.jsonl"
    write_stream(path, stream.snapshots)
    assert read_stream(path) == stream.snapshots


def test_queries_and_db_files(tmp_path):
    queries = [Query({"a": 1.0, "b": 0.25}), Query({})]
    qpath = tmp_path / "queries.jsonl"
    write_queries(qpath, queries)
    assert [q.weights for q in read_queries(qpath)] == [q.weights for q in queries]
    dbpath = tmp_path / "db.json"
    dbpath.write_text(json.dumps({"a": 3, "b": 1}), encoding="utf-8")
    assert read_database(dbpath) == Counter({"a": 3, "b": 1})


# -- restart baseline ---------------------------------------------------------

def test_calibrate_restart_single_instance_gets_everything():
    assert calibrate_restart(PrivacyBudget(0.7, 1e-6), 1) == 0.7


def test_calibrate_restart_composes_into_target():
    target = PrivacyBudget(1.0, 1e-6)
    for c in (2, 16, 256):
        eps = calibrate_restart(target, c)
        assert 0.0 < eps < target.epsilon
        assert advanced_composition(eps, 0.0, c, target.delta).epsilon <= target.epsilon
    assert calibrate_restart(target, 256) < calibrate_restart(target, 16)


def test_baseline_zero_queries():
    result = run_baseline_restart({"a": 1}, PrivacyBudget(1.0, 1e-6), 5.0, [],
                                  2, NoiseSource.scripted([0.0]))
    assert result.transcript == []
    assert result.ledger == []
    assert result.epsilon_spent == 0.0


def test_baseline_single_restart_is_plain_above_threshold():
    queries = [Query({"a": 1.0})] * 4
    noise = [0.3, -1.0, 2.5, 0.0, 1.0]
    base = run_baseline_restart({"a": 5}, PrivacyBudget(1.0, 1e-6), 5.0,
                                queries, 1, NoiseSource.scripted(noise))
    plain = AboveThreshold({"a": 5}, 1.0, 5.0, NoiseSource.scripted(noise))
    expected = []
    for q in queries:
        if plain.halted:
            expected.append("halted")
        else:
            expected.append(plain.step(q).value)
    assert base.transcript == expected


def test_baseline_halts_after_budget_and_ledger_is_sound():
    # zero noise and value above threshold: every live query tops immediately
    queries = [Query({"a": 1.0})] * 5
    result = run_baseline_restart({"a": 10}, PrivacyBudget(1.0, 1e-3), 5.0,
                                  queries, 2, NoiseSource.scripted([0.0] * 8))
    assert result.transcript == ["top", "top", "halted", "halted", "halted"]
    assert result.tops_spent == 2
    assert len(result.ledger) == 2
    assert result.epsilon_spent <= 2 * result.epsilon_per_instance + 1e-12
    # each top seeds a fresh instance: threshold noise plus one query noise each
    assert all(entry.topped and entry.rounds == 1 for entry in result.ledger)


# -- automatic budget resolution ----------------------------------------------

def test_resolve_kstar_fixed_point_property():
    stream = gen_example1(64, seed=11)
    for constant in (1.0, 0.02, 0.011):
        k = resolve_kstar(stream.snapshots, 1.0, 1e-6, 0.01,
                          stream.domain_size, constant)
        assert k >= 1 and (k & (k - 1)) == 0  # reachable by doubling from 1
        level = tau(k, 1.0, 1e-6, stream.steps, stream.domain_size, 0.01, constant)
        heavy = Counter()
        for snap in stream.snapshots:
            counts = Counter(snap)
            for j, x in enumerate(snap):
                heavy[j] += counts[x] >= level
        assert max(heavy.values()) <= k


def test_resolve_kstar_huge_tau_gives_one():
    stream = gen_example1(64, seed=11)
    assert resolve_kstar(stream.snapshots, 1.0, 1e-6, 0.01,
                         stream.domain_size, 1.0) == 1


# -- experiment runner ----------------------------------------------------------

def small_cfg(trials, seed=123):
    return ExperimentConfig(
        mechanism="tme_heavy_hitters", epsilon=1.0, delta=1e-6,
        trials=trials, master_seed=seed, tau_constant=1.0, k=3,
        stream=StreamSpec(kind="example1", n=64))


def test_run_experiment_zero_trials_writes_skeleton(tmp_path):
    summary = run_experiment(small_cfg(0), tmp_path)
    assert summary["schema"] == 1
    assert summary["trials"] == 0
    rows = (tmp_path / "rows.csv").read_text().splitlines()
    assert rows == [",".join(CSV_COLUMNS)]
    assert json.loads((tmp_path / "summary.json").read_text())["schema"] == 1


def test_run_experiment_reproducible_and_audited(tmp_path):
    out1, out2 = tmp_path / "one", tmp_path / "two"
    s1 = run_experiment(small_cfg(2), out1)
    s2 = run_experiment(small_cfg(2), out2)
    assert (out1 / "rows.csv").read_bytes() == (out2 / "rows.csv").read_bytes()
    cal = s1["calibration"]
    for key in ("scale1", "scale2", "w_scale", "xi", "epsilon0", "epsilon0_delta"):
        assert key in cal
    comp = s1["scale_comparison"]
    assert comp["baseline_tops_budgeted"] == 16  # C sets at n=64
    assert s1["results"]["kstar_counted"] == 3
    assert s1["results"]["zero_weight_reports"] == 0
    # summaries agree except for wall-clock
    s1.pop("wallclock_s"), s2.pop("wallclock_s")
    assert s1 == s2


def test_run_experiment_monitor_mode(tmp_path):
    cfg = ExperimentConfig(
        mechanism="threshold_monitor", epsilon=1.0, delta=1e-4, trials=2,
        master_seed=5, threshold=3.0, k=2, db={"a": 4},
        queries=[Query({"a": 1.0}), Query({"a": 0.5})])
    summary = run_experiment(cfg, tmp_path)
    rows = (tmp_path / "rows.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2
    assert summary["results"]["queries"] == 2


def test_run_experiment_baseline_mode(tmp_path):
    cfg = ExperimentConfig(
        mechanism="above_threshold_restart", epsilon=1.0, delta=1e-4, trials=1,
        master_seed=5, threshold=3.0, c_max=2, db={"a": 4},
        queries=[Query({"a": 1.0})] * 3)
    summary = run_experiment(cfg, tmp_path)
    assert summary["calibration"]["restarts_budgeted"] == 2
    rows = (tmp_path / "rows.csv").read_text().splitlines()
    assert len(rows) == 4


def test_experiment_config_validation():
    with pytest.raises(ValueError):
        small_cfg(-1)
    with pytest.raises(ValueError):
        ExperimentConfig(mechanism="nope", epsilon=1, delta=1e-6, trials=1,
                         master_seed=0, threshold=1.0)
    with pytest.raises(ValueError):
        ExperimentConfig(mechanism="tme_heavy_hitters", epsilon=1, delta=1e-6,
                         trials=1, master_seed=0, threshold=1.0,
                         tau_constant=1.0, stream=StreamSpec("example1", n=64))
    with pytest.raises(ValueError):
        ExperimentConfig(mechanism="threshold_monitor", epsilon=1, delta=1e-6,
                         trials=1, master_seed=0, threshold=1.0, k=2)


def test_stream_spec_constant_and_scripted(tmp_path):
    spec = StreamSpec(kind="constant", n=4, steps=3, element="x")
    stream = spec.materialize(0)
    assert stream.snapshots == [["x"] * 4] * 3
    assert stream.truth[0].weight == 4
    path = tmp_path / "s.jsonl"
    write_stream(path, stream.snapshots)
    scripted = StreamSpec(kind="scripted", path=str(path)).materialize(0)
    assert scripted.snapshots == stream.snapshots
    assert scripted.domain_size == 1
