"""Experiment orchestration: synthetic streams, the restart baseline,
calibrated experiment runs, and file formats.

Streams and queries travel as line-delimited JSON; experiment runs emit a
fixed-column CSV of per-step results plus a versioned JSON summary that
echoes every calibrated parameter, so the outputs stay auditable against
``privacy_calc``. All outputs are fully determined by (config, seed).
"""

from __future__ import annotations

import csv
import json
import math
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Mapping, Sequence

import numpy as np

from .evolving import EvolvingConfig, HeavyHitterReport, ShiftingHeavyHitters
from .noise import NoiseSource
from .privacy_calc import (CalibrationError, PrivacyBudget, advanced_composition,
                           calibrate_evolving, epsilon0_bound, tau, xi_bound)
from .svt import AboveThreshold, Answer, Query, as_database

__all__ = [
    "StepTruth",
    "MaterializedStream",
    "example1_tier_sizes",
    "gen_example1",
    "kstar_counted",
    "resolve_kstar",
    "read_stream",
    "write_stream",
    "read_queries",
    "write_queries",
    "read_database",
    "StreamSpec",
    "ExperimentConfig",
    "BaselineLedgerEntry",
    "BaselineResult",
    "calibrate_restart",
    "run_baseline_restart",
    "run_experiment",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("trial", "step", "element", "answer", "true_weight", "tier")

HALTED = "halted"  # transcript marker used once the restart budget is spent


# ---------------------------------------------------------------------------
# synthetic stream generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepTruth:
    """Ground truth for one stream step: the scheduled heavy element."""

    step: int
    element: Hashable
    tier: str
    weight: int
    members: tuple[int, ...]


@dataclass
class MaterializedStream:
    """A snapshot stream plus whatever ground truth its generator knows."""

    n: int
    snapshots: list[list]
    truth: list[StepTruth] | None
    domain_size: int

    @property
    def steps(self) -> int:
        return len(self.snapshots)


def example1_tier_sizes(n: int) -> tuple[int, int, int]:
    """Set sizes of the three partition tiers for an n-user stream."""
    if n < 2:
        raise ValueError("need at least 2 users")
    sizes = (math.ceil(math.log2(n)), round(n ** 0.25), round(n ** (1.0 / 3.0)))
    if min(sizes) < 2 or len(set(sizes)) != 3:
        raise ValueError(f"n={n} too small for distinct tier sizes, got {sizes}")
    if max(sizes) > n:
        raise ValueError(f"n={n} smaller than a tier size, got {sizes}")
    return sizes


def gen_example1(n: int, seed: int) -> MaterializedStream:
    """Three-tier shifting heavy-hitter stream.

    Each tier independently partitions the users into sets of the tier's
    size (the last set keeps the remainder). Every set gets exactly one
    step, in shuffled order, where its members all hold a fresh shared
    element while everyone else holds a globally unique filler; so every
    user takes part in exactly three heavy steps. Heavy elements are the
    integers ``0..sets-1``; fillers continue upward.
    """
    sizes = example1_tier_sizes(n)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed)])))
    sets: list[tuple[str, np.ndarray]] = []
    for tier, size in zip("ABC", sizes):
        perm = rng.permutation(n)
        for start in range(0, n, size):
            sets.append((tier, perm[start:start + size]))
    order = rng.permutation(len(sets))

    total_sets = len(sets)
    filler = total_sets  # next unused element id
    snapshots: list[list[int]] = []
    truth: list[StepTruth] = []
    for step, set_index in enumerate(order, start=1):
        tier, members = sets[set_index]
        snap = list(range(filler, filler + n))
        filler += n
        element = int(set_index)
        for j in members:
            snap[j] = element
        snapshots.append(snap)
        truth.append(StepTruth(step=step, element=element, tier=tier,
                               weight=len(members),
                               members=tuple(int(j) for j in members)))
    # fillers displaced by set members never appear; count the distinct ids that do
    domain = total_sets + sum(n - t.weight for t in truth)
    return MaterializedStream(n=n, snapshots=snapshots, truth=truth,
                              domain_size=domain)


def kstar_counted(truth: Sequence[StepTruth], n: int) -> int:
    """Maximum number of heavy steps any single user takes part in."""
    counts = np.zeros(n, dtype=int)
    for row in truth:
        counts[list(row.members)] += 1
    return int(counts.max()) if n else 0


def resolve_kstar(snapshots: Sequence[Sequence[Hashable]], epsilon: float,
                  delta: float, beta: float, domain_size: int,
                  constant: float = 1.0, k_cap: int = 2 ** 20) -> int:
    """Smallest power-of-two-reachable budget consistent with its own error.

    Starting from ``k = 1`` and doubling, pick the first ``k`` such that no
    user holds an element of weight at least ``tau(k)`` in more than ``k``
    steps of the given stream.
    """
    m = len(snapshots)
    if m == 0:
        return 1
    n = len(snapshots[0])
    weights = np.empty((m, n), dtype=np.int64)
    for i, snap in enumerate(snapshots):
        counts = Counter(snap)
        weights[i] = [counts[x] for x in snap]
    k = 1
    while k <= k_cap:
        level = tau(k, epsilon, delta, m, domain_size, beta, constant)
        if int((weights >= level).sum(axis=0).max()) <= k:
            return k
        k *= 2
    raise ValueError("no feasible budget below the cap; supply k explicitly")


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def write_stream(path, snapshots: Sequence[Sequence[Hashable]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, snap in enumerate(snapshots, start=1):
            fh.write(json.dumps({"step": i, "inputs": list(snap)}) + "\n")


def read_stream(path) -> list[list]:
    snapshots = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            snapshots.append(list(record["inputs"]))
    if snapshots and any(len(s) != len(snapshots[0]) for s in snapshots):
        raise ValueError("all snapshots in a stream must have the same length")
    return snapshots


def write_queries(path, queries: Sequence[Query]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps({"weights": dict(q.weights)}) + "\n")


def read_queries(path) -> list[Query]:
    queries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                queries.append(Query(json.loads(line)["weights"]))
    return queries


def read_database(path) -> Counter:
    with open(path, encoding="utf-8") as fh:
        return as_database(json.load(fh))


# ---------------------------------------------------------------------------
# restart baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BaselineLedgerEntry:
    instance: int
    epsilon: float
    rounds: int
    topped: bool


@dataclass
class BaselineResult:
    transcript: list[str]          # "bot" / "top" / "halted"
    ledger: list[BaselineLedgerEntry]
    epsilon_per_instance: float
    per_query_scale: float
    threshold_scale: float
    restarts_budgeted: int
    tops_spent: int

    @property
    def epsilon_spent(self) -> float:
        return sum(entry.epsilon for entry in self.ledger)


def calibrate_restart(target: PrivacyBudget, c_max: int,
                      rel_tol: float = 1e-6) -> float:
    """Per-instance epsilon so ``c_max`` halting runs compose inside ``target``.

    A single instance gets the whole budget; multiple instances split it
    through `advanced_composition` with slack ``target.delta`` (each
    instance is pure epsilon-DP).
    """
    if c_max < 1 or int(c_max) != c_max:
        raise ValueError(f"c_max must be an integer >= 1, got {c_max!r}")
    if target.epsilon <= 0.0:
        raise CalibrationError("target epsilon must be positive")
    if c_max == 1:
        return target.epsilon

    if target.delta <= 0.0:
        raise CalibrationError("splitting across restarts needs target delta > 0")

    def fits(eps: float) -> bool:
        return advanced_composition(eps, 0.0, c_max, target.delta).epsilon <= target.epsilon

    hi = target.epsilon
    if fits(hi):
        return hi
    lo = 0.0
    while hi - lo > rel_tol * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if fits(mid):
            lo = mid
        else:
            hi = mid
    if lo <= 0.0:
        raise CalibrationError("no feasible per-instance epsilon")
    return lo


def run_baseline_restart(db, target: PrivacyBudget, threshold: float,
                         queries: Sequence[Query], c_max: int,
                         source: NoiseSource) -> BaselineResult:
    """Halting sparse-vector baseline with restart-on-top budgeting.

    Runs `AboveThreshold` instances back to back: each top consumes one of
    ``c_max`` budgeted restarts and re-instantiates the mechanism on the
    same database. Once all restarts are spent, remaining queries get the
    ``halted`` marker and consume no noise.
    """
    eps_inst = calibrate_restart(target, c_max)
    database = as_database(db)
    transcript: list[str] = []
    ledger: list[BaselineLedgerEntry] = []
    tops = 0
    instance = None
    instance_no = 0
    rounds = 0
    for query in queries:
        if tops >= c_max:
            transcript.append(HALTED)
            continue
        if instance is None:
            instance = AboveThreshold(database, eps_inst, threshold, source)
            instance_no += 1
            rounds = 0
        answer = instance.step(query)
        rounds += 1
        transcript.append(answer.value)
        if answer is Answer.TOP:
            ledger.append(BaselineLedgerEntry(instance_no, eps_inst, rounds, True))
            tops += 1
            instance = None
    if instance is not None and rounds:
        ledger.append(BaselineLedgerEntry(instance_no, eps_inst, rounds, False))
    return BaselineResult(transcript=transcript, ledger=ledger,
                          epsilon_per_instance=eps_inst,
                          per_query_scale=4.0 / eps_inst,
                          threshold_scale=2.0 / eps_inst,
                          restarts_budgeted=c_max, tops_spent=tops)


# ---------------------------------------------------------------------------
# experiment runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StreamSpec:
    """How to obtain the snapshot stream of an experiment."""

    kind: str                       # "example1" | "constant" | "scripted"
    n: int | None = None
    steps: int | None = None
    element: Hashable | None = None
    path: str | None = None

    def materialize(self, seed: int) -> MaterializedStream:
        if self.kind == "example1":
            if not self.n:
                raise ValueError("example1 stream needs n")
            return gen_example1(self.n, seed)
        if self.kind == "constant":
            if not (self.n and self.steps) or self.element is None:
                raise ValueError("constant stream needs n, steps and element")
            snapshots = [[self.element] * self.n for _ in range(self.steps)]
            truth = [StepTruth(step=i, element=self.element, tier="const",
                               weight=self.n, members=tuple(range(self.n)))
                     for i in range(1, self.steps + 1)]
            return MaterializedStream(n=self.n, snapshots=snapshots, truth=truth,
                                      domain_size=1)
        if self.kind == "scripted":
            if not self.path:
                raise ValueError("scripted stream needs a path")
            snapshots = read_stream(self.path)
            if not snapshots:
                return MaterializedStream(n=0, snapshots=[], truth=None, domain_size=0)
            domain = len({x for snap in snapshots for x in snap})
            return MaterializedStream(n=len(snapshots[0]), snapshots=snapshots,
                                      truth=None, domain_size=domain)
        raise ValueError(f"unknown stream kind {self.kind!r}")


MECHANISMS = ("tme_heavy_hitters", "threshold_monitor", "above_threshold_restart")


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully describes one experiment; (config, master_seed) fixes all output."""

    mechanism: str
    epsilon: float
    delta: float
    trials: int
    master_seed: int
    threshold: float | None = None      # explicit threshold ...
    tau_constant: float | None = None   # ... or error-target derivation
    beta: float = 0.01
    k: int | None = None                # None -> resolve automatically (tme)
    c_max: int | None = None            # baseline restarts
    stream: StreamSpec | None = None
    db: Mapping | None = None
    queries: Sequence[Query] | None = None

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.trials < 0:
            raise ValueError("trials must be nonnegative")
        if self.mechanism == "tme_heavy_hitters":
            if (self.threshold is None) == (self.tau_constant is None):
                raise ValueError("set exactly one of threshold / tau_constant")
            if self.stream is None:
                raise ValueError("tme_heavy_hitters needs a stream spec")
        else:
            if self.threshold is None:
                raise ValueError(f"{self.mechanism} needs an explicit threshold")
            if self.db is None or self.queries is None:
                raise ValueError(f"{self.mechanism} needs db and queries")
            if self.mechanism == "above_threshold_restart" and not self.c_max:
                raise ValueError("above_threshold_restart needs c_max")
            if self.mechanism == "threshold_monitor" and not self.k:
                raise ValueError("threshold_monitor needs k")


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    raise TypeError(f"not JSON serializable: {type(value)}")


def write_summary(path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Execute the configured trials; write ``rows.csv`` and ``summary.json``.

    Returns the summary dict. Reruns with the same config and seed produce
    byte-identical CSV (the summary additionally carries wall-clock time).
    """
    started = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows_path = out / "rows.csv"
    summary_path = out / "summary.json"

    with open(rows_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        if cfg.mechanism == "tme_heavy_hitters":
            summary = _run_tme_experiment(cfg, writer)
        elif cfg.mechanism == "threshold_monitor":
            summary = _run_monitor_experiment(cfg, writer)
        else:
            summary = _run_baseline_experiment(cfg, writer)

    summary["schema"] = 1
    summary["mechanism"] = cfg.mechanism
    summary["trials"] = cfg.trials
    summary["master_seed"] = cfg.master_seed
    summary["rows_csv"] = rows_path.name
    summary["wallclock_s"] = time.perf_counter() - started
    write_summary(summary_path, summary)
    return summary


def _tme_setup(cfg: ExperimentConfig) -> tuple[MaterializedStream, EvolvingConfig, dict]:
    stream = cfg.stream.materialize(cfg.master_seed)
    target = PrivacyBudget(cfg.epsilon, cfg.delta)
    if cfg.k is not None:
        k_used = cfg.k
    else:
        k_used = resolve_kstar(stream.snapshots, cfg.epsilon, cfg.delta, cfg.beta,
                               max(stream.domain_size, 1),
                               cfg.tau_constant if cfg.tau_constant is not None else 1.0)
    scales = calibrate_evolving(target, k_used)
    if cfg.threshold is not None:
        threshold = cfg.threshold
    else:
        threshold = tau(k_used, cfg.epsilon, cfg.delta, max(stream.steps, 1),
                        max(stream.domain_size, 1), cfg.beta, cfg.tau_constant)
    evolving_cfg = EvolvingConfig(epsilon=scales.epsilon, delta=scales.delta,
                                  threshold=threshold, k=k_used,
                                  scale1=scales.scale1, scale2=scales.scale2,
                                  n_users=stream.n)
    calibration = {
        "target_epsilon": cfg.epsilon,
        "target_delta": cfg.delta,
        "epsilon_per_run": scales.epsilon,
        "delta_per_run": scales.delta,
        "scale1": scales.scale1,
        "scale2": scales.scale2,
        "w_scale": 10.0 * scales.scale1,
        "xi": xi_bound(scales.epsilon, scales.delta, k_used),
        "epsilon0": epsilon0_bound(scales.epsilon, scales.delta, k_used).epsilon,
        "epsilon0_delta": epsilon0_bound(scales.epsilon, scales.delta, k_used).delta,
        "threshold": threshold,
        "k_used": k_used,
        "beta": cfg.beta,
        "tau_constant": cfg.tau_constant,
    }
    return stream, evolving_cfg, calibration


def _run_tme_experiment(cfg: ExperimentConfig, writer) -> dict:
    stream, evolving_cfg, calibration = _tme_setup(cfg)
    truth = stream.truth or []
    tiers = sorted({t.tier for t in truth})
    per_tier = {t: {"steps": 0, "hits": 0} for t in tiers}
    reports_total = 0
    unscheduled_reports = 0
    zero_weight_reports = 0

    scheduled = {t.step: t for t in truth}
    for trial in range(cfg.trials):
        source = NoiseSource.seeded(cfg.master_seed, 1, trial)
        solver = ShiftingHeavyHitters(evolving_cfg, source)
        for snap in stream.snapshots:
            report = solver.step(snap)
            reports_total += len(report.identified)
            present = set(snap)
            zero_weight_reports += sum(1 for x in report.identified
                                       if x not in present)
            row = scheduled.get(report.step)
            if row is not None:
                hit = row.element in report.identified
                stats = per_tier[row.tier]
                stats["steps"] += 1
                stats["hits"] += hit
                unscheduled_reports += len(report.identified) - (1 if hit else 0)
                writer.writerow([trial, report.step, row.element,
                                 "top" if hit else "bot", row.weight, row.tier])
            else:
                unscheduled_reports += len(report.identified)

    for stats in per_tier.values():
        stats["recall"] = (stats["hits"] / stats["steps"]) if stats["steps"] else None

    summary: dict = {
        "calibration": calibration,
        "stream": {"kind": cfg.stream.kind, "n": stream.n, "steps": stream.steps,
                   "domain_size": stream.domain_size},
        "results": {
            "per_tier": per_tier,
            "reports_total": reports_total,
            "unscheduled_reports": unscheduled_reports,
            "zero_weight_reports": zero_weight_reports,
            "kstar_counted": kstar_counted(truth, stream.n) if truth else None,
        },
    }
    if truth:
        c_tops = sum(1 for t in truth if t.tier == "C")
        if c_tops:
            summary["scale_comparison"] = _scale_comparison(
                cfg, evolving_cfg, c_tops)
    return summary


def _scale_comparison(cfg: ExperimentConfig, evolving_cfg: EvolvingConfig,
                      baseline_tops: int) -> dict:
    target = PrivacyBudget(cfg.epsilon, cfg.delta)
    eps_inst = calibrate_restart(target, baseline_tops)
    baseline_scale = 4.0 / eps_inst
    return {
        "tme_per_query_scale": evolving_cfg.scale2,
        "tme_w_scale": 10.0 * evolving_cfg.scale1,
        "baseline_tops_budgeted": baseline_tops,
        "baseline_epsilon_per_instance": eps_inst,
        "baseline_per_query_scale": baseline_scale,
        "tme_scale_smaller": evolving_cfg.scale2 < baseline_scale,
    }


def _run_monitor_experiment(cfg: ExperimentConfig, writer) -> dict:
    from .svt import MonitorConfig, ThresholdMonitor

    db = as_database(cfg.db)
    mon_cfg = MonitorConfig(cfg.epsilon, cfg.delta, cfg.threshold, cfg.k)
    true_values = [q.value(db) for q in cfg.queries]
    tops = 0
    for trial in range(cfg.trials):
        source = NoiseSource.seeded(cfg.master_seed, 1, trial)
        monitor = ThresholdMonitor(db, mon_cfg, source)
        for step, query in enumerate(cfg.queries, start=1):
            answer = monitor.step(query)
            tops += answer is Answer.TOP
            writer.writerow([trial, step, "", answer.value,
                             repr(true_values[step - 1]), ""])
    return {
        "calibration": {
            "delta_cap": mon_cfg.cap, "v_scale": mon_cfg.v_scale,
            "w_scale": 10.0 * mon_cfg.cap, "threshold": cfg.threshold,
            "k_used": cfg.k,
            "xi": xi_bound(cfg.epsilon, cfg.delta, cfg.k),
            "epsilon0": epsilon0_bound(cfg.epsilon, cfg.delta, cfg.k).epsilon,
            "epsilon0_delta": epsilon0_bound(cfg.epsilon, cfg.delta, cfg.k).delta,
        },
        "results": {"tops_total": tops, "queries": len(cfg.queries)},
    }


def _run_baseline_experiment(cfg: ExperimentConfig, writer) -> dict:
    db = as_database(cfg.db)
    target = PrivacyBudget(cfg.epsilon, cfg.delta)
    true_values = [q.value(db) for q in cfg.queries]
    spent = []
    eps_inst = calibrate_restart(target, cfg.c_max)
    for trial in range(cfg.trials):
        source = NoiseSource.seeded(cfg.master_seed, 1, trial)
        result = run_baseline_restart(db, target, cfg.threshold, cfg.queries,
                                      cfg.c_max, source)
        spent.append(result.epsilon_spent)
        for step, answer in enumerate(result.transcript, start=1):
            writer.writerow([trial, step, "", answer,
                             repr(true_values[step - 1]), ""])
    return {
        "calibration": {
            "epsilon_per_instance": eps_inst,
            "per_query_scale": 4.0 / eps_inst,
            "threshold_scale": 2.0 / eps_inst,
            "restarts_budgeted": cfg.c_max,
            "threshold": cfg.threshold,
        },
        "results": {"epsilon_spent": spent},
    }
