"""Canned Monte-Carlo audit scenarios.

These back the ``dpmon audit`` subcommand and the acceptance suite: the tail
bound of the budgeted reward game over a family of adversaries, the
near-threshold event frequencies of an instrumented monitored run, and
privacy-loss lower bounds for both mechanisms on neighboring databases.
Trial counts are parameters so the same scenarios run desk-scale or quick.
"""

from __future__ import annotations

import math
from typing import Sequence

from .audit import (AuditReport, BudgetAwareStrategy, ConstantStrategy,
                    DeterministicAdversary, EventTally, GameStrategy,
                    NeighborPair, ScheduleStrategy, StreakRewardStrategy,
                    e1_bound, e2_bound, estimate_privacy_loss, game_tail_bound,
                    run_game, tally_events)
from .noise import NoiseSource
from .privacy_calc import PrivacyBudget, calibrate_monitor, epsilon0_bound
from .svt import AboveThreshold, Answer, MonitorConfig, Query, ThresholdMonitor

__all__ = [
    "game_strategies",
    "game_audit",
    "near_threshold_queries",
    "event_audit",
    "privacy_audit",
]

GAME_LAMBDAS = (10.0, 20.0, 30.0, 45.0, 60.0, 80.0)
GAME_BUDGETS = (0, 1, 3)


def game_strategies() -> dict[str, GameStrategy]:
    """The adversary family audited against the game's tail bound."""
    return {
        "constant_aggressive": ConstantStrategy(p=0.5, q=0.125, gamma=1.0),
        "constant_light": ConstantStrategy(p=0.25, q=0.5, gamma=0.6),
        "escalating_gamma": ScheduleStrategy(
            lambda i: (0.4, 0.3, min(1.0, 0.05 + i / 200.0))),
        "streak_chaser": StreakRewardStrategy(p=0.5, q=0.125,
                                              base_gamma=0.4, step=0.2),
        "budget_aware": BudgetAwareStrategy(p0=0.5, shrink=0.5,
                                            q_floor=0.25, gamma=1.0),
    }


def game_audit(trials: int, seed: int, rounds: int = 200,
               budgets: Sequence[int] = GAME_BUDGETS,
               lambdas: Sequence[float] = GAME_LAMBDAS) -> dict:
    """Empirical game tails for every (strategy, budget) pair vs the bound.

    A case is ok when the empirical tail stays below the analytic bound plus
    three Monte-Carlo standard errors at every grid point.
    """
    cases = []
    for name, strategy in game_strategies().items():
        for budget in budgets:
            est = run_game(strategy, rounds, budget, trials,
                           master_seed=seed, lambdas=lambdas)
            bounds = [game_tail_bound(lam, budget) for lam in est.lambdas]
            ok = [t <= b + 3.0 * s
                  for t, b, s in zip(est.tail, bounds, est.stderr)]
            cases.append({
                "strategy": name, "budget": budget,
                "lambdas": list(est.lambdas), "tail": list(est.tail),
                "stderr": list(est.stderr), "bound": bounds,
                "ok": ok, "all_ok": all(ok),
            })
    return {"rounds": rounds, "trials": trials, "seed": seed,
            "all_ok": all(c["all_ok"] for c in cases), "cases": cases}


def near_threshold_queries(rounds: int, base: str = "a",
                           designated: str = "b") -> list[Query]:
    """Query stream hovering at the threshold with mixed designated weights."""
    cycle = (1.0, 0.7, 0.3)
    return [Query({base: 1.0, designated: cycle[i % len(cycle)]})
            for i in range(rounds)]


def event_audit(trials: int, seed: int, ks: Sequence[int] = (1, 2),
                rounds: int = 50, epsilon: float = 0.5,
                delta: float = 1e-2) -> dict:
    """Frequencies of the near-threshold tally events over seeded runs.

    Runs the instrumented monitor on a database that sits exactly at the
    threshold (so answers hover) with a designated element absent from the
    data, tallies every run, and compares each event's frequency against its
    analytic floor minus three Monte-Carlo standard errors.
    """
    base_weight = 30
    db = {"a": base_weight}
    threshold = float(base_weight)
    queries = near_threshold_queries(rounds)
    cases = []
    for k in ks:
        cfg = MonitorConfig(epsilon, delta, threshold, k)
        hits = {"e1": 0, "e2": 0, "e3": 0}
        for trial in range(trials):
            source = NoiseSource.seeded(seed, k, trial)
            monitor = ThresholdMonitor(db, cfg, source, record_trace=True)
            for query in queries:
                monitor.step(query)
            tally = tally_events(monitor.trace, queries, "b", k,
                                 threshold, cfg.cap)
            hits["e1"] += tally.satisfies_e1(k, delta)
            hits["e2"] += tally.satisfies_e2(k, delta)
            hits["e3"] += tally.satisfies_e3(k, delta)
        freqs = {name: count / trials for name, count in hits.items()}
        sigma = {name: math.sqrt(f * (1.0 - f) / trials)
                 for name, f in freqs.items()}
        floors = {"e1": 1.0 - delta, "e2": 1.0 - 2.0 * delta, "e3": 1.0 - 3.0 * delta}
        ok = {name: freqs[name] >= floors[name] - 3.0 * sigma[name]
              for name in freqs}
        cases.append({
            "k": k, "rounds": rounds, "epsilon": epsilon, "delta": delta,
            "freq": freqs, "stderr": sigma, "floor": floors, "ok": ok,
            "all_ok": all(ok.values()),
            "bounds": {"e1": e1_bound(k, delta), "e2": e2_bound(k, delta)},
        })
    return {"trials": trials, "seed": seed,
            "all_ok": all(c["all_ok"] for c in cases), "cases": cases}


def _transcript_events(max_rounds: int) -> dict:
    events = {
        "any_top": lambda t: any(a is Answer.TOP for a in t),
        "tops_ge_2": lambda t: sum(a is Answer.TOP for a in t) >= 2,
        "first_answer_top": lambda t: bool(t) and t[0] is Answer.TOP,
    }
    for r in (1, 3, max_rounds):
        events[f"top_by_{r}"] = (lambda rr: lambda t: any(
            a is Answer.TOP for a in t[:rr]))(r)
    return events


def above_threshold_audit(trials: int, seed: int, epsilon: float = 1.0,
                          rounds: int = 10) -> AuditReport:
    """Loss lower bounds for the halting mechanism on a 5-element database."""
    pair = NeighborPair(base={"a": 5}, extra="b")
    threshold = 5.5

    def strategy(prefix):
        # alternate weights so the adversary is genuinely prefix-dependent
        if len(prefix) % 2:
            return Query({"a": 0.5, "b": 1.0})
        return Query({"a": 1.0, "b": 1.0})

    adversary = DeterministicAdversary(strategy, rounds)
    return estimate_privacy_loss(
        pair, adversary,
        lambda db, src: AboveThreshold(db, epsilon, threshold, src),
        _transcript_events(rounds), trials, seed,
        delta_total=0.0, epsilon_theory=epsilon,
        mechanism_name="above_threshold")


def threshold_monitor_audit(trials: int, seed: int, k: int = 2,
                            target_epsilon: float = 1.0,
                            target_delta: float = 1e-3,
                            rounds: int = 20) -> AuditReport:
    """Loss lower bounds for a monitored run calibrated to a total budget."""
    eps, delta = calibrate_monitor(PrivacyBudget(target_epsilon, target_delta), k)
    achieved = epsilon0_bound(eps, delta, k)
    pair = NeighborPair(base={"a": 10}, extra="b")
    cfg = MonitorConfig(eps, delta, threshold=10.0, k=k)

    def strategy(prefix):
        # back off the base weight once a top has been seen
        if any(a is Answer.TOP for a in prefix):
            return Query({"a": 0.2, "b": 1.0})
        return Query({"a": 1.0, "b": 1.0})

    adversary = DeterministicAdversary(strategy, rounds)
    return estimate_privacy_loss(
        pair, adversary,
        lambda db, src: ThresholdMonitor(db, cfg, src),
        _transcript_events(rounds), trials, seed,
        delta_total=achieved.delta, epsilon_theory=achieved.epsilon,
        mechanism_name="threshold_monitor")


def privacy_audit(trials: int, seed: int) -> dict:
    """Both mechanisms' audits; ok when no entry is confidently violated."""
    above = above_threshold_audit(trials, seed)
    monitor = threshold_monitor_audit(trials, seed + 1)
    return {
        "trials": trials, "seed": seed,
        "all_ok": not (above.violated or monitor.violated),
        "above_threshold": above.as_dict(),
        "threshold_monitor": monitor.as_dict(),
    }
