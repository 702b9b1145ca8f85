"""Threshold monitoring over evolving data and shifting heavy hitters.

Here the database changes every round: each of ``n`` users holds one domain
element per time step. Budgets are charged per *user* instead of per
element: a user whose counter reached ``k`` stops contributing to query
sums, but its counter keeps being charged on top rounds. The shifting
heavy-hitters solver issues one point query per element present in the
current snapshot and reports the elements answered ``TOP``.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .noise import NoiseSource
from .svt import Answer, Query

__all__ = [
    "EvolvingConfig",
    "ThresholdMonitorEvolving",
    "HeavyHitterReport",
    "ShiftingHeavyHitters",
    "run_heavy_hitters",
]


@dataclass(frozen=True)
class EvolvingConfig:
    """Parameters of an evolving-data monitored run.

    ``scale1`` caps the second noise (the first noise has scale
    ``10 * scale1``) and ``scale2`` is the second noise's scale; both come
    from ``privacy_calc.calibrate_evolving`` when a total budget is given,
    or may be set directly for utility experiments.
    """

    epsilon: float
    delta: float
    threshold: float
    k: int
    scale1: float
    scale2: float
    n_users: int

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if not math.isfinite(self.threshold):
            raise ValueError(f"threshold must be finite, got {self.threshold!r}")
        if self.k < 1 or int(self.k) != self.k:
            raise ValueError(f"budget k must be an integer >= 1, got {self.k!r}")
        if self.scale1 <= 0.0 or self.scale2 <= 0.0:
            raise ValueError("noise scales must be positive")
        if not self.scale2 < self.scale1:
            raise ValueError(
                f"scale2 must be smaller than scale1, got {self.scale2!r} >= {self.scale1!r}")
        if self.n_users < 1:
            raise ValueError(f"n_users must be at least 1, got {self.n_users!r}")


class ThresholdMonitorEvolving:
    """Per-user-budget threshold monitor over changing snapshots.

    Every round receives the current snapshot (one element per user) and a
    query; the query value is summed only over users whose counter is still
    below ``k``. A ``TOP`` charges every user's counter by the query weight
    of the element that user currently holds, exhausted users included.
    """

    halted = False

    def __init__(self, cfg: EvolvingConfig, source: NoiseSource):
        self.cfg = cfg
        self.counters = np.zeros(cfg.n_users, dtype=float)
        self.round_index = 1
        self._source = source

    def _check_snapshot(self, snapshot: Sequence[Hashable]) -> None:
        if len(snapshot) != self.cfg.n_users:
            raise ValueError(
                f"snapshot length {len(snapshot)} != configured users {self.cfg.n_users}")

    def step(self, snapshot: Sequence[Hashable], query: Query) -> Answer:
        self._check_snapshot(snapshot)
        cfg = self.cfg
        w = self._source.laplace(10.0 * cfg.scale1)
        v = self._source.laplace(cfg.scale2)
        v_bar = min(v, cfg.scale1)
        active = self.counters < cfg.k
        total = sum(query.weight(x) for x, alive in zip(snapshot, active) if alive)
        self.round_index += 1
        if total + w + v_bar < cfg.threshold:
            return Answer.BOT
        self.counters += np.fromiter((query.weight(x) for x in snapshot),
                                     dtype=float, count=cfg.n_users)
        return Answer.TOP

    def step_point_batch(self, snapshot: Sequence[Hashable],
                         candidates: Sequence[Hashable]) -> list[Answer]:
        """Answer one 0/1 point query per candidate, in order.

        Equivalent, answer for answer and noise draw for noise draw, to
        calling :meth:`step` with ``Query({c: 1.0})`` for each candidate:
        within one snapshot a top on one candidate only charges users who
        hold that candidate, and those users contribute nothing to any other
        candidate's sum, so all sums may be computed up front.
        """
        self._check_snapshot(snapshot)
        cfg = self.cfg
        count = len(candidates)
        scales = np.empty(2 * count, dtype=float)
        scales[0::2] = 10.0 * cfg.scale1
        scales[1::2] = cfg.scale2
        noise = self._source.laplace_many(scales)
        w = noise[0::2]
        v_bar = np.minimum(noise[1::2], cfg.scale1)

        active = self.counters < cfg.k
        counts = Counter(x for x, alive in zip(snapshot, active) if alive)
        sums = np.fromiter((counts.get(c, 0) for c in candidates),
                           dtype=float, count=count)
        top = sums + w + v_bar >= cfg.threshold
        self.round_index += count
        if top.any():
            topped = {c for c, is_top in zip(candidates, top) if is_top}
            charged = [j for j, x in enumerate(snapshot) if x in topped]
            if charged:
                np.add.at(self.counters, np.asarray(charged, dtype=np.intp), 1.0)
        return [Answer.TOP if t else Answer.BOT for t in top]


@dataclass(frozen=True)
class HeavyHitterReport:
    """Elements identified as currently heavy at one time step."""

    step: int
    identified: frozenset


class ShiftingHeavyHitters:
    """Per-step heavy-hitter identification over a snapshot stream.

    Candidates at each step are exactly the distinct elements present in the
    snapshot (queried in sorted order); elements held by nobody are never
    queried and therefore never reported.
    """

    def __init__(self, cfg: EvolvingConfig, source: NoiseSource):
        self.monitor = ThresholdMonitorEvolving(cfg, source)
        self.step_index = 0

    def step(self, snapshot: Sequence[Hashable]) -> HeavyHitterReport:
        self.step_index += 1
        candidates = sorted(set(snapshot))
        answers = self.monitor.step_point_batch(snapshot, candidates)
        identified = frozenset(c for c, a in zip(candidates, answers)
                               if a is Answer.TOP)
        return HeavyHitterReport(self.step_index, identified)


def run_heavy_hitters(cfg: EvolvingConfig, snapshots: Sequence[Sequence[Hashable]],
                      source: NoiseSource) -> list[HeavyHitterReport]:
    """Fold `ShiftingHeavyHitters.step` over a snapshot stream."""
    solver = ShiftingHeavyHitters(cfg, source)
    return [solver.step(snapshot) for snapshot in snapshots]
