"""Static-database sparse-vector mechanisms.

`AboveThreshold` is the classic baseline that answers below-threshold
queries for free and halts at the first above-threshold answer.
`ThresholdMonitor` never halts: on every above-threshold answer it charges
each contributing element's budget counter and deletes elements whose
counter reaches ``k``, so a single element can only drive a bounded number
of meaningful answers.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Hashable, Iterable, Mapping, Sequence

from .noise import NoiseSource
from .privacy_calc import delta_cap

__all__ = [
    "Answer",
    "Element",
    "Query",
    "MonitorConfig",
    "MechanismHalted",
    "AboveThreshold",
    "TraceRound",
    "ThresholdMonitor",
    "as_database",
    "run_monitor",
]

Element = Hashable


class Answer(str, Enum):
    BOT = "bot"
    TOP = "top"


class MechanismHalted(RuntimeError):
    """A halted mechanism was asked to answer another query."""


def as_database(elements: Mapping[Element, int] | Iterable[Element]) -> Counter:
    """Normalize to a multiset (Counter) and validate multiplicities."""
    db = Counter(dict(elements.items())) if isinstance(elements, Mapping) else Counter(elements)
    for x, mult in db.items():
        if mult < 1 or int(mult) != mult:
            raise ValueError(f"multiplicity of {x!r} must be a positive integer, got {mult!r}")
    return db


@dataclass(frozen=True)
class Query:
    """Bounded linear query: per-element weights in [0, 1], absent means 0."""

    weights: Mapping[Element, float]

    def __post_init__(self):
        object.__setattr__(self, "weights", dict(self.weights))
        for x, w in self.weights.items():
            if not (0.0 <= w <= 1.0):
                raise ValueError(f"query weight for {x!r} must lie in [0, 1], got {w!r}")

    def weight(self, x: Element) -> float:
        return self.weights.get(x, 0.0)

    def value(self, db: Mapping[Element, int]) -> float:
        """Weighted count of ``db`` under this query."""
        return sum(w * db[x] for x, w in self.weights.items() if x in db)


@dataclass(frozen=True)
class MonitorConfig:
    """Parameters of a monitored run.

    ``k`` is the per-element contribution budget; an element is deleted once
    its counter reaches ``k``. Requires ``(1/epsilon)*ln(1/delta) > 1`` so
    the noise cap is positive.
    """

    epsilon: float
    delta: float
    threshold: float
    k: int

    def __post_init__(self):
        if self.k < 1 or int(self.k) != self.k:
            raise ValueError(f"budget k must be an integer >= 1, got {self.k!r}")
        if not math.isfinite(self.threshold):
            raise ValueError(f"threshold must be finite, got {self.threshold!r}")
        delta_cap(self.epsilon, self.delta)  # validates epsilon, delta and positivity of the cap

    @property
    def cap(self) -> float:
        """Cap on the second noise; the first noise has scale ``10 * cap``."""
        return delta_cap(self.epsilon, self.delta)

    @property
    def v_scale(self) -> float:
        """Scale of the second (capped) noise term."""
        return math.log(1.0 / self.delta) / self.epsilon


class AboveThreshold:
    """Halting sparse-vector mechanism.

    Compares noisy query values against a noisy threshold drawn once at
    construction; answers ``BOT`` until the first ``TOP``, then halts.
    """

    def __init__(self, db: Mapping[Element, int] | Iterable[Element],
                 epsilon: float, threshold: float, source: NoiseSource):
        if epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {epsilon!r}")
        self._db = as_database(db)
        self.epsilon = float(epsilon)
        self.noisy_threshold = threshold + source.laplace(2.0 / epsilon)
        self._source = source
        self._halted = False

    @property
    def halted(self) -> bool:
        return self._halted

    def step(self, query: Query) -> Answer:
        if self._halted:
            raise MechanismHalted("AboveThreshold already produced its top answer")
        noisy = query.value(self._db) + self._source.laplace(4.0 / self.epsilon)
        if noisy >= self.noisy_threshold:
            self._halted = True
            return Answer.TOP
        return Answer.BOT


@dataclass(frozen=True)
class TraceRound:
    """Non-private per-round instrumentation (debug mode only)."""

    index: int
    answer: Answer
    true_value: float
    w: float
    v: float
    v_bar: float
    noisy_value: float


class ThresholdMonitor:
    """Sparse-vector mechanism with per-element contribution budgets.

    Each round adds two independent Laplace noises to the query value: a
    wide one with scale ``10 * cap`` and a narrower one truncated from above
    at ``cap``. A ``TOP`` answer charges every positively-weighted element's
    counter by its query weight (counters are kept even for elements already
    deleted or never present) and deletes live elements whose counter
    reached ``k``. ``BOT`` rounds change nothing. The mechanism never halts.

    With ``record_trace=True`` the run keeps a non-private `TraceRound` list;
    the released transcript is unchanged.
    """

    halted = False  # uniform stepping protocol with AboveThreshold

    def __init__(self, db: Mapping[Element, int] | Iterable[Element],
                 cfg: MonitorConfig, source: NoiseSource,
                 record_trace: bool = False):
        self.cfg = cfg
        self.live = as_database(db)
        self.counters: dict[Element, float] = {}
        self.cap = cfg.cap  # fixed at init so rounds share one exact value
        self.v_scale = cfg.v_scale
        self.round_index = 1
        self.trace: list[TraceRound] | None = [] if record_trace else None
        self._source = source

    def step(self, query: Query) -> Answer:
        w = self._source.laplace(10.0 * self.cap)
        v = self._source.laplace(self.v_scale)
        v_bar = min(v, self.cap)
        true_value = query.value(self.live)
        noisy = true_value + w + v_bar
        if noisy < self.cfg.threshold:
            answer = Answer.BOT
        else:
            answer = Answer.TOP
            for x, wt in query.weights.items():
                if wt > 0.0:
                    c = self.counters.get(x, 0.0) + wt
                    self.counters[x] = c
                    if c >= self.cfg.k and x in self.live:
                        del self.live[x]
        if self.trace is not None:
            self.trace.append(TraceRound(self.round_index, answer, true_value,
                                         w, v, v_bar, noisy))
        self.round_index += 1
        return answer


def run_monitor(db, cfg: MonitorConfig, queries: Sequence[Query],
                source: NoiseSource) -> list[Answer]:
    """Fold `ThresholdMonitor.step` over a fixed query list."""
    monitor = ThresholdMonitor(db, cfg, source)
    return [monitor.step(q) for q in queries]
