"""Empirical validation machinery.

Three families of checks live here:

* `interact` / `estimate_privacy_loss`: run a deterministic adaptive
  adversary against a mechanism on two neighboring databases many times and
  turn event frequencies into statistical *lower* bounds on the realized
  privacy loss (with Clopper-Pearson confidence intervals). A passing audit
  never proves privacy; a confidently violated one disproves it.
* `tally_events`: classify the rounds of an instrumented monitored run into
  near-threshold categories whose tallies the privacy analysis bounds.
* `run_game`: Monte-Carlo estimation of the tail of the budgeted reward
  game that underlies those tallies' concentration bound.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np
from scipy.stats import beta as _beta

from .noise import NoiseSource
from .svt import Answer, Element, Query, TraceRound, as_database

__all__ = [
    "NeighborPair",
    "DeterministicAdversary",
    "interact",
    "LossEstimate",
    "AuditReport",
    "estimate_privacy_loss",
    "clopper_pearson",
    "EventTally",
    "tally_events",
    "e1_bound",
    "e2_bound",
    "GameRound",
    "GameStrategy",
    "ConstantStrategy",
    "ScheduleStrategy",
    "StreakRewardStrategy",
    "BudgetAwareStrategy",
    "GameTailEstimate",
    "game_tail_bound",
    "run_game",
]


# ---------------------------------------------------------------------------
# adaptive interaction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NeighborPair:
    """Two databases differing in one added element."""

    base: Mapping[Element, int]
    extra: Element

    def base_db(self) -> Counter:
        return as_database(self.base)

    def neighbor_db(self) -> Counter:
        db = as_database(self.base)
        db[self.extra] += 1
        return db


@dataclass(frozen=True)
class DeterministicAdversary:
    """Pure query chooser: same answer prefix, same next query."""

    strategy: Callable[[tuple[Answer, ...]], Query]
    rounds: int


def interact(mechanism, adversary: DeterministicAdversary) -> list[Answer]:
    """Run the adaptive query loop and return the released answer sequence.

    Stops early if the mechanism halts. Queries are not stored: the
    adversary is deterministic, so they are reconstructible from the
    answers.
    """
    answers: list[Answer] = []
    for _ in range(adversary.rounds):
        if mechanism.halted:
            break
        query = adversary.strategy(tuple(answers))
        answers.append(mechanism.step(query))
    return answers


# ---------------------------------------------------------------------------
# privacy-loss lower bounds
# ---------------------------------------------------------------------------

def clopper_pearson(successes: int, trials: int,
                    confidence: float = 0.99) -> tuple[float, float]:
    """Exact binomial confidence interval for a frequency."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    alpha = 1.0 - confidence
    lo = 0.0 if successes == 0 else float(
        _beta.ppf(alpha / 2.0, successes, trials - successes + 1))
    hi = 1.0 if successes == trials else float(
        _beta.ppf(1.0 - alpha / 2.0, successes + 1, trials - successes))
    return lo, hi


def _loss(numer: float, denom: float, delta: float) -> float | None:
    """ln((numer - delta)/denom), or None when undefined."""
    top = numer - delta
    if top <= 0.0:
        return 0.0
    if denom <= 0.0:
        return None
    return math.log(top / denom)


@dataclass(frozen=True)
class LossEstimate:
    """Empirical privacy loss of one transcript event, both directions."""

    event: str
    trials: int
    p_base: float
    p_neighbor: float
    ci_base: tuple[float, float]
    ci_neighbor: tuple[float, float]
    loss_point: float | None        # None when a zero denominator leaves only the interval
    loss_lower_bound: float         # CI-adjusted, clipped below at 0
    epsilon_theory: float
    delta_total: float

    @property
    def violated(self) -> bool:
        return self.loss_lower_bound > self.epsilon_theory

    def as_dict(self) -> dict:
        return {
            "event": self.event,
            "trials": self.trials,
            "p_base": self.p_base,
            "p_neighbor": self.p_neighbor,
            "ci_base": list(self.ci_base),
            "ci_neighbor": list(self.ci_neighbor),
            "loss_point": self.loss_point,
            "loss_lower_bound": self.loss_lower_bound,
            "epsilon_theory": self.epsilon_theory,
            "delta_total": self.delta_total,
            "violated": self.violated,
        }


@dataclass(frozen=True)
class AuditReport:
    """Per-event loss estimates for one mechanism/adversary/pair setup."""

    mechanism: str
    trials: int
    confidence: float
    delta_total: float
    epsilon_theory: float
    entries: tuple[LossEstimate, ...]

    @property
    def worst_lower_bound(self) -> float:
        return max((e.loss_lower_bound for e in self.entries), default=0.0)

    @property
    def violated(self) -> bool:
        return any(e.violated for e in self.entries)

    def as_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "trials": self.trials,
            "confidence": self.confidence,
            "delta_total": self.delta_total,
            "epsilon_theory": self.epsilon_theory,
            "worst_lower_bound": self.worst_lower_bound,
            "violated": self.violated,
            "entries": [e.as_dict() for e in self.entries],
        }


def estimate_privacy_loss(
    pair: NeighborPair,
    adversary: DeterministicAdversary,
    mechanism_factory: Callable[[Counter, NoiseSource], object],
    events: Mapping[str, Callable[[Sequence[Answer]], bool]],
    trials: int,
    master_seed: int,
    delta_total: float,
    epsilon_theory: float,
    confidence: float = 0.99,
    mechanism_name: str = "mechanism",
) -> AuditReport:
    """Monte-Carlo lower bounds on privacy loss over transcript events.

    Runs ``trials`` independent seeded interactions on the base database and
    again on its neighbor (trial ``i`` of arm ``a`` uses the source seeded
    by ``(master_seed, a, i)``). For each event the empirical frequencies
    ``p`` and ``p'`` yield the two directed losses ``ln((p - delta)/p')``
    and ``ln((p' - delta)/p)``, clipped below at zero; the reported lower
    bound additionally moves both frequencies to the unfavorable ends of
    their Clopper-Pearson intervals. An entry is violated when that lower
    bound still exceeds the theoretical epsilon.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    names = list(events)
    counts = {name: [0, 0] for name in names}
    for arm, db in enumerate((pair.base_db(), pair.neighbor_db())):
        for trial in range(trials):
            source = NoiseSource.seeded(master_seed, arm, trial)
            transcript = interact(mechanism_factory(db, source), adversary)
            for name in names:
                if events[name](transcript):
                    counts[name][arm] += 1

    entries = []
    for name in names:
        c0, c1 = counts[name]
        p0, p1 = c0 / trials, c1 / trials
        ci0 = clopper_pearson(c0, trials, confidence)
        ci1 = clopper_pearson(c1, trials, confidence)
        directed = [_loss(p0, p1, delta_total), _loss(p1, p0, delta_total)]
        defined = [d for d in directed if d is not None]
        loss_point = max(0.0, *defined) if len(defined) == 2 else None
        lower = [_loss(ci0[0], ci1[1], delta_total), _loss(ci1[0], ci0[1], delta_total)]
        loss_lb = max(0.0, *(d for d in lower if d is not None))
        entries.append(LossEstimate(
            event=name, trials=trials, p_base=p0, p_neighbor=p1,
            ci_base=ci0, ci_neighbor=ci1, loss_point=loss_point,
            loss_lower_bound=loss_lb, epsilon_theory=epsilon_theory,
            delta_total=delta_total))
    return AuditReport(mechanism=mechanism_name, trials=trials,
                       confidence=confidence, delta_total=delta_total,
                       epsilon_theory=epsilon_theory, entries=tuple(entries))


# ---------------------------------------------------------------------------
# near-threshold event tallies
# ---------------------------------------------------------------------------

def e1_bound(k: float, delta: float) -> float:
    """Bound on the total designated-element weight over almost-top rounds."""
    return 15.0 * (k + 1.0) + 5.0 * math.log(1.0 / delta)


def e2_bound(k: float, delta: float) -> float:
    """Bound on the number of special-almost-top rounds."""
    return 30.0 * (k + 1.0) + 10.0 * math.log(1.0 / delta)


@dataclass(frozen=True)
class EventTally:
    """Per-run tallies of the near-threshold round classes.

    ``almost_top_weight`` sums the designated element's query weight over
    almost-top rounds, ``special_almost_count`` counts the special subclass,
    and ``top_weight`` sums its weight over top rounds up to and including
    the round where its counter reaches ``k``.
    """

    almost_top_weight: float
    special_almost_count: int
    top_weight: float

    def satisfies_e1(self, k: float, delta: float) -> bool:
        return self.almost_top_weight <= e1_bound(k, delta)

    def satisfies_e2(self, k: float, delta: float) -> bool:
        return self.special_almost_count <= e2_bound(k, delta)

    def satisfies_e3(self, k: float, delta: float) -> bool:
        return self.satisfies_e1(k, delta) and self.satisfies_e2(k, delta)


def tally_events(trace: Sequence[TraceRound], queries: Sequence[Query],
                 x_prime: Element, k: float, threshold: float,
                 cap: float) -> EventTally:
    """Classify an instrumented run's rounds relative to a designated element.

    A bot round with the designated counter still below ``k`` is an
    almost-top when ``true_value + w >= threshold - 2*cap`` and a
    special-almost-top when ``threshold - weight - cap <= true_value + w <
    threshold - cap``, where ``weight`` is the round's query weight of the
    designated element. Requires the run's debug trace.
    """
    if trace is None:
        raise ValueError("debug trace required: run the monitor with record_trace=True")
    if len(trace) != len(queries):
        raise ValueError("trace and query list lengths differ")
    almost_weight = 0.0
    special_count = 0
    top_weight = 0.0
    counter = 0.0
    budget_spent = False  # becomes True at the round where the counter reaches k
    for rnd, query in zip(trace, queries):
        fx = query.weight(x_prime)
        if rnd.answer is Answer.TOP:
            if not budget_spent:
                top_weight += fx
            counter += fx
            if counter >= k:
                budget_spent = True
        elif not budget_spent:
            shifted = rnd.true_value + rnd.w
            if shifted >= threshold - 2.0 * cap:
                almost_weight += fx
            if threshold - fx - cap <= shifted < threshold - cap:
                special_count += 1
    return EventTally(almost_top_weight=almost_weight,
                      special_almost_count=special_count,
                      top_weight=top_weight)


# ---------------------------------------------------------------------------
# budgeted reward game
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GameRound:
    """One round's parameters: ``p`` rewards, ``q`` spends, ``gamma`` weighs."""

    p: float
    q: float
    gamma: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 0.5):
            raise ValueError(f"p must lie in [0, 1/2], got {self.p!r}")
        if not (self.p / 4.0 <= self.q <= 1.0 - self.p):
            raise ValueError(f"q must lie in [p/4, 1-p], got {self.q!r} with p={self.p!r}")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma!r}")


class GameStrategy:
    """Adversary in the budgeted reward game.

    Subclasses implement :meth:`choose` from the history of past outcomes
    (each outcome is 0, 1 or 2). Strategies that can run many trials in
    lockstep set ``vectorized = True`` and implement the array hooks; the
    batched runner then reproduces the scalar runner draw for draw.
    """

    vectorized = False

    def choose(self, history: Sequence[int]) -> GameRound:
        raise NotImplementedError

    def begin(self, trials: int):
        """Fresh per-trial state for the batched runner."""
        return None

    def params(self, i: int, state) -> tuple:
        """Round-``i`` parameters ``(p, q, gamma)``, scalars or length-``trials`` arrays."""
        raise NotImplementedError

    def observe(self, i: int, state, outcomes: np.ndarray):
        return state


class ConstantStrategy(GameStrategy):
    """Same round parameters every round."""

    vectorized = True

    def __init__(self, p: float, q: float, gamma: float):
        self.round = GameRound(p, q, gamma)

    def choose(self, history):
        return self.round

    def params(self, i, state):
        return self.round.p, self.round.q, self.round.gamma


class ScheduleStrategy(GameStrategy):
    """History-independent schedule: parameters depend on the round index only."""

    vectorized = True

    def __init__(self, schedule: Callable[[int], tuple[float, float, float]]):
        self.schedule = schedule

    def choose(self, history):
        return GameRound(*self.schedule(len(history)))

    def params(self, i, state):
        p, q, gamma = self.schedule(i)
        GameRound(p, q, gamma)  # validate once per round
        return p, q, gamma


class StreakRewardStrategy(GameStrategy):
    """Raises the weight with the current streak of reward outcomes."""

    vectorized = True

    def __init__(self, p: float = 0.5, q: float = 0.125,
                 base_gamma: float = 0.4, step: float = 0.2):
        self.p, self.q = p, q
        self.base_gamma, self.step = base_gamma, step
        GameRound(p, q, self._gamma(0))

    def _gamma(self, streak) -> float:
        return np.minimum(1.0, self.base_gamma + self.step * streak)

    def choose(self, history):
        streak = 0
        for outcome in reversed(history):
            if outcome != 1:
                break
            streak += 1
        return GameRound(self.p, self.q, float(self._gamma(streak)))

    def begin(self, trials):
        return np.zeros(trials)

    def params(self, i, streaks):
        return self.p, self.q, self._gamma(streaks)

    def observe(self, i, streaks, outcomes):
        return np.where(outcomes == 1, streaks + 1.0, 0.0)


class BudgetAwareStrategy(GameStrategy):
    """Probes less the more budget it has already burned."""

    vectorized = True

    def __init__(self, p0: float = 0.5, shrink: float = 0.5,
                 q_floor: float = 0.25, gamma: float = 1.0):
        self.p0, self.shrink, self.q_floor, self.gamma = p0, shrink, q_floor, gamma
        GameRound(p0, max(p0 / 4.0, q_floor), gamma)

    def _round(self, spends):
        p = self.p0 * self.shrink ** spends
        q = np.maximum(p / 4.0, self.q_floor)
        return p, q

    def choose(self, history):
        spends = sum(1 for outcome in history if outcome == 2)
        p, q = self._round(spends)
        return GameRound(float(p), float(q), self.gamma)

    def begin(self, trials):
        return np.zeros(trials)

    def params(self, i, spends):
        p, q = self._round(spends)
        return p, q, self.gamma

    def observe(self, i, spends, outcomes):
        return spends + (outcomes == 2)


@dataclass(frozen=True)
class GameTailEstimate:
    """Empirical tail of the total reward collected before the budget ran out."""

    rounds: int
    budget: float
    trials: int
    lambdas: tuple[float, ...]
    tail: tuple[float, ...]
    stderr: tuple[float, ...]

    def as_dict(self) -> dict:
        return {
            "rounds": self.rounds, "budget": self.budget, "trials": self.trials,
            "lambdas": list(self.lambdas), "tail": list(self.tail),
            "stderr": list(self.stderr),
            "bound": [game_tail_bound(lam, self.budget) for lam in self.lambdas],
        }


def game_tail_bound(lam: float, budget: float) -> float:
    """Analytic tail bound ``exp(-lam/5 + 3*(budget+1))``, clipped at 1."""
    return min(1.0, math.exp(-lam / 5.0 + 3.0 * (budget + 1.0)))


def _as_strategy(strategy) -> GameStrategy:
    if isinstance(strategy, GameStrategy):
        return strategy
    if callable(strategy):
        wrapped = GameStrategy()
        wrapped.choose = strategy  # type: ignore[method-assign]
        return wrapped
    raise TypeError("strategy must be a GameStrategy or a callable(history) -> GameRound")


def _play_scalar(strategy: GameStrategy, rounds: int, budget: float,
                 uniforms: np.ndarray) -> float:
    history: list[int] = []
    spent = 0.0
    reward = 0.0
    for i in range(rounds):
        r = strategy.choose(history)
        if not isinstance(r, GameRound):
            r = GameRound(*r)
        u = uniforms[i]
        if u < r.p:
            outcome = 1
            if spent <= budget:
                reward += r.gamma
        elif u < r.p + r.q:
            outcome = 2
            spent += r.gamma
        else:
            outcome = 0
        history.append(outcome)
    return reward


def _rewards_scalar(strategy, rounds, budget, trials, master_seed) -> np.ndarray:
    rewards = np.empty(trials)
    for trial in range(trials):
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([master_seed, trial])))
        rewards[trial] = _play_scalar(strategy, rounds, budget, rng.random(rounds))
    return rewards


def _validate_params(p, q, gamma) -> None:
    p, q, gamma = np.asarray(p), np.asarray(q), np.asarray(gamma)
    if ((p < 0.0) | (p > 0.5)).any():
        raise ValueError("p must lie in [0, 1/2] for every trial")
    if ((q < p / 4.0) | (q > 1.0 - p)).any():
        raise ValueError("q must lie in [p/4, 1-p] for every trial")
    if ((gamma < 0.0) | (gamma > 1.0)).any():
        raise ValueError("gamma must lie in [0, 1] for every trial")


def _rewards_vectorized(strategy: GameStrategy, rounds, budget, trials,
                        master_seed, chunk=16384) -> np.ndarray:
    rewards = np.empty(trials)
    for start in range(0, trials, chunk):
        size = min(chunk, trials - start)
        uniforms = np.empty((size, rounds))
        for offset in range(size):
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence([master_seed, start + offset])))
            uniforms[offset] = rng.random(rounds)
        state = strategy.begin(size)
        spent = np.zeros(size)
        reward = np.zeros(size)
        for i in range(rounds):
            p, q, gamma = strategy.params(i, state)
            _validate_params(p, q, gamma)
            u = uniforms[:, i]
            is_reward = u < p
            is_spend = ~is_reward & (u < np.asarray(p) + q)
            # reward check uses the budget before this round's own spend
            reward += np.where(is_reward & (spent <= budget), gamma, 0.0)
            spent += np.where(is_spend, gamma, 0.0)
            outcomes = is_reward * 1 + is_spend * 2
            state = strategy.observe(i, state, outcomes)
        rewards[start:start + size] = reward
    return rewards


def run_game(strategy, rounds: int, budget: float, trials: int,
             master_seed: int, lambdas: Sequence[float],
             force_scalar: bool = False) -> GameTailEstimate:
    """Empirical tail probabilities of the game's total collected reward.

    Each trial owns the source seeded by ``(master_seed, trial)`` and plays
    ``rounds`` rounds against the strategy; with a negative budget the
    reward is identically zero. Vector-capable strategies run batched with
    results identical to the scalar path.
    """
    if rounds < 1 or trials < 1:
        raise ValueError("rounds and trials must be positive")
    strategy = _as_strategy(strategy)
    if strategy.vectorized and not force_scalar:
        rewards = _rewards_vectorized(strategy, rounds, budget, trials, master_seed)
    else:
        rewards = _rewards_scalar(strategy, rounds, budget, trials, master_seed)
    lambdas = tuple(float(lam) for lam in lambdas)
    tail = []
    stderr = []
    for lam in lambdas:
        p_hat = float((rewards > lam).mean())
        tail.append(p_hat)
        stderr.append(math.sqrt(p_hat * (1.0 - p_hat) / trials))
    return GameTailEstimate(rounds=rounds, budget=float(budget), trials=trials,
                            lambdas=lambdas, tail=tuple(tail), stderr=tuple(stderr))
