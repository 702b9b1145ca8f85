"""Closed-form privacy-loss bounds and numeric budget calibration.

The forward direction turns mechanism parameters ``(epsilon, delta, k)``
into the privacy guarantee of a full monitored run; the inverse direction
(`calibrate_monitor`, `calibrate_evolving`) binary-searches per-run
parameters so the composed guarantee stays inside a caller-supplied target
budget. All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "PrivacyBudget",
    "CalibrationError",
    "delta_cap",
    "xi_bound",
    "advanced_composition",
    "epsilon0_bound",
    "calibrate_monitor",
    "EvolvingScales",
    "calibrate_evolving",
    "tau",
]


class CalibrationError(ValueError):
    """Requested privacy target cannot be met by the search space."""


@dataclass(frozen=True)
class PrivacyBudget:
    """An ``(epsilon, delta)`` differential-privacy guarantee."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if not (self.epsilon >= 0.0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be a finite nonnegative real, got {self.epsilon!r}")
        if not (0.0 <= self.delta < 1.0):
            raise ValueError(f"delta must lie in [0, 1), got {self.delta!r}")

    def fits_within(self, other: "PrivacyBudget") -> bool:
        """Componentwise comparison: this guarantee is at least as strong."""
        return self.epsilon <= other.epsilon and self.delta <= other.delta


def _check_eps_delta(epsilon: float, delta: float, *, allow_zero_eps: bool = False) -> None:
    if allow_zero_eps:
        if epsilon < 0.0:
            raise ValueError(f"epsilon must be nonnegative, got {epsilon!r}")
    elif epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")


def delta_cap(epsilon: float, delta: float) -> float:
    """Cap applied to the second noise term, and scale unit of the first.

    Equals ``(1/eps) * ln(1/delta) * ln((1/eps) * ln(1/delta))``; requires
    ``(1/eps) * ln(1/delta) > 1`` so the value is positive.
    """
    _check_eps_delta(epsilon, delta)
    ratio = math.log(1.0 / delta) / epsilon
    if ratio <= 1.0:
        raise ValueError(
            f"need (1/epsilon)*ln(1/delta) > 1 for a positive cap; got {ratio!r}")
    return ratio * math.log(ratio)


def xi_bound(epsilon: float, delta: float, k: float) -> float:
    """Privacy loss of one monitored run with contribution budget ``k``.

    The run is ``(xi, 3*delta)``-differentially private for
    ``xi = 75*(k+1)*epsilon/ln(1/delta) + 25*epsilon``.
    """
    _check_eps_delta(epsilon, delta, allow_zero_eps=True)
    if k < 1:
        raise ValueError(f"budget k must be at least 1, got {k!r}")
    return 75.0 * (k + 1.0) * epsilon / math.log(1.0 / delta) + 25.0 * epsilon


def advanced_composition(epsilon: float, delta: float, ell: int,
                         delta_hat: float) -> PrivacyBudget:
    """Guarantee of ``ell`` adaptive rounds of an ``(epsilon, delta)`` step.

    Returns ``(sqrt(2*ell*ln(1/delta_hat))*epsilon + ell*epsilon*(e^epsilon - 1),
    ell*delta + delta_hat)``.
    """
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon!r}")
    if delta < 0.0:
        raise ValueError(f"delta must be nonnegative, got {delta!r}")
    if ell < 1 or int(ell) != ell:
        raise ValueError(f"ell must be an integer >= 1, got {ell!r}")
    if not (0.0 < delta_hat < 1.0):
        raise ValueError(f"delta_hat must lie in (0, 1), got {delta_hat!r}")
    eps_hat = (math.sqrt(2.0 * ell * math.log(1.0 / delta_hat)) * epsilon
               + ell * epsilon * math.expm1(epsilon))
    return PrivacyBudget(eps_hat, ell * delta + delta_hat)


def epoch_count(delta: float, k: int) -> int:
    """Number of budget epochs a run with parameter ``k`` decomposes into."""
    return max(1, math.ceil(k / math.log(1.0 / delta)))


def epsilon0_bound(epsilon: float, delta: float, k: int) -> PrivacyBudget:
    """Composed guarantee of a monitored run, square-root in ``k``.

    The run splits into ``ell = max(1, ceil(k / ln(1/delta)))`` epochs, each
    spending at most ``ln(1/delta)`` of one element's budget and therefore
    each ``(xi_bound(epsilon, delta, ln(1/delta)), 3*delta)``-private; the
    epochs compose through `advanced_composition` with slack ``delta``. A
    single epoch short-circuits to ``(xi_bound(epsilon, delta, k),
    3*delta + delta)``.
    """
    _check_eps_delta(epsilon, delta, allow_zero_eps=True)
    if k < 1 or int(k) != k:
        raise ValueError(f"budget k must be an integer >= 1, got {k!r}")
    log_inv = math.log(1.0 / delta)
    ell = epoch_count(delta, k)
    if k <= log_inv:
        return PrivacyBudget(xi_bound(epsilon, delta, k), 3.0 * delta + delta)
    xi_epoch = xi_bound(epsilon, delta, log_inv)
    return advanced_composition(xi_epoch, 3.0 * delta, ell, delta)


def calibrate_monitor(target: PrivacyBudget, k: int,
                      rel_tol: float = 1e-6) -> tuple[float, float]:
    """Largest per-run ``(epsilon, delta)`` whose composed bound fits ``target``.

    Fixes ``delta = target.delta / (3k + 1)`` and binary-searches epsilon
    over ``(0, target.epsilon]`` until `epsilon0_bound` meets the target to
    within ``rel_tol`` relative. The result is guaranteed to satisfy
    ``epsilon0_bound(eps, delta, k).fits_within(target)``.
    """
    if target.epsilon <= 0.0:
        raise CalibrationError("target epsilon must be positive")
    if target.delta <= 0.0:
        raise CalibrationError("target delta must be positive")
    if k < 1 or int(k) != k:
        raise ValueError(f"budget k must be an integer >= 1, got {k!r}")
    delta = target.delta / (3.0 * k + 1.0)
    # keep the per-run invariant (1/eps)*ln(1/delta) > 1 inside the search space
    hi = min(target.epsilon, (1.0 - 1e-9) * math.log(1.0 / delta))
    if hi <= 0.0:
        raise CalibrationError("search space is empty for this target")

    def fits(eps: float) -> bool:
        return epsilon0_bound(eps, delta, k).epsilon <= target.epsilon

    if fits(hi):
        eps = hi
    else:
        lo = 0.0
        cur = hi
        while cur - lo > rel_tol * max(cur, 1e-300):
            mid = 0.5 * (lo + cur)
            if fits(mid):
                lo = mid
            else:
                cur = mid
        eps = lo
    if eps <= 0.0 or not epsilon0_bound(eps, delta, k).fits_within(target):
        raise CalibrationError("no feasible per-run epsilon found for this target")
    return eps, delta


@dataclass(frozen=True)
class EvolvingScales:
    """Calibrated noise scales for the evolving-data monitor."""

    epsilon: float   # per-run epsilon after calibration
    delta: float     # per-run delta after calibration
    scale1: float    # cap on the second noise; the first noise has scale 10*scale1
    scale2: float    # scale of the second noise


def calibrate_evolving(target: PrivacyBudget, k: int,
                       rel_tol: float = 1e-6) -> EvolvingScales:
    """Noise scales for the evolving monitor meeting a total privacy target.

    Calibrates per-run parameters with `calibrate_monitor`, then instantiates
    ``scale1 = delta_cap(eps, delta)`` and ``scale2 = ln(1/delta)/eps``.
    """
    eps, delta = calibrate_monitor(target, k, rel_tol)
    scale1 = delta_cap(eps, delta)
    scale2 = math.log(1.0 / delta) / eps
    if not scale2 < scale1:
        raise CalibrationError(
            "calibrated scales are degenerate (cap does not exceed the noise scale)")
    return EvolvingScales(epsilon=eps, delta=delta, scale1=scale1, scale2=scale2)


def tau(k: float, epsilon: float, delta: float, m: float, domain_size: float,
        beta: float, constant: float = 1.0) -> float:
    """Error level of the shifting heavy-hitters solver.

    Returns ``constant * (sqrt(k)/epsilon) * ln(1/delta) *
    ln(m * domain_size / beta)``. ``constant`` is this artifact's calibration
    knob; it defaults to 1.
    """
    for name, value in (("k", k), ("epsilon", epsilon), ("m", m),
                        ("domain_size", domain_size), ("beta", beta),
                        ("constant", constant)):
        if value <= 0.0:
            raise ValueError(f"{name} must be positive, got {value!r}")
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    return (constant * math.sqrt(k) / epsilon * math.log(1.0 / delta)
            * math.log(m * domain_size / beta))
