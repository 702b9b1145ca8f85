"""Threshold-monitoring sparse-vector mechanisms for differential privacy.

The static monitor answers an unbounded stream of threshold queries and,
instead of halting at the first meaningful answer, deletes elements once
they have contributed to ``k`` of them; the evolving variant does the same
with per-user budgets over changing data and powers a shifting
heavy-hitters solver. ``privacy_calc`` turns parameters into guarantees and
back; ``audit`` checks the probabilistic claims empirically; ``harness``
runs reproducible experiments.
"""

from .noise import NoiseSource, ScriptedNoiseExhausted
from .privacy_calc import (CalibrationError, EvolvingScales, PrivacyBudget,
                           advanced_composition, calibrate_evolving,
                           calibrate_monitor, delta_cap, epsilon0_bound, tau,
                           xi_bound)
from .svt import (AboveThreshold, Answer, MechanismHalted, MonitorConfig,
                  Query, ThresholdMonitor, TraceRound, as_database,
                  run_monitor)
from .evolving import (EvolvingConfig, HeavyHitterReport,
                       ShiftingHeavyHitters, ThresholdMonitorEvolving,
                       run_heavy_hitters)
from .audit import (AuditReport, DeterministicAdversary, EventTally,
                    GameRound, NeighborPair, estimate_privacy_loss,
                    interact, run_game, tally_events)

__version__ = "0.1.0"
