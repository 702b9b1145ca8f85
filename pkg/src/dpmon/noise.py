"""Laplace noise sources with deterministic seeding and scripted playback.

Every mechanism in this package draws its randomness through a
:class:`NoiseSource`, so a run is either reproducible from a seed or fully
prescribed by a script of noise values. A source is single-owner mutable
state: concurrent trials must each build their own source, typically from
``NoiseSource.seeded(master_seed, trial_index)``.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

__all__ = ["NoiseSource", "ScriptedNoiseExhausted"]


class ScriptedNoiseExhausted(RuntimeError):
    """A scripted source was asked for more values than it holds."""


def _check_scale(scale: float) -> float:
    scale = float(scale)
    if not math.isfinite(scale) or scale <= 0.0:
        raise ValueError(f"Laplace scale must be a positive real, got {scale!r}")
    return scale


class NoiseSource:
    """Source of Laplace draws, either seeded-pseudorandom or scripted.

    Seeded mode converts one uniform draw per sample into a Laplace variate
    through the inverse CDF, so identical seeds give identical draw
    sequences and batched draws consume the underlying stream exactly like
    repeated single draws. Scripted mode replays a fixed list of noise
    values verbatim, in order, and raises once the list is exhausted (it
    never recycles).
    """

    def __init__(self, *, _rng: np.random.Generator | None = None,
                 _script: list[float] | None = None):
        if (_rng is None) == (_script is None):
            raise ValueError("use NoiseSource.seeded(...) or NoiseSource.scripted(...)")
        self._rng = _rng
        self._script = _script
        self._pos = 0

    @classmethod
    def seeded(cls, *key: int) -> "NoiseSource":
        """Pseudorandom source derived from one or more integer seed words.

        Extra words derive independent child streams, e.g.
        ``seeded(master, trial)`` for per-trial sources.
        """
        if not key:
            raise ValueError("at least one seed word is required")
        ss = np.random.SeedSequence([int(k) for k in key])
        return cls(_rng=np.random.Generator(np.random.PCG64(ss)))

    @classmethod
    def scripted(cls, values: Sequence[float]) -> "NoiseSource":
        """Source that returns ``values`` verbatim, one per draw."""
        return cls(_script=[float(v) for v in values])

    @property
    def is_scripted(self) -> bool:
        return self._script is not None

    # -- uniform plumbing (seeded mode) ------------------------------------

    def _uniform(self) -> float:
        # open-interval uniform: reject the exact endpoint 0.0
        u = self._rng.random()
        while u == 0.0:
            u = self._rng.random()
        return u

    def _uniforms(self, count: int) -> np.ndarray:
        us = self._rng.random(count)
        while True:
            bad = us == 0.0
            if not bad.any():
                return us
            us[bad] = self._rng.random(int(bad.sum()))

    # -- sampling -----------------------------------------------------------

    def laplace(self, scale: float) -> float:
        """One draw from the Laplace distribution with the given scale.

        Scripted mode returns the next scripted value unchanged (the scale
        is still validated).
        """
        scale = _check_scale(scale)
        if self._script is not None:
            if self._pos >= len(self._script):
                raise ScriptedNoiseExhausted(
                    f"scripted noise exhausted after {self._pos} draws")
            value = self._script[self._pos]
            self._pos += 1
            return value
        u = self._uniform()
        if u < 0.5:
            return scale * math.log(2.0 * u)
        return -scale * math.log(2.0 * (1.0 - u))

    def laplace_many(self, scales: Sequence[float]) -> np.ndarray:
        """One draw per entry of ``scales``, in order.

        In seeded mode this consumes the uniform stream exactly like
        ``len(scales)`` successive :meth:`laplace` calls.
        """
        scales = np.asarray(scales, dtype=float)
        if scales.size and (not np.isfinite(scales).all() or (scales <= 0.0).any()):
            raise ValueError("all Laplace scales must be positive reals")
        if self._script is not None:
            end = self._pos + scales.size
            if end > len(self._script):
                raise ScriptedNoiseExhausted(
                    f"scripted noise exhausted: need {scales.size}, "
                    f"have {len(self._script) - self._pos}")
            out = np.array(self._script[self._pos:end], dtype=float)
            self._pos = end
            return out
        us = self._uniforms(int(scales.size))
        return np.where(us < 0.5,
                        scales * np.log(2.0 * us),
                        -scales * np.log(2.0 * (1.0 - us)))

    def capped_laplace(self, scale: float, cap: float) -> float:
        """Laplace draw truncated from above at ``cap`` (lower tail untouched)."""
        return min(self.laplace(scale), float(cap))
