import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from dpmon.noise import NoiseSource, ScriptedNoiseExhausted


def test_scripted_passthrough():
    src = NoiseSource.scripted([0.0])
    assert src.laplace(1.0) == 0.0


def test_scripted_order_and_exhaustion():
    src = NoiseSource.scripted([1.5, -2.0])
    assert src.laplace(3.0) == 1.5
    assert src.laplace(0.1) == -2.0
    with pytest.raises(ScriptedNoiseExhausted):
        src.laplace(1.0)


def test_nonpositive_scale_rejected_in_both_modes():
    for src in (NoiseSource.scripted([1.0]), NoiseSource.seeded(0)):
        with pytest.raises(ValueError):
            src.laplace(0.0)
        with pytest.raises(ValueError):
            src.laplace(-1.0)
        with pytest.raises(ValueError):
            src.laplace_many([1.0, 0.0])


def test_seeded_reproducible_and_key_sensitive():
    a = [NoiseSource.seeded(42).laplace(1.0) for _ in range(5)]
    b = [NoiseSource.seeded(42).laplace(1.0) for _ in range(5)]
    assert a[0] == b[0]
    draws_a = NoiseSource.seeded(42)
    draws_b = NoiseSource.seeded(42)
    assert [draws_a.laplace(2.0) for _ in range(100)] == \
           [draws_b.laplace(2.0) for _ in range(100)]
    assert NoiseSource.seeded(42).laplace(1.0) != NoiseSource.seeded(42, 1).laplace(1.0)


def test_batch_matches_scalar_stream_exactly():
    scales = [1.0, 2.0, 0.5, 10.0, 1.0, 3.0] * 20
    batch = NoiseSource.seeded(7, 3).laplace_many(scales)
    src = NoiseSource.seeded(7, 3)
    singles = [src.laplace(s) for s in scales]
    assert np.array_equal(batch, np.array(singles))


def test_scripted_batch_consumes_verbatim():
    src = NoiseSource.scripted([1.0, 2.0, 3.0])
    out = src.laplace_many([5.0, 5.0])
    assert list(out) == [1.0, 2.0]
    assert src.laplace(1.0) == 3.0


def test_seeded_moments_and_median_tail():
    # mean of Lap(2) draws near 0; |x| > b*ln2 has probability exactly 1/2
    draws = NoiseSource.seeded(42).laplace_many([2.0] * 10 ** 6)
    assert -0.02 <= draws.mean() <= 0.02
    frac = (np.abs(draws) > 2.0 * math.log(2.0)).mean()
    assert 0.49 <= frac <= 0.51


def test_inverse_cdf_matches_laplace_distribution():
    draws = NoiseSource.seeded(123).laplace_many([1.5] * 10 ** 6)
    statistic = stats.kstest(draws, stats.laplace(scale=1.5).cdf).statistic
    assert statistic < 0.005


def test_capped_scripted():
    assert NoiseSource.scripted([5.0]).capped_laplace(1.0, 3.0) == 3.0
    assert NoiseSource.scripted([-7.0]).capped_laplace(1.0, 3.0) == -7.0


def test_capped_at_zero_half_mass_on_cap():
    src = NoiseSource.seeded(7)
    draws = np.array([src.capped_laplace(1.0, 0.0) for _ in range(10 ** 5)])
    assert (draws <= 0.0).all()
    at_cap = (draws == 0.0).mean()
    assert 0.48 <= at_cap <= 0.52


def test_cap_preserves_distribution_below_cap():
    cap = 1.0
    capped_src = NoiseSource.seeded(11)
    capped = np.array([capped_src.capped_laplace(1.0, cap) for _ in range(10 ** 5)])
    uncapped = NoiseSource.seeded(12).laplace_many([1.0] * 10 ** 5)
    statistic = stats.ks_2samp(capped[capped < cap], uncapped[uncapped < cap]).statistic
    assert statistic < 0.01


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=32), max_size=30),
       st.floats(min_value=0.01, max_value=100.0))
def test_scripted_replays_any_sequence(values, scale):
    src = NoiseSource.scripted(values)
    assert [src.laplace(scale) for _ in values] == [float(v) for v in values]
    with pytest.raises(ScriptedNoiseExhausted):
        src.laplace(scale)
