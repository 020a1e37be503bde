from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from spotvol import rng
from spotvol.blocks import (
    block_minima,
    estimate_noise_level,
    local_minima,
    partition,
)
from spotvol.experiments import iteration_prices
from spotvol.market import NoiseConfig, SvModelConfig, simulate_path


def oracle_index_sets(n, inv_h, boundary):
    """Enumerate every i in 0..n and place it with exact rational times."""
    sets = [[] for _ in range(inv_h)]
    for i in range(n + 1):
        t = Fraction(i, n)
        k = int(t * inv_h)  # floor for non-negative rationals
        if k == inv_h:
            continue
        a, b = Fraction(k, inv_h), Fraction(k + 1, inv_h)
        assert a <= t < b
        if boundary == "left" or a < t:
            sets[k].append(i)
    return sets


def test_open_partition_small_example():
    part = partition(6, 2)
    assert [list(r) for r in part.index_sets] == [[1, 2], [4, 5]]


def test_open_partition_trading_day():
    part = partition(23_400, 1560)
    sizes = part.sizes
    assert set(sizes.tolist()) <= {14, 15}
    assert sizes.sum() >= 23_400 - 1560 - 1
    assert [list(r) for r in part.index_sets[:3]] == [list(s) for s in
                                                      oracle_index_sets(23_400, 1560, "open")[:3]]


def test_left_partition_trading_day():
    part = partition(23_400, 1560, "left")
    assert np.all(part.sizes == 15)
    assert part.starts[0] == 0 and part.stops[-1] == 23_400


def test_degenerate_partition_rejected():
    with pytest.raises(ValueError):
        partition(4, 4)
    with pytest.raises(ValueError):
        partition(100, 1)
    with pytest.raises(ValueError):
        partition(10, 2, boundary="closed")


@given(st.integers(4, 400), st.integers(2, 60), st.sampled_from(["open", "left"]))
def test_partition_matches_enumeration(n, inv_h, boundary):
    assume(n // inv_h >= 2)
    part = partition(n, inv_h, boundary)
    expected = oracle_index_sets(n, inv_h, boundary)
    assert [list(r) for r in part.index_sets] == expected
    flat = np.concatenate([np.arange(a, b) for a, b in zip(part.starts, part.stops)])
    assert len(np.unique(flat)) == len(flat)
    assert np.all(part.sizes >= 1)
    excluded = sorted(set(range(n + 1)) - set(flat.tolist()))
    if boundary == "open":
        assert excluded == [i for i in range(n + 1) if (i * inv_h) % n == 0]
    else:
        assert excluded == [n]


def test_block_minima_example():
    y = np.array([9, 5, 3, 7, 2, 6, 8], dtype=float)
    lm = local_minima(y, partition(6, 2))
    np.testing.assert_array_equal(lm.m, [3, 2])
    np.testing.assert_array_equal(lm.diffs, [-1])


def test_constant_series():
    lm = local_minima(np.full(61, 2.5), partition(60, 6))
    np.testing.assert_array_equal(lm.m, 2.5)
    np.testing.assert_array_equal(lm.diffs, 0.0)


def test_increasing_series_picks_first_index():
    y = np.cumsum(np.random.default_rng(0).random(91)) + 1.0
    part = partition(90, 9)
    lm = local_minima(y, part)
    np.testing.assert_array_equal(lm.m, y[part.starts])
    assert np.all(lm.diffs > 0)


@given(st.integers(6, 300), st.integers(2, 30), st.sampled_from(["open", "left"]),
       st.integers(0, 2 ** 32))
def test_minima_match_brute_scan(n, inv_h, boundary, seed):
    assume(n // inv_h >= 2)
    y = np.random.default_rng(seed).standard_normal(n + 1)
    part = partition(n, inv_h, boundary)
    lm = local_minima(y, part)
    for k, idx in enumerate(part.index_sets):
        assert lm.m[k] == min(y[i] for i in idx)
        assert np.all(lm.m[k] <= y[list(idx)])
    np.testing.assert_array_equal(lm.diffs, lm.m[1:] - lm.m[:-1])


def test_batched_minima_match_rows():
    y = np.random.default_rng(1).standard_normal((4, 151))
    part = partition(150, 10, "left")
    batch = block_minima(y, part)
    for r in range(4):
        np.testing.assert_array_equal(batch[r], local_minima(y[r], part).m)


def test_minima_csv(tmp_path):
    lm = local_minima(np.array([9, 5, 3, 7, 2, 6, 8], dtype=float), partition(6, 2))
    fname = tmp_path / "minima.csv"
    lm.write_csv(fname)
    assert fname.read_text().splitlines() == ["k,block_start_t,m_k,diff_k", "0,0.0,3.0,",
                                              "1,0.5,2.0,-1.0"]


def test_length_mismatch():
    with pytest.raises(ValueError):
        local_minima(np.zeros(10), partition(6, 2))


# ---------------------------------------------------------------- noise level

def test_noise_level_alternating_series():
    c, n = 0.25, 100
    y = np.where(np.arange(n + 1) % 2 == 0, 0.0, c)
    assert estimate_noise_level(y) == pytest.approx(np.sqrt(2) / c, rel=1e-12)


def test_noise_level_constant_series_rejected():
    with pytest.raises(ValueError):
        estimate_noise_level(np.full(50, 3.0))


@given(st.floats(1e-3, 1e3), st.integers(0, 2 ** 32))
def test_noise_level_scale_equivariance(c, seed):
    y = np.random.default_rng(seed).exponential(size=200)
    assert estimate_noise_level(c * y) == pytest.approx(estimate_noise_level(y) / c, rel=1e-9)


@given(st.floats(-1e3, 1e3), st.integers(0, 2 ** 32))
def test_noise_level_translation_invariance(a, seed):
    y = np.random.default_rng(seed).exponential(size=200)
    assert estimate_noise_level(y + a) == pytest.approx(estimate_noise_level(y), rel=1e-6)


def test_pure_noise_recovers_eta():
    eps = NoiseConfig().sample(rng.stream(0), 23_401)
    assert estimate_noise_level(eps) == pytest.approx(1e4, rel=0.02)


def _simulated_days(days):
    n, noise, cfg = 23_400, NoiseConfig(), SvModelConfig()
    for day in range(days):
        path = simulate_path(cfg, n, seed=day)
        yield iteration_prices(path.spot_var, noise, None, seed=day, iteration=0)


def test_literal_noise_level_is_biased_by_price_variation():
    # sum (dY)^2 also carries the integrated variance, about 1e-4 here
    ratios = np.array([estimate_noise_level(y) for y in _simulated_days(100)]) / 1e4
    expected = (2 * 23_400 / 1e8 / (2 * 23_400 / 1e8 + 1.0e-4)) ** 0.5
    assert abs(ratios.mean() - expected) < 0.01


def test_debiased_noise_level_is_centered():
    ratios = np.array([estimate_noise_level(y, debias=True) for y in _simulated_days(300)]) / 1e4
    assert abs(ratios.mean() - 1.0) < 0.005
    assert ratios.std() < 0.015
