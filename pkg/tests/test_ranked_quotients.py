import math

import numpy as np
import pytest

from nse.distributions import DistributionSpec
from nse.errors import DataError, EmptyIndexSetError, ParameterDomainError
from nse.ranked_quotients import (IndexSet, OrderedSample, adaptive_band, g_loss, max_relative_error, mrq,
                                  order_stats, simulate_quotients, thresholded_mrq)
from nse.rng import RngSeed


def test_order_stats_sorts_and_is_idempotent():
    ordered = order_stats([3.0, 1.0, 2.0])
    np.testing.assert_array_equal(ordered.values, [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(order_stats(ordered.values).values, ordered.values)
    assert len(ordered) == 3


@pytest.mark.parametrize("values, index", [([1.0, 0.0, 2.0], 1), ([1.0, 2.0, -1.0], 2), ([np.inf, 1.0], 0)])
def test_order_stats_rejects_nonpositive_or_nonfinite(values, index):
    with pytest.raises(DataError) as info:
        order_stats(values)
    assert info.value.index == index


def test_ordered_sample_is_read_only_and_scales():
    ordered = order_stats([2.0, 1.0])
    with pytest.raises(ValueError):
        ordered.values[0] = 5.0
    np.testing.assert_array_equal((3 * ordered).values, [3.0, 6.0])
    with pytest.raises(DataError):
        OrderedSample(np.array([2.0, 1.0]))


@pytest.mark.parametrize("text", ["full", "left:5", "right:3", "mid:0.1:0.9", "mid:auto", "explicit:1,4,7"])
def test_index_set_text_form_round_trips(text):
    assert str(IndexSet.parse(text)) == text


@pytest.mark.parametrize("text", ["left", "left:0", "mid:0.9:0.1", "explicit:0,2", "everything", "right:x"])
def test_index_set_rejects_malformed_text(text):
    with pytest.raises(ParameterDomainError):
        IndexSet.parse(text)


def test_index_set_resolution():
    np.testing.assert_array_equal(IndexSet.full().resolve(4), [0, 1, 2, 3])
    np.testing.assert_array_equal(IndexSet.left(2).resolve(5), [0, 1])
    np.testing.assert_array_equal(IndexSet.right(2).resolve(5), [3, 4])
    np.testing.assert_array_equal(IndexSet.explicit([3, 1]).resolve(5), [0, 2])
    # ranks strictly between 0.2 n and 0.8 n
    np.testing.assert_array_equal(IndexSet.middle(0.2, 0.8).resolve(10), [2, 3, 4, 5, 6])


def test_empty_index_sets_raise():
    with pytest.raises(EmptyIndexSetError):
        IndexSet.left(6).resolve(5)
    with pytest.raises(EmptyIndexSetError):
        IndexSet.explicit([9]).resolve(5)
    with pytest.raises(EmptyIndexSetError):
        IndexSet.middle(0.4, 0.45).resolve(10)
    with pytest.raises(EmptyIndexSetError):
        adaptive_band(2)


def test_adaptive_band_shrinks_with_n():
    a1, b1 = adaptive_band(1000)
    a2, _ = adaptive_band(100_000)
    assert 0 < a2 < a1 < 0.5
    assert b1 == pytest.approx(1 - a1)
    assert a1 == pytest.approx(math.sqrt(math.log(1000) * math.log(math.log(1000)) / 1000))


def test_mrq_reference_values(xyz):
    x, y = xyz
    pair = mrq(x, x)
    assert (pair.q1, pair.q2) == (1.0, 1.0)
    pair = mrq(2 * y, y)
    assert (pair.q1, pair.q2) == (2.0, 0.5)
    pair = mrq(x, y)
    assert pair.q1 == pytest.approx(1.5)
    assert pair.q2 == pytest.approx(2.0)
    assert pair.loss == pytest.approx(2.0)


def test_mrq_bounds_every_selected_ratio():
    x = order_stats(np.random.default_rng(0).exponential(size=50))
    y = order_stats(np.random.default_rng(1).exponential(size=50))
    lam = IndexSet.middle(0.1, 0.9)
    pair = mrq(x, y, lam)
    ratios = x.values[lam.resolve(50)] / y.values[lam.resolve(50)]
    assert np.all(ratios <= pair.q1) and np.all(1 / ratios <= pair.q2)
    assert pair.q1 * pair.q2 >= 1.0


def test_mrq_needs_equal_lengths():
    with pytest.raises(ParameterDomainError):
        mrq([1.0, 2.0], [1.0, 2.0, 3.0])


def test_thresholded_mrq(xyz):
    x, y = xyz
    assert thresholded_mrq(x, y, 1.5, 2.5).q1 == pytest.approx(1.25)
    pair = thresholded_mrq(x, y, 10.0, 20.0)
    assert (pair.q1, pair.q2) == (1.0, 1.0)
    loose = thresholded_mrq(x, y, 1e-9, 1e9)
    assert (loose.q1, loose.q2) == (mrq(x, y).q1, mrq(x, y).q2)
    with pytest.raises(ParameterDomainError):
        thresholded_mrq(x, y, 2.0, 2.0)


def test_g_loss():
    assert g_loss(1.0, 1.0) == 1.0
    assert g_loss(2.0, 0.5) == 2.0
    assert g_loss(0.25, 1.5) == 4.0
    with pytest.raises(ParameterDomainError):
        g_loss(0.0, 1.0)


def test_max_relative_error(xyz):
    x, y = xyz
    assert max_relative_error(y, y) == 0.0
    assert max_relative_error(1.1 * y, y) == pytest.approx(0.1, abs=1e-15)
    assert max_relative_error(x, y) == pytest.approx(0.5)


def test_simulate_quotients_is_seed_deterministic():
    q1a, q2a = simulate_quotients(20, IndexSet.full(), 200, RngSeed(9))
    q1b, q2b = simulate_quotients(20, IndexSet.full(), 200, RngSeed(9))
    np.testing.assert_array_equal(q1a, q1b)
    np.testing.assert_array_equal(q2a, q2b)
    assert q1a.shape == (200,)
    assert np.all(q1a * q2a >= 1.0 - 1e-12)


def test_simulated_full_law_at_one_matches_one_over_n_plus_one():
    n, reps = 10, 40_000
    q1, _ = simulate_quotients(n, IndexSet.full(), reps, RngSeed(2024))
    p = 1 / (n + 1)
    assert abs(np.mean(q1 <= 1.0) - p) < 4 * math.sqrt(p * (1 - p) / reps)


def test_left_law_uses_spacings_and_matches_closed_form():
    # R_1(t) = t / (1 + t) for the ratio of two minima
    q1, _ = simulate_quotients(500, IndexSet.left(1), 40_000, RngSeed(77))
    assert np.mean(q1 <= 2.0) == pytest.approx(2 / 3, abs=0.01)


def test_non_exponential_parents_are_simulated_directly():
    uniform = DistributionSpec.of("uniform", low=1.0, high=2.0)
    q1, q2 = simulate_quotients(30, IndexSet.left(3), 100, RngSeed(4), uniform, uniform)
    assert np.all(q1 < 2.0) and np.all(q2 < 2.0)


def _fuzzed_pairs(count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(1, 40))
        yield n, order_stats(rng.lognormal(size=n)), order_stats(rng.lognormal(size=n)), rng


def test_mrq_is_symmetric_in_its_arguments():
    for n, x, y, rng in _fuzzed_pairs(2000):
        lam = IndexSet.explicit(sorted(rng.choice(np.arange(1, n + 1), size=int(rng.integers(1, n + 1)),
                                                  replace=False)))
        forward, backward = mrq(x, y, lam), mrq(y, x, lam)
        assert forward.q1 == backward.q2
        assert forward.q2 == backward.q1
        assert forward.q1 * forward.q2 >= 1.0 - 1e-12


def test_quotients_grow_with_the_index_set():
    for n, x, y, rng in _fuzzed_pairs(500, seed=1):
        ranks = np.arange(1, n + 1)
        wide = rng.choice(ranks, size=int(rng.integers(1, n + 1)), replace=False)
        narrow = wide[: int(rng.integers(1, wide.size + 1))]
        small, large = mrq(x, y, IndexSet.explicit(narrow)), mrq(x, y, IndexSet.explicit(wide))
        assert small.q1 <= large.q1
        assert small.q2 <= large.q2
        assert small.loss <= large.loss
        assert large.loss <= mrq(x, y, IndexSet.full()).loss
    x, y = np.arange(1.0, 11.0), order_stats(np.arange(10.0, 0.0, -1.0) ** 0.5)
    losses = [mrq(x, y, IndexSet.left(ell)).loss for ell in range(1, 11)]
    assert all(a <= b for a, b in zip(losses, losses[1:]))


def test_quotients_are_scale_invariant():
    for n, x, y, rng in _fuzzed_pairs(500, seed=2):
        c = float(rng.lognormal(sigma=3.0))
        base, scaled = mrq(x, y), mrq(c * x, c * y)
        assert scaled.q1 == pytest.approx(base.q1, rel=1e-12)
        assert scaled.q2 == pytest.approx(base.q2, rel=1e-12)
    ordered_x, ordered_y = order_stats([1.0, 2.0, 3.0]), order_stats([2.0, 2.0, 2.0])
    assert mrq(7.5 * ordered_x, 7.5 * ordered_y).q1 == pytest.approx(1.5, rel=1e-12)


def test_middle_ranks_degenerate_to_one():
    q1, q2 = simulate_quotients(10_000, IndexSet.middle(0.1, 0.9), 20, RngSeed(41))
    assert np.sum(np.abs(q1 - 1) < 0.2) >= 19
    assert np.sum(np.abs(q2 - 1) < 0.2) >= 19


@pytest.mark.slow
def test_middle_ranks_degenerate_to_one_at_scale():
    q1, _ = simulate_quotients(100_000, IndexSet.middle(0.1, 0.9), 100, RngSeed(42))
    assert np.sum(np.abs(q1 - 1) < 0.07) >= 95


def test_fixed_right_end_degenerates_slowly():
    small, _ = simulate_quotients(100, IndexSet.right(5), 200, RngSeed(43))
    large, _ = simulate_quotients(10_000, IndexSet.right(5), 200, RngSeed(44))
    assert np.median(np.abs(large - 1)) < np.median(np.abs(small - 1))
    assert np.median(np.abs(large - 1)) < 0.3


@pytest.mark.slow
def test_fixed_right_end_degenerates_at_scale():
    q1, _ = simulate_quotients(100_000, IndexSet.right(5), 100, RngSeed(45))
    # the deviation shrinks like 1 / log n
    assert np.median(np.abs(q1 - 1)) < 0.25
    assert np.median(np.abs(q1 - 1)) * math.log(100_000) < 3.0


def test_rate_shift_moves_the_middle_limit():
    fast = DistributionSpec.of("exponential", rate=2.0)
    unit = DistributionSpec.template("unit_exponential")
    q1, q2 = simulate_quotients(10_000, IndexSet.middle(0.1, 0.9), 20, RngSeed(46), fast, unit)
    assert np.sum(np.abs(q1 - 0.5) < 0.1) >= 19
    assert np.sum(np.abs(q2 - 2.0) < 0.4) >= 19


@pytest.mark.slow
def test_rate_shift_moves_the_middle_limit_at_scale():
    fast = DistributionSpec.of("exponential", rate=2.0)
    unit = DistributionSpec.template("unit_exponential")
    q1, _ = simulate_quotients(100_000, IndexSet.middle(0.1, 0.9), 100, RngSeed(47), fast, unit)
    assert np.sum(np.abs(q1 - 0.5) < 0.035) >= 95


@pytest.mark.parametrize("rate", [0.5, 1.0, 2.0])
def test_frechet_reference_cannot_match_both_quotients(rate):
    exponential = DistributionSpec.of("exponential", rate=rate)
    frechet = DistributionSpec.template("unit_frechet")
    q1, q2 = simulate_quotients(1000, IndexSet.full(), 20, RngSeed(48), exponential, frechet)
    # no rescaling of the exponential brings both quotients to one
    assert np.all(np.maximum(np.abs(q1 - 1), np.abs(q2 - 1)) > 0.2)
    if rate == 1.0:
        assert np.all(np.minimum(np.abs(q1 - 1), np.abs(q2 - 1)) > 0.2)


@pytest.mark.slow
def test_frechet_reference_cannot_match_both_quotients_at_scale():
    exponential = DistributionSpec.template("unit_exponential")
    frechet = DistributionSpec.template("unit_frechet")
    q1, q2 = simulate_quotients(100_000, IndexSet.full(), 100, RngSeed(49), exponential, frechet)
    assert np.sum(np.minimum(np.abs(q1 - 1), np.abs(q2 - 1)) > 0.2) >= 95
