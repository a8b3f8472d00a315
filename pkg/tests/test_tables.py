from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reduced_rejection.errors import AllZeroWeights, NegativeWeight
from reduced_rejection.rng import RngStream
from reduced_rejection.stats import chi_square_gof
from reduced_rejection.tables import (
    alias_build,
    alias_probabilities,
    alias_sample,
    alias_sample_many,
    marsaglia_build,
    marsaglia_capacity,
    marsaglia_probabilities,
    marsaglia_sample,
    marsaglia_sample_many,
    neumaier_sum,
)

weights = st.lists(st.integers(0, 1000), min_size=1, max_size=40).filter(lambda w: sum(w) > 0)


def test_dyadic_weights_are_exact_in_the_table():
    t = marsaglia_build([1, 1, 2, 4])
    assert marsaglia_probabilities(t) == [Fraction(1, 8), Fraction(1, 8), Fraction(1, 4), Fraction(1, 2)]
    assert t.fx[0] == 0.0  # nothing left for the residual bucket


def test_levels_hold_the_digits():
    # 3/4 is 0.C0 in base 256, so level 0 holds 0xC0 = 192 copies of index 0
    t = marsaglia_build([3, 1])
    lvl0 = t.tab[t.off[0] : t.off[0] + (int(t.thr[0]) >> 24)]
    assert np.count_nonzero(lvl0 == 0) == 192
    assert np.count_nonzero(lvl0 == 1) == 64


def test_non_dyadic_weights_within_quantum():
    w = [1, 1, 1, 7, 13]
    probs = marsaglia_probabilities(marsaglia_build(w))
    assert sum(probs) == 1
    for p, wi in zip(probs, w):
        assert abs(p - Fraction(wi, 23)) < Fraction(1, 2**32)


@given(weights)
def test_marsaglia_probabilities_sum_to_one(w):
    t = marsaglia_build(w)
    probs = marsaglia_probabilities(t)
    assert sum(probs) == 1
    for p, wi in zip(probs, w):
        if wi == 0:
            assert p == 0
        assert abs(float(p) - wi / sum(w)) < 1e-9


@given(weights)
def test_alias_probabilities(w):
    probs = alias_probabilities(alias_build(w))
    assert np.allclose(probs, np.array(w) / sum(w), atol=1e-12)


def test_capacity_bound():
    assert marsaglia_capacity(3, 4, 8) == 3 * 255 * 3 + 256
    # a level never needs more slots than it has digit values
    assert marsaglia_capacity(10**6, 4, 8) == 256 + 65536 + 2**24 + 255 * 10**6


@pytest.mark.parametrize("build, draw", [(marsaglia_build, marsaglia_sample_many), (alias_build, alias_sample_many)])
def test_sampling_distribution(build, draw):
    w = np.array([5, 0, 1, 3, 9, 2], dtype=float)
    counts = np.bincount(draw(build(w), 200_000, RngStream(3)), minlength=w.size)
    assert counts[1] == 0
    assert chi_square_gof(counts, w).passes()


def test_single_draws_match_bulk():
    w = [2, 7, 1]
    for build, one, many in ((marsaglia_build, marsaglia_sample, marsaglia_sample_many), (alias_build, alias_sample, alias_sample_many)):
        t = build(w)
        a = RngStream(9)
        singles = [one(t, a) for _ in range(50)]
        assert singles == many(t, 50, RngStream(9)).tolist()


@pytest.mark.parametrize("build", [marsaglia_build, alias_build])
def test_bad_weights(build):
    with pytest.raises(AllZeroWeights):
        build([0, 0])
    with pytest.raises(AllZeroWeights):
        build([])
    with pytest.raises(NegativeWeight):
        build([1, -1])


def test_too_many_digits():
    with pytest.raises(ValueError):
        marsaglia_build([1, 2], levels=7, bits=8)


@settings(max_examples=50)
@given(st.lists(st.floats(-1e6, 1e6), max_size=50))
def test_neumaier_sum_matches_fsum(xs):
    import math

    assert neumaier_sum(np.array(xs)) == pytest.approx(math.fsum(xs), abs=1e-6)
