import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reduced_rejection.core import Branch, DiscreteTarget
from reduced_rejection.dynamic import DynamicWeights, build, default_threshold, sample_target
from reduced_rejection.errors import (
    AllZeroWeights,
    DegenerateTarget,
    IndexOutOfRange,
    MalformedTarget,
    NegativeWeight,
    NotEnclosing,
)
from reduced_rejection.rng import RngStream
from reduced_rejection.stats import chi_square_gof, chi_square_two_sample


def test_fresh_state():
    dw = DynamicWeights([1.0, 2.0, 3.0])
    assert dw.q.tolist() == [1.0, 2.0, 3.0]
    assert dw.excess_set == set()
    assert (dw.sum_p, dw.sum_q, dw.excess_sum) == (6.0, 6.0, 0.0)
    assert dw.reinit_threshold == default_threshold(3) == 7
    dw.check_invariants()


def test_update_into_and_out_of_excess():
    dw = DynamicWeights([1.0, 2.0, 3.0], 2)
    dw.update_weight(0, 4.0)
    assert dw.excess_set == {0}
    assert (dw.sum_p, dw.sum_q, dw.excess_sum) == (9.0, 6.0, 3.0)
    # bucketed bound: the power of two above the largest excess
    assert dw.excess_bound == 4.0
    dw.update_weight(0, 0.5)
    assert dw.excess_set == set()
    assert dw.excess_sum == 0.0
    assert dw.sum_p == 5.5
    assert dw.q.tolist() == [1.0, 2.0, 3.0]
    dw.check_invariants()


def test_monotone_bound_never_drops():
    dw = DynamicWeights([1.0, 2.0, 3.0], 2, excess_bound="monotone")
    dw.update_weight(0, 4.0)
    assert dw.excess_bound == 3.0
    dw.update_weight(0, 1.5)
    assert dw.excess_bound == 3.0
    dw.reinitialize()
    assert dw.excess_bound == 0.0


def test_bucketed_bound_follows_the_max():
    dw = DynamicWeights([1.0] * 4, 4)
    dw.update_weight(0, 101.0)
    dw.update_weight(1, 3.0)
    assert dw.excess_bound == 128.0
    dw.update_weight(0, 1.0)
    # the remaining excess is exactly 2, which sits in the bucket [2, 4)
    assert dw.excess_bound == 4.0


def test_reinit_when_excess_set_exceeds_threshold():
    dw = DynamicWeights([1.0, 1.0, 1.0], 1)
    dw.update_weight(0, 2.0)
    assert dw.reinit_count == 0 and dw.excess_size == 1
    dw.update_weight(1, 2.0)
    assert dw.reinit_count == 1
    assert dw.excess_size == 0
    assert dw.q.tolist() == [2.0, 2.0, 1.0]


def test_views_are_read_only():
    dw = DynamicWeights([1.0, 2.0])
    with pytest.raises(ValueError):
        dw.p[0] = 5.0


@pytest.mark.parametrize(
    "w, err",
    [([], AllZeroWeights), ([0.0, 0.0], AllZeroWeights), ([1.0, -1.0], NegativeWeight), ([np.inf], NegativeWeight)],
)
def test_constructor_errors(w, err):
    with pytest.raises(err):
        DynamicWeights(w)


def test_update_errors():
    dw = DynamicWeights([1.0, 2.0])
    with pytest.raises(IndexOutOfRange):
        dw.update_weight(2, 1.0)
    with pytest.raises(NegativeWeight):
        dw.update_weight(0, -1.0)
    with pytest.raises(NegativeWeight):
        dw.update_weight(0, float("nan"))
    with pytest.raises(IndexOutOfRange):
        dw.update_many([0, 5], [1.0, 1.0])


def test_all_zero_after_updates_is_degenerate(rng):
    dw = DynamicWeights([1.0, 2.0])
    dw.update_many([0, 1], [0.0, 0.0])
    with pytest.raises(DegenerateTarget):
        dw.sample_index(rng)
    dw.update_weight(1, 3.0)
    assert dw.sample_index(rng).value == 1


def test_zero_snapshot_uses_excess_only(rng):
    dw = DynamicWeights([1.0, 0.0], 5)
    dw.update_weight(0, 0.0)
    dw.reinitialize()  # snapshot of all zeros: no proposal table
    dw.update_weight(1, 2.0)
    rec = dw.sample_index(rng)
    assert rec.value == 1
    assert rec.branch is Branch.EXCESS_DIRECT


@pytest.mark.parametrize("table", ["marsaglia", "alias"])
@pytest.mark.parametrize("bound", ["bucketed", "monotone"])
def test_distribution_after_updates(table, bound):
    rng = RngStream(5)
    g = np.random.default_rng(5)
    w = g.integers(1, 10, size=30).astype(float)
    dw = DynamicWeights(w, 12, table=table, excess_bound=bound)
    for _ in range(200):
        i = int(g.integers(30))
        w[i] = float(g.integers(0, 20))
        dw.update_weight(i, w[i])
    dw.check_invariants()
    counts = np.bincount(dw.sample_many(200_000, rng).values, minlength=30)
    assert np.all(counts[w == 0] == 0)
    assert chi_square_gof(counts, w).passes()


def test_alternate_counts_each_configuration():
    dw = DynamicWeights([1.0, 1.0, 1.0], 1)
    a = ([0, 1, 2], [6.0, 1.0, 1.0])
    b = ([0, 1, 2], [0.0, 1.0, 3.0])
    counts = dw.alternate(a, b, 50_000, RngStream(2))
    assert chi_square_gof(counts[0], a[1]).passes()
    assert chi_square_gof(counts[1], b[1]).passes()


def test_rejection_rate_trigger(rng):
    dw = DynamicWeights([1.0] * 4, 4, excess_bound="monotone", rejection_reinit=0.9)
    dw.update_weight(0, 100.0)
    dw.update_weight(0, 1.25)  # excess 0.25 under a bound of 99
    for _ in range(200):
        dw.sample_index(rng)
    assert dw.reinit_count >= 1


def test_single_sample_matches_bulk():
    w = [3.0, 1.0, 4.0, 1.0, 5.0]
    a, b = DynamicWeights(w, 2), DynamicWeights(w, 2)
    for dw in (a, b):
        dw.update_many([0, 2], [9.0, 0.5])
    rs = RngStream(8)
    singles = [a.sample_index(rs).value for _ in range(100)]
    assert singles == b.sample_many(100, RngStream(8)).values.tolist()


def test_build_alias():
    assert build([1.0, 2.0], 3).reinit_threshold == 3


# ---------------------------------------------------------------- static targets


@pytest.mark.parametrize(
    "p, q, method",
    [
        ([3, 1, 2], [1, 2, 2], "algorithm_one"),
        ([1, 1, 0], [0.5, 3, 1], "algorithm_two"),
        ([1, 2, 0], [2, 2, 1], "acceptance_rejection"),
        ([5, 0, 1], [1, 1, 1], "reduced_rejection"),
    ],
)
def test_sample_target(p, q, method):
    t = DiscreteTarget(p, q)
    out = sample_target(t, 100_000, RngStream(4), method)
    counts = np.bincount(out.values, minlength=len(p))
    assert chi_square_gof(counts, p).passes()
    assert out.meta["samples"] == 100_000


def test_sample_target_branch_frequencies():
    from reduced_rejection.core import branch_probabilities

    t = DiscreteTarget([3, 1, 2], [1, 2, 2])
    out = sample_target(t, 100_000, RngStream(6), "algorithm_one")
    exact = branch_probabilities(t)
    got = out.branch_counts()
    order = [Branch.EXCESS_DIRECT, Branch.Q_ACCEPT_L, Branch.Q_ACCEPT_S, Branch.REPLACED_BY_EXCESS]
    assert chi_square_gof([got[b] for b in order], [float(exact[b]) for b in order]).passes()


def test_algorithm_two_mean_proposals():
    t = DiscreteTarget([1, 1], [0.5, 3])
    out = sample_target(t, 100_000, RngStream(7), "algorithm_two")
    # cycles are geometric with success probability I[p] / I[q] = 4/7
    assert abs(out.proposals.mean() - 1.75) < 4 * np.sqrt(0.75 / (4 / 7) ** 2 / 100_000)


def test_sample_target_guards(rng):
    with pytest.raises(MalformedTarget):
        sample_target(DiscreteTarget([1], [2]), 10, rng, "algorithm_one")
    with pytest.raises(MalformedTarget):
        sample_target(DiscreteTarget([2], [1]), 10, rng, "algorithm_two")
    with pytest.raises(NotEnclosing):
        sample_target(DiscreteTarget([2, 1], [1, 2]), 10, rng, "acceptance_rejection")


# ---------------------------------------------------------------- properties

updates = st.lists(st.tuples(st.integers(0, 11), st.sampled_from([0.0, 0.5, 1.0, 2.0, 3.0, 7.5, 1e-3, 40.0])), max_size=80)


@settings(max_examples=60)
@given(
    st.lists(st.integers(1, 9), min_size=12, max_size=12),
    updates,
    st.integers(1, 12),
    st.sampled_from(["bucketed", "monotone"]),
)
def test_invariants_hold_under_updates(w0, ups, m, bound):
    dw = DynamicWeights(np.array(w0, dtype=float), m, excess_bound=bound)
    p = np.array(w0, dtype=float)
    for i, v in ups:
        dw.update_weight(i, v)
        p[i] = v
        dw.check_invariants()
        assert dw.excess_size <= m
        assert dw.p.tolist() == p.tolist()


@settings(max_examples=40)
@given(st.lists(st.integers(0, 9), min_size=1, max_size=8).filter(any), updates, st.integers(0, 2**32 - 1))
def test_draws_have_positive_weight(w0, ups, seed):
    n = len(w0)
    dw = DynamicWeights(np.array(w0, dtype=float), 2)
    rng = RngStream(seed)
    for i, v in ups:
        dw.update_weight(i % n, v)
        if dw.sum_p > 0:
            z = dw.sample_index(rng).value
            assert dw.p[z] > 0


def test_sums_do_not_drift_over_many_updates():
    g = np.random.default_rng(11)
    n = 100
    dw = DynamicWeights(g.random(n) * 10, 10**9)
    idx = g.integers(0, n, size=10**6)
    w = g.random(10**6) * 10 ** g.uniform(-3, 3, size=10**6)
    dw.update_many(idx, w)
    exact = math.fsum(dw.p)
    assert dw.reinit_count == 0
    assert abs(dw.sum_p - exact) < 1e-6 * exact
    dw.reinitialize()
    assert dw.sum_p == exact


def test_reinit_keeps_distribution():
    w = np.array([5.0, 1.0, 0.0, 2.0])
    dw = DynamicWeights([1.0, 1.0, 1.0, 1.0], 3)
    dw.update_many([0, 2, 3], [5.0, 0.0, 2.0])
    before = np.bincount(dw.sample_many(100_000, RngStream(1)).values, minlength=4)
    dw.reinitialize()
    assert dw.excess_size == 0
    after = np.bincount(dw.sample_many(100_000, RngStream(2)).values, minlength=4)
    assert chi_square_gof(before, w).passes() and chi_square_gof(after, w).passes()
    assert chi_square_two_sample(before, after).passes()


def test_table_backends_agree():
    w = [1.0, 3.0, 0.5, 7.0]
    a = np.bincount(DynamicWeights(w, table="marsaglia").sample_many(100_000, RngStream(3)).values, minlength=4)
    b = np.bincount(DynamicWeights(w, table="alias").sample_many(100_000, RngStream(4)).values, minlength=4)
    assert chi_square_two_sample(a, b).passes()
