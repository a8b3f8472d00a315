import math

import numpy as np
import pytest

from reduced_rejection import kmc
from reduced_rejection.errors import InvalidParams
from reduced_rejection.kmc import ParticleSystem, expected_g, run
from reduced_rejection.rng import RngStream
from reduced_rejection.stats import chi_square_gof, ks_statistic, ks_threshold


def test_expected_g_values():
    assert expected_g(100, 0.5) == pytest.approx(59.8, abs=1e-12)
    assert expected_g(100, 0.5, "sum_of_squares") == pytest.approx(42 + 2 / 3, abs=1e-12)
    assert expected_g(10**4, 0.5) == pytest.approx(5999.8, abs=1e-9)


def test_expected_g_matches_two_particle_integral():
    # N = 2: stationary density prop. to (x y)^a (x y)^-a = 1, so E[x + y] = 1
    from scipy.integrate import dblquad

    assert expected_g(2, 0.3) == 1.0
    assert expected_g(2, 0.3, "sum_of_squares") == pytest.approx(dblquad(lambda y, x: x * x + y * y, 0, 1, 0, 1)[0])


def test_expected_g_matches_three_particle_integral():
    from scipy.integrate import tplquad

    a = 0.5

    def w(z, y, x):
        return (x * y * z) ** a * ((x * y) ** -a + (x * z) ** -a + (y * z) ** -a)

    norm = tplquad(w, 0, 1, 0, 1, 0, 1)[0]
    mean = tplquad(lambda z, y, x: (x + y + z) * w(z, y, x), 0, 1, 0, 1, 0, 1)[0] / norm
    assert expected_g(3, a) == pytest.approx(mean, rel=1e-6)


@pytest.mark.parametrize("args", [(1, 0.5), (10, 0.0), (10, 1.0)])
def test_expected_g_rejects_bad_params(args):
    with pytest.raises(InvalidParams):
        expected_g(*args)
    with pytest.raises(InvalidParams):
        ParticleSystem(*args, RngStream(0))


def test_constructor_validation():
    with pytest.raises(InvalidParams):
        ParticleSystem(3, 0.5, RngStream(0), x=[0.5, 1.0, 0.2])
    with pytest.raises(InvalidParams):
        ParticleSystem(3, 0.5, RngStream(0), backend="direct")
    with pytest.raises(InvalidParams):
        ParticleSystem(3, 0.5, RngStream(0), ar_refresh=-1)
    with pytest.raises(InvalidParams):
        expected_g(5, 0.5, "mean")


def test_initial_state():
    sys_ = ParticleSystem(50, 0.5, RngStream(3))
    assert np.all((sys_.x > 0) & (sys_.x < 1))
    assert sys_.total_rate == pytest.approx(math.fsum(sys_.x**-0.5), rel=1e-14)
    assert sys_.observable("sum") == pytest.approx(sys_.x.sum())
    assert sys_.ar_refresh == 50
    sys_.check_consistency()


def _pair_probs(s, allow_self):
    p = np.outer(s, s)
    if not allow_self:
        np.fill_diagonal(p, 0.0)
    return (p / p.sum()).ravel()


@pytest.mark.parametrize("backend", ["rr", "ar"])
@pytest.mark.parametrize("allow_self", [False, True])
def test_pair_distribution_at_frozen_state(backend, allow_self):
    x = np.array([0.9, 0.002, 0.3, 0.05, 0.6, 0.7])
    sys_ = ParticleSystem(6, 0.5, RngStream(9), x=x, backend=backend, allow_self_pairs=allow_self, reinit_threshold=2)
    pairs = sys_.sample_pairs(200_000)
    counts = np.bincount(pairs[:, 0] * 6 + pairs[:, 1], minlength=36)
    assert chi_square_gof(counts, _pair_probs(sys_.s, allow_self)).passes()


def test_pair_distribution_small_integer_rates():
    # s = [2, 1, 1] gives P(k, l) = s_k s_l / 6 for k != l
    x = np.array([0.25, 1 - 1e-12, 1 - 1e-12])
    sys_ = ParticleSystem(3, 0.5, RngStream(1), x=x)
    pairs = sys_.sample_pairs(60_000)
    counts = np.bincount(pairs[:, 0] * 3 + pairs[:, 1], minlength=9)
    assert counts[[0, 4, 8]].sum() == 0
    assert chi_square_gof(counts, [0, 2, 2, 2, 0, 1, 2, 1, 0]).passes()


def test_waiting_times_scale_with_total_rate():
    sys_ = ParticleSystem(20, 0.5, RngStream(5))
    scaled = []
    for _ in range(20_000):
        s = sys_.total_rate
        ev = sys_.step()
        scaled.append(ev.dt * s * s)
    scaled = np.array(scaled)
    assert ks_statistic(scaled, lambda v: 1 - np.exp(-v)).statistic < ks_threshold(scaled.size)


def test_step_renews_exactly_the_pair():
    sys_ = ParticleSystem(30, 0.5, RngStream(6))
    for _ in range(200):
        before = sys_.x.copy()
        t0 = sys_.t
        ev = sys_.step(check=True)
        assert ev.k != ev.l
        changed = set(np.flatnonzero(before != sys_.x).tolist())
        assert changed <= {ev.k, ev.l}
        assert sys_.t == pytest.approx(t0 + ev.dt)
    assert sys_.interaction_count == 200


def test_excess_set_grows_by_at_most_two():
    sys_ = ParticleSystem(200, 0.5, RngStream(7), reinit_threshold=30)
    w = sys_.weights
    for _ in range(3000):
        size, reinits = w.excess_size, w.reinit_count
        sys_.step()
        if w.reinit_count == reinits:
            assert w.excess_size <= size + 2
        # a full set is refreshed lazily, right before the next draw
        assert w.excess_size <= 30 + 2
    assert w.reinit_count > 0


@pytest.mark.parametrize("backend", ["rr", "ar"])
def test_consistency_after_many_steps(backend):
    sys_ = ParticleSystem(100, 0.5, RngStream(8), backend=backend, reinit_threshold=10)
    sys_.advance(250_000)
    sys_.check_consistency()
    assert sys_.observable("sum") == pytest.approx(math.fsum(sys_.x), rel=1e-12)
    assert sys_.observable("sum_of_squares") == pytest.approx(math.fsum(sys_.x**2), rel=1e-12)
    if backend == "rr":
        assert np.array_equal(sys_.weights.p, sys_.s)


def test_ar_height_modes():
    lazy = ParticleSystem(40, 0.5, RngStream(2), backend="ar", ar_refresh=0)
    eager = ParticleSystem(40, 0.5, RngStream(2), backend="ar", ar_refresh=1)
    prev = lazy._obs[kmc.O_AR_BOUND]
    for _ in range(500):
        lazy.step()
        eager.step()
        bound = lazy._obs[kmc.O_AR_BOUND]
        assert bound >= prev and bound >= lazy.s.max()
        prev = bound
        assert eager._obs[kmc.O_AR_BOUND] == eager.s.max()


def test_rr_uses_fewer_proposals_with_singular_rates():
    x = np.full(50, 0.5)
    x[0] = 1e-4
    out = {}
    for b in ("rr", "ar"):
        sys_ = ParticleSystem(50, 0.5, RngStream(10), x=x.copy(), backend=b)
        sys_.sample_pairs(20_000)
        out[b] = sys_.proposals_total / sys_.selections
    assert out["rr"] < out["ar"]


@pytest.mark.parametrize("backend", ["rr", "ar"])
def test_short_run_near_stationary_values(backend):
    sys_ = ParticleSystem(100, 0.5, RngStream(12), backend=backend)
    res = run(sys_, 300_000, kmc.OBSERVABLES, record_every=100_000)
    assert [tp.interaction_count for tp in res.trace] == [100_000, 200_000, 300_000]
    for kind in kmc.OBSERVABLES:
        assert res.estimates[kind].mean == pytest.approx(expected_g(100, 0.5, kind), rel=0.05)


def test_run_checkpoints_and_validation():
    sys_ = ParticleSystem(10, 0.5, RngStream(1))
    res = run(sys_, 1000, "sum", checkpoints=[10, 100, 5000])
    assert [tp.interaction_count for tp in res.trace] == [10, 100, 1000]
    assert res.estimates["sum"].series.shape == (3, 2)
    with pytest.raises(InvalidParams):
        run(sys_, 0)
    with pytest.raises(InvalidParams):
        run(sys_, 10, "mean")


def test_runs_are_reproducible():
    def go():
        sys_ = ParticleSystem(100, 0.5, RngStream(99), reinit_threshold=20)
        res = run(sys_, 20_000, kmc.OBSERVABLES)
        return sys_.x.copy(), res.estimates["sum"].mean, sys_.proposals_total, sys_.reinit_count

    a, b = go(), go()
    assert np.array_equal(a[0], b[0])
    assert a[1:] == b[1:]
