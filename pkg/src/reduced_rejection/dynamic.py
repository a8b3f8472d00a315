"""Dynamic weighted index sampling with a frozen proposal snapshot.

:class:`DynamicWeights` keeps the current weights ``p`` and a snapshot ``q``
of ``p`` taken at the last reinitialization. Draws from ``q`` come from a
preprocessed table (Marsaglia by default, alias optionally) that is only
rebuilt on reinitialization; draws from the excess ``p - q`` on
``L = {i : p_i > q_i}`` use acceptance-rejection with a uniform proposal over
the members of ``L`` and a height bound ``B``. Reduced Rejection glues the
two together so every draw is exact for the *current* ``p``.

A weight update costs O(1): sums are adjusted with compensated accumulation,
``L`` membership is toggled in a swap-remove array, and ``B`` follows the
largest excess through counts of excess values per binary exponent (so
``B`` is at most twice the true maximum). Once ``|L|`` exceeds the threshold
``M`` the snapshot is refreshed.

The state lives in :class:`DWState`, three flat numpy arrays, so the
jitted simulators in :mod:`reduced_rejection.kmc` and
:mod:`reduced_rejection.ssa` can update and sample it without leaving
compiled code.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from numba import njit

from .core import (
    BRANCH_CODES,
    DEFAULT_CYCLE_CAP,
    BulkSample,
    DiscreteTarget,
    SampleRecord,
)
from .errors import (
    AllZeroWeights,
    DegenerateTarget,
    IndexOutOfRange,
    MalformedTarget,
    NegativeWeight,
    NonTermination,
    NotEnclosing,
)
from .rng import RngStream
from .tables import (
    DEFAULT_BITS,
    DEFAULT_LEVELS,
    _alias_draw,
    _alias_rebuild,
    _mt_residual,
    _mt_rebuild,
    marsaglia_allocate,
    neumaier_sum,
)

# float slots
F_SUM_P = 0  # with compensation in F_SUM_P + 1
F_SUM_Q = 2
F_EXC = 3  # with compensation in F_EXC + 1
F_BOUND = 5
F_REJ_THRESHOLD = 6
NF = 7

# integer slots
C_NL = 0
C_M = 1
C_REINIT = 2
C_TABLE = 3  # 0 Marsaglia, 1 alias
C_CAP = 4
C_QDRAWS = 5
C_XTRIALS = 6
C_XDRAWS = 7
C_SAMPLES = 8
C_WIN_TRIALS = 9
C_WIN_REJECTS = 10
C_LAST_BRANCH = 11
C_LAST_PROP = 12
C_LAST_XDRAWS = 13
C_UPDATES = 14
C_LOCKED = 15
C_NPOS = 16
C_TABLE_OK = 17
C_BOUND_MODE = 18  # 0 bucketed, 1 monotone
C_TOP = 19  # highest non-empty excess bucket, -1 when L is empty
# layout: offsets of the per-index blocks inside the two arenas
C_N = 20
C_MEMBERS = 21  # ix: L as a swap-remove array
C_POS = 22  # ix: position in L, -1 outside
C_BUCKET = 23  # ix: exponent bucket of each member of L
C_BCOUNT = 24  # ix: members per bucket
C_MT = 25  # ix: Marsaglia head
C_ALIAS = 26  # ix: alias indices
C_FP = 27  # f: p
C_FQ = 28  # f: q
C_FMT = 29  # f: Marsaglia residual block
C_FALIAS = 30  # f: alias probabilities
C_PENDING = 31  # refresh due before the next draw (threshold or rejection rate)
NC = 32

BOUND_BUCKETED = 0
BOUND_MONOTONE = 1
# Excess values are bucketed by binary exponent; bucket b covers
# [2**(b - BUCKET_OFFSET - 1), 2**(b - BUCKET_OFFSET)).
BUCKET_OFFSET = 1100
N_BUCKETS = 2200

TABLE_MARSAGLIA = 0
TABLE_ALIAS = 1

# branch codes, matching core.BRANCH_CODES
B_EXCESS_DIRECT = 0
B_Q_ACCEPT_L = 1
B_Q_ACCEPT_S = 2
B_REPLACED = 3

# kernel error returns
ERR_DEGENERATE = -1
ERR_CAP = -2

REJECTION_WINDOW = 64


class DWState(NamedTuple):
    """Sampler state in three flat arrays.

    Kernels take the arrays as separate arguments: numba charges a reference
    count round trip per array on every call, and the hot path makes several
    calls per draw. Blocks are located through the layout slots of ``ix``.
    """

    f: np.ndarray  # float64: slots, p, q, Marsaglia residuals, alias probabilities
    ix: np.ndarray  # int64: slots, members, pos, bucket, bcount, Marsaglia head, alias
    tab: np.ndarray  # int32: Marsaglia level tables

    @property
    def n(self) -> int:
        return int(self.ix[C_N])

    def fblock(self, slot: int, size: int | None = None) -> np.ndarray:
        o = int(self.ix[slot])
        return self.f[o : o + (self.n if size is None else size)]

    def iblock(self, slot: int, size: int | None = None) -> np.ndarray:
        o = int(self.ix[slot])
        return self.ix[o : o + (self.n if size is None else size)]

    @property
    def p(self) -> np.ndarray:
        return self.fblock(C_FP)

    @property
    def q(self) -> np.ndarray:
        return self.fblock(C_FQ)

    @property
    def members(self) -> np.ndarray:
        return self.iblock(C_MEMBERS)

    @property
    def pos(self) -> np.ndarray:
        return self.iblock(C_POS)


# ------------------------------------------------------------------ kernels


@njit(cache=True, error_model="numpy")
def _acc(f, k, x):
    s = f[k]
    t = s + x
    if abs(s) >= abs(x):
        f[k + 1] += (s - t) + x
    else:
        f[k + 1] += (x - t) + s
    f[k] = t


@njit(cache=True, error_model="numpy")
def _insert(ix, i):
    nl = ix[C_NL]
    ix[ix[C_MEMBERS] + nl] = i
    ix[ix[C_POS] + i] = nl
    ix[C_NL] = nl + 1


@njit(cache=True, error_model="numpy")
def _remove(ix, i):
    nl = ix[C_NL] - 1
    mb = ix[C_MEMBERS]
    pb = ix[C_POS]
    k = ix[pb + i]
    last = ix[mb + nl]
    ix[mb + k] = last
    ix[pb + last] = k
    ix[pb + i] = -1
    ix[C_NL] = nl


@njit(cache=True, error_model="numpy")
def _bucket_add(ix, i, ex):
    b = math.frexp(ex)[1] + BUCKET_OFFSET
    ix[ix[C_BUCKET] + i] = b
    ix[ix[C_BCOUNT] + b] += 1
    if b > ix[C_TOP]:
        ix[C_TOP] = b


@njit(cache=True, error_model="numpy")
def _bucket_scan(ix, b):
    cb = ix[C_BCOUNT]
    top = b - 1
    while top >= 0 and ix[cb + top] == 0:
        top -= 1
    ix[C_TOP] = top


@njit(cache=True, error_model="numpy")
def _bucket_bound(f, ix):
    top = ix[C_TOP]
    f[F_BOUND] = math.ldexp(1.0, top - BUCKET_OFFSET) if top >= 0 else 0.0


@njit(cache=True, error_model="numpy")
def _clear_buckets(ix):
    cb = ix[C_BCOUNT]
    ix[cb : cb + N_BUCKETS] = 0
    ix[C_TOP] = -1


@njit(cache=True, error_model="numpy")
def _rebuild_table(f, ix, tab):
    total = f[F_SUM_Q]
    n = ix[C_N]
    fq = ix[C_FQ]
    q = f[fq : fq + n]
    if total > 0.0:
        if ix[C_TABLE] == TABLE_ALIAS:
            pb = ix[C_FALIAS]
            ab = ix[C_ALIAS]
            _alias_rebuild(f[pb : pb + n], ix[ab : ab + n], q, total)
        else:
            _mt_rebuild(tab, ix, ix[C_MT], f, ix[C_FMT], q, total)
        ix[C_TABLE_OK] = 1
    else:
        ix[C_TABLE_OK] = 0


@njit(cache=True, error_model="numpy")
def _reinit(f, ix, tab):
    n = ix[C_N]
    fp = ix[C_FP]
    fq = ix[C_FQ]
    pb = ix[C_POS]
    npos = 0
    for i in range(n):
        w = f[fp + i]
        f[fq + i] = w
        ix[pb + i] = -1
        if w > 0.0:
            npos += 1
    s = neumaier_sum(f[fp : fp + n])
    f[F_SUM_P] = s
    f[F_SUM_P + 1] = 0.0
    f[F_SUM_Q] = s
    f[F_EXC] = 0.0
    f[F_EXC + 1] = 0.0
    f[F_BOUND] = 0.0
    ix[C_NL] = 0
    ix[C_NPOS] = npos
    _clear_buckets(ix)
    ix[C_WIN_TRIALS] = 0
    ix[C_WIN_REJECTS] = 0
    _rebuild_table(f, ix, tab)


@njit(cache=True, error_model="numpy")
def _refresh(f, ix, tab):
    _reinit(f, ix, tab)
    ix[C_REINIT] += 1
    ix[C_PENDING] = 0


@njit(cache=True, error_model="numpy")
def _load_proposal(f, ix, tab):
    """Derive sums, ``L`` and the bound from the current ``p`` and ``q``."""
    n = ix[C_N]
    fp = ix[C_FP]
    fq = ix[C_FQ]
    pb = ix[C_POS]
    ix[C_NL] = 0
    _clear_buckets(ix)
    npos = 0
    ex = np.zeros(n)
    bound = 0.0
    for i in range(n):
        ix[pb + i] = -1
        pi = f[fp + i]
        qi = f[fq + i]
        if pi > 0.0:
            npos += 1
        if pi > qi:
            _insert(ix, i)
            ex[i] = pi - qi
            _bucket_add(ix, i, ex[i])
            if ex[i] > bound:
                bound = ex[i]
    ix[C_NPOS] = npos
    f[F_SUM_P] = neumaier_sum(f[fp : fp + n])
    f[F_SUM_P + 1] = 0.0
    f[F_SUM_Q] = neumaier_sum(f[fq : fq + n])
    f[F_EXC] = neumaier_sum(ex)
    f[F_EXC + 1] = 0.0
    f[F_BOUND] = bound
    if ix[C_BOUND_MODE] == BOUND_BUCKETED:
        _bucket_bound(f, ix)
    _rebuild_table(f, ix, tab)


@njit(cache=True, error_model="numpy")
def _update(f, ix, i, w):
    """Set ``p_i = w`` in O(1). Crossing the threshold ``M`` only flags the
    refresh; :func:`_sample` and :func:`_settle` carry it out."""
    fp = ix[C_FP]
    old = f[fp + i]
    if old == w:
        return
    f[fp + i] = w
    ix[C_UPDATES] += 1
    _acc(f, F_SUM_P, -old)
    _acc(f, F_SUM_P, w)
    if old > 0.0:
        ix[C_NPOS] -= 1
    if w > 0.0:
        ix[C_NPOS] += 1
    qi = f[ix[C_FQ] + i]
    bucketed = ix[C_BOUND_MODE] == BOUND_BUCKETED
    if old > qi:
        _acc(f, F_EXC, -(old - qi))
        if bucketed:
            cb = ix[C_BCOUNT]
            b = ix[ix[C_BUCKET] + i]
            ix[cb + b] -= 1
            if b == ix[C_TOP] and ix[cb + b] == 0:
                if ix[C_NL] <= 1:
                    # i was the only member, every bucket is now empty
                    ix[C_TOP] = -1
                else:
                    _bucket_scan(ix, b)
    if w > qi:
        ex = w - qi
        _acc(f, F_EXC, ex)
        if ix[ix[C_POS] + i] < 0:
            _insert(ix, i)
        if bucketed:
            _bucket_add(ix, i, ex)
        elif ex > f[F_BOUND]:
            f[F_BOUND] = ex
    elif ix[ix[C_POS] + i] >= 0:
        _remove(ix, i)
    if bucketed:
        _bucket_bound(f, ix)
    if ix[C_NL] == 0:
        f[F_EXC] = 0.0
        f[F_EXC + 1] = 0.0
    if ix[C_LOCKED] == 0 and ix[C_NL] > ix[C_M]:
        ix[C_PENDING] = 1


@njit(cache=True, error_model="numpy")
def _update_many(f, ix, idx, w):
    for k in range(idx.shape[0]):
        _update(f, ix, idx[k], w[k])


@njit(cache=True, error_model="numpy")
def _settle(f, ix, tab):
    if ix[C_PENDING] != 0:
        _refresh(f, ix, tab)


METHOD_DISPATCH = 0
METHOD_ONE = 1
METHOD_TWO = 2
METHOD_AR = 3
_EXCESS_ONLY = 4


@njit(cache=True, error_model="numpy")
def _sample(f, ix, tab, g, method):
    """One draw by ``method``; the index, or a negative error code.

    Everything on the common path lives in this one body. A numba call that
    LLVM does not inline costs a reference-count round trip per array
    argument, which used to dominate the draw.
    """
    if ix[C_NPOS] == 0:
        return ERR_DEGENERATE
    if ix[C_PENDING] != 0:
        _refresh(f, ix, tab)
    n = ix[C_N]
    fp = ix[C_FP]
    fq = ix[C_FQ]
    pb = ix[C_POS]
    nl = ix[C_NL]
    ip = f[F_SUM_P] + f[F_SUM_P + 1]
    iq = f[F_SUM_Q]
    mode = method
    if method == METHOD_DISPATCH:
        if ix[C_TABLE_OK] == 0:
            # no q mass: only the excess draw can succeed
            mode = _EXCESS_ONLY
        elif nl == 0 or ip < iq:
            # With L empty, Algorithm II is exact acceptance-rejection
            # regardless of rounding in the maintained sums.
            mode = METHOD_TWO
        else:
            mode = METHOD_ONE
    cap = ix[C_CAP]
    excess = mode == _EXCESS_ONLY
    branch = B_EXCESS_DIRECT
    cycles = 0
    i = np.int64(-1)
    if mode == METHOD_ONE and g.random() * ip < ip - iq:
        excess = True
    if not excess:
        pa = 0.0
        if mode == METHOD_TWO and nl > 0:
            ex = f[F_EXC] + f[F_EXC + 1]
            if ex > 0.0:
                pa = ex / (iq - ip + ex)
        alias = ix[C_TABLE] == TABLE_ALIAS
        hb = ix[C_MT]
        fmt = ix[C_FMT]
        levels = ix[hb]
        bits = ix[hb + 1]
        nbits = levels * bits
        mt_scale = float(np.int64(1) << nbits)
        branch = -1
        while branch < 0:
            if cycles == cap:
                ix[C_QDRAWS] += cycles
                return ERR_CAP
            cycles += 1
            if alias:
                i = _alias_draw(f, ix[C_FALIAS], ix, ix[C_ALIAS], n, g)
            else:
                # tables._mt_draw written out in place: it has a loop, so a
                # call would not be inlined
                i = -1
                while i < 0:
                    j = np.int64(g.random() * mt_scale)
                    lo = np.int64(0)
                    for k in range(levels):
                        thr = ix[hb + 2 + k]
                        if j < thr:
                            i = np.int64(tab[ix[hb + 2 + levels + k] + ((j - lo) >> (nbits - bits * (k + 1)))])
                            break
                        lo = thr
                    else:
                        if f[fmt] > 0.0:
                            i = _mt_residual(f, fmt + 2, n, f[fmt], g)
            if mode != METHOD_AR and ix[pb + i] >= 0:
                branch = B_Q_ACCEPT_L
            elif g.random() * f[fq + i] < f[fp + i]:
                branch = B_Q_ACCEPT_S
            elif mode == METHOD_ONE or (pa > 0.0 and g.random() < pa):
                branch = B_REPLACED
                excess = True
        ix[C_QDRAWS] += cycles
    if excess:
        bound = f[F_BOUND]
        mb = ix[C_MEMBERS]
        ix[C_XDRAWS] += 1
        k = 0
        while True:
            if k == cap:
                ix[C_XTRIALS] += k
                return ERR_CAP
            k += 1
            i = ix[mb + np.int64(g.random() * nl)]
            if g.random() * bound < f[fp + i] - f[fq + i]:
                break
        ix[C_XTRIALS] += k
        ix[C_WIN_TRIALS] += k
        ix[C_WIN_REJECTS] += k - 1
    ix[C_LAST_BRANCH] = branch
    ix[C_LAST_PROP] = cycles
    ix[C_LAST_XDRAWS] = 1 if excess else 0
    ix[C_SAMPLES] += 1
    # The rejection-rate trigger only flags; the next draw refreshes.
    thr = f[F_REJ_THRESHOLD]
    if thr > 0.0 and ix[C_LOCKED] == 0 and ix[C_WIN_TRIALS] >= REJECTION_WINDOW:
        if ix[C_WIN_REJECTS] > thr * ix[C_WIN_TRIALS]:
            ix[C_PENDING] = 1
        else:
            ix[C_WIN_TRIALS] = 0
            ix[C_WIN_REJECTS] = 0
    return i


@njit(cache=True, error_model="numpy")
def _sample_many(f, ix, tab, g, n, method):
    values = np.empty(n, dtype=np.int64)
    branches = np.empty(n, dtype=np.int8)
    proposals = np.empty(n, dtype=np.int64)
    xdraws = np.empty(n, dtype=np.int64)
    for k in range(n):
        i = _sample(f, ix, tab, g, method)
        if i < 0:
            return values[:k], branches[:k], proposals[:k], xdraws[:k], i
        values[k] = i
        branches[k] = ix[C_LAST_BRANCH]
        proposals[k] = ix[C_LAST_PROP]
        xdraws[k] = ix[C_LAST_XDRAWS]
    return values, branches, proposals, xdraws, 0


@njit(cache=True, error_model="numpy")
def _alternate(f, ix, tab, g, idx_a, w_a, idx_b, w_b, n):
    """Alternate between two weight configurations, drawing once after each
    switch; counts are kept per configuration."""
    size = ix[C_N]
    counts = np.zeros((2, size), dtype=np.int64)
    for _ in range(n):
        _update_many(f, ix, idx_a, w_a)
        i = _sample(f, ix, tab, g, METHOD_DISPATCH)
        if i < 0:
            return counts, i
        counts[0, i] += 1
        _update_many(f, ix, idx_b, w_b)
        i = _sample(f, ix, tab, g, METHOD_DISPATCH)
        if i < 0:
            return counts, i
        counts[1, i] += 1
    return counts, 0


# ------------------------------------------------------------------ Python API


def default_threshold(n: int) -> int:
    """Default reinitialization threshold ``M = ceil(4 sqrt(n))``."""
    return max(1, math.ceil(4 * math.sqrt(n)))


def raise_for(code: int) -> None:
    if code == ERR_DEGENERATE:
        raise DegenerateTarget("all weights are zero")
    if code == ERR_CAP:
        raise NonTermination("rejection loop exceeded its cycle cap")


class DynamicWeights:
    """Mutable discrete weights sampled by Reduced Rejection.

    Args:
        weights: initial non-negative weights; at least one must be positive.
        reinit_threshold: ``M``; the proposal snapshot is refreshed as soon as
            ``|L| > M``. Defaults to ``ceil(4 sqrt(n))``.
        table: ``"marsaglia"`` or ``"alias"`` backend for proposal draws.
        rejection_reinit: optional alternative trigger; when set (e.g. 0.9),
            the snapshot is also refreshed once the rejection fraction of
            excess-region trials over a window of 64 exceeds this value.
        excess_bound: ``"bucketed"`` keeps the acceptance height ``B`` for
            excess draws within a factor 2 of the current largest excess
            (power-of-two bucket counts, O(1) per update); ``"monotone"``
            only ever raises ``B`` until the next reinitialization.
        cycle_cap: abort a rejection loop after this many cycles.
    """

    def __init__(
        self,
        weights,
        reinit_threshold: int | None = None,
        *,
        table: str = "marsaglia",
        levels: int = DEFAULT_LEVELS,
        bits: int = DEFAULT_BITS,
        rejection_reinit: float | None = None,
        excess_bound: str = "bucketed",
        cycle_cap: int = DEFAULT_CYCLE_CAP,
    ):
        w = np.array(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise AllZeroWeights("weights must be a non-empty 1-d sequence")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise NegativeWeight("weights must be finite and non-negative")
        if not np.any(w > 0):
            raise AllZeroWeights("at least one weight must be positive")
        m = default_threshold(w.size) if reinit_threshold is None else int(reinit_threshold)
        if m < 1:
            raise ValueError("reinit_threshold must be >= 1")
        self._st = self._allocate(w, table, levels, bits, cycle_cap, excess_bound)
        self._st.ix[C_M] = m
        self._st.f[F_REJ_THRESHOLD] = rejection_reinit or 0.0
        _reinit(*self._st)

    @staticmethod
    def _allocate(w, table, levels, bits, cycle_cap, excess_bound="bucketed") -> DWState:
        n = w.size
        if table not in ("marsaglia", "alias"):
            raise ValueError(f"unknown table backend {table!r}")
        if excess_bound not in ("bucketed", "monotone"):
            raise ValueError(f"unknown excess bound policy {excess_bound!r}")
        mt = marsaglia_allocate(n, levels, bits) if table == "marsaglia" else marsaglia_allocate(0, 1, 1)
        fo = {C_FP: NF, C_FQ: NF + n, C_FMT: NF + 2 * n, C_FALIAS: NF + 3 * n + 2}
        io = {C_MEMBERS: NC, C_POS: NC + n, C_BUCKET: NC + 2 * n, C_BCOUNT: NC + 3 * n}
        io[C_MT] = io[C_BCOUNT] + N_BUCKETS
        io[C_ALIAS] = io[C_MT] + mt.head.size
        f = np.zeros(NF + 4 * n + 2)
        ix = np.zeros(io[C_ALIAS] + n, dtype=np.int64)
        for slot, off in {**fo, **io}.items():
            ix[slot] = off
        ix[C_N] = n
        st = DWState(f, ix, mt.tab)
        st.p[:] = w
        st.q[:] = w
        st.pos[:] = -1
        st.iblock(C_MT, mt.head.size)[:] = mt.head
        ix[C_BOUND_MODE] = BOUND_BUCKETED if excess_bound == "bucketed" else BOUND_MONOTONE
        ix[C_TOP] = -1
        ix[C_TABLE] = TABLE_MARSAGLIA if table == "marsaglia" else TABLE_ALIAS
        ix[C_CAP] = int(cycle_cap)
        return st

    @classmethod
    def from_target(cls, target: DiscreteTarget, *, table: str = "marsaglia", cycle_cap: int = DEFAULT_CYCLE_CAP):
        """Static sampler for a fixed (p, q) pair; never reinitializes."""
        self = cls.__new__(cls)
        p = np.array(target.p, dtype=np.float64)
        self._st = cls._allocate(p, table, DEFAULT_LEVELS, DEFAULT_BITS, cycle_cap)
        self._st.q[:] = target.q
        self._st.ix[C_M] = p.size
        self._st.ix[C_LOCKED] = 1
        _load_proposal(*self._st)
        return self

    # -- views
    @property
    def state(self) -> DWState:
        return self._st

    def __len__(self) -> int:
        return self._st.n

    @property
    def p(self) -> np.ndarray:
        v = self._st.p.view()
        v.flags.writeable = False
        return v

    @property
    def q(self) -> np.ndarray:
        v = self._st.q.view()
        v.flags.writeable = False
        return v

    @property
    def sum_p(self) -> float:
        return float(self._st.f[F_SUM_P] + self._st.f[F_SUM_P + 1])

    @property
    def sum_q(self) -> float:
        return float(self._st.f[F_SUM_Q])

    @property
    def excess_sum(self) -> float:
        return float(self._st.f[F_EXC] + self._st.f[F_EXC + 1])

    @property
    def excess_bound(self) -> float:
        return float(self._st.f[F_BOUND])

    @property
    def excess_size(self) -> int:
        return int(self._st.ix[C_NL])

    @property
    def excess_set(self) -> set[int]:
        return set(self._st.members[: self._st.ix[C_NL]].tolist())

    @property
    def reinit_threshold(self) -> int:
        return int(self._st.ix[C_M])

    @property
    def reinit_count(self) -> int:
        return int(self._st.ix[C_REINIT])

    @property
    def counters(self) -> dict[str, int]:
        c = self._st.ix
        return {
            "samples": int(c[C_SAMPLES]),
            "q_draws": int(c[C_QDRAWS]),
            "excess_trials": int(c[C_XTRIALS]),
            "excess_draws": int(c[C_XDRAWS]),
            "updates": int(c[C_UPDATES]),
            "reinit_count": int(c[C_REINIT]),
        }

    def in_excess(self, i: int) -> bool:
        return bool(self._st.pos[i] >= 0)

    # -- mutation
    def update_weight(self, i: int, new_p: float) -> None:
        n = len(self)
        if not 0 <= i < n:
            raise IndexOutOfRange(f"index {i} outside 0..{n - 1}")
        if not (new_p >= 0 and math.isfinite(new_p)):
            raise NegativeWeight(f"weight must be finite and non-negative, got {new_p}")
        st = self._st
        _update(st.f, st.ix, int(i), float(new_p))
        _settle(*st)

    def update_many(self, indices, values) -> None:
        idx = np.asarray(indices, dtype=np.int64)
        w = np.asarray(values, dtype=np.float64)
        if idx.shape != w.shape:
            raise ValueError("indices and values must have the same shape")
        if idx.size and (idx.min() < 0 or idx.max() >= len(self)):
            raise IndexOutOfRange("index out of range")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise NegativeWeight("weights must be finite and non-negative")
        st = self._st
        _update_many(st.f, st.ix, idx, w)
        _settle(*st)

    def reinitialize(self) -> None:
        """Snapshot ``q := p``, empty ``L`` and rebuild the proposal table."""
        _reinit(*self._st)
        self._st.ix[C_REINIT] += 1

    # -- sampling
    def sample_index(self, rng: RngStream) -> SampleRecord:
        i = _sample(*self._st, rng.generator, METHOD_DISPATCH)
        raise_for(i)
        c = self._st.ix
        return SampleRecord(int(i), BRANCH_CODES[c[C_LAST_BRANCH]], int(c[C_LAST_PROP]), int(c[C_LAST_XDRAWS]))

    def sample_many(self, n: int, rng: RngStream, method: str = "reduced_rejection") -> BulkSample:
        code = _METHODS[method]
        if code == METHOD_AR and self._st.ix[C_NL] > 0:
            raise NotEnclosing("acceptance-rejection needs p <= q everywhere")
        values, branches, proposals, xdraws, err = _sample_many(*self._st, rng.generator, int(n), code)
        raise_for(err)
        return BulkSample(values, branches, proposals, xdraws)

    def alternate(self, config_a, config_b, n: int, rng: RngStream) -> np.ndarray:
        """Interleave updates and draws: switch to ``config_a`` (an
        ``(indices, values)`` pair), draw once, switch to ``config_b``, draw
        once; repeat ``n`` times. Returns a ``(2, len)`` count matrix."""
        ia, wa = (np.asarray(v) for v in config_a)
        ib, wb = (np.asarray(v) for v in config_b)
        counts, err = _alternate(
            *self._st,
            rng.generator,
            ia.astype(np.int64),
            wa.astype(np.float64),
            ib.astype(np.int64),
            wb.astype(np.float64),
            int(n),
        )
        raise_for(err)
        return counts

    # -- diagnostics
    def check_invariants(self) -> None:
        """Full-scan verification of membership, sums and the bound."""
        st = self._st
        p, q = st.p, st.q
        big = p > q
        members = st.members[: st.ix[C_NL]]
        if set(members.tolist()) != set(np.flatnonzero(big).tolist()):
            raise AssertionError("excess set membership is out of sync")
        for k, i in enumerate(members):
            assert st.pos[i] == k
        assert np.all(st.pos[~big] == -1)
        exact_p = math.fsum(p)
        exact_q = math.fsum(q)
        exact_e = math.fsum((p - q)[big])
        for name, got, exact in (
            ("sum_p", self.sum_p, exact_p),
            ("sum_q", self.sum_q, exact_q),
            ("excess_sum", self.excess_sum, exact_e),
        ):
            if abs(got - exact) > 1e-9 * max(exact_p, exact_q, 1e-300):
                raise AssertionError(f"{name} drifted: {got} vs {exact}")
        if big.any() and self.excess_bound < (p - q)[big].max():
            raise AssertionError("excess bound below the largest excess")
        if st.ix[C_LOCKED] == 0 and st.ix[C_PENDING] == 0 and st.ix[C_NL] > st.ix[C_M]:
            raise AssertionError("excess set exceeds the reinit threshold")


_METHODS = {
    "reduced_rejection": METHOD_DISPATCH,
    "algorithm_one": METHOD_ONE,
    "algorithm_two": METHOD_TWO,
    "acceptance_rejection": METHOD_AR,
}


def build(weights, M: int | None = None, **kwargs) -> DynamicWeights:
    return DynamicWeights(weights, M, **kwargs)


def sample_target(
    target: DiscreteTarget,
    n: int,
    rng: RngStream,
    method: str = "reduced_rejection",
    *,
    table: str = "marsaglia",
    cycle_cap: int = DEFAULT_CYCLE_CAP,
) -> BulkSample:
    """Draw ``n`` samples from a static discrete target in compiled code.

    ``method`` is one of ``reduced_rejection`` (dispatch on the regime),
    ``algorithm_one``, ``algorithm_two`` or ``acceptance_rejection``.
    """
    if method == "algorithm_one" and target.total_p < target.total_q:
        raise MalformedTarget("algorithm_one needs total_p >= total_q")
    if method == "algorithm_two" and target.total_p >= target.total_q:
        raise MalformedTarget("algorithm_two needs total_p < total_q")
    if method == "acceptance_rejection" and target.excess_set:
        raise NotEnclosing(f"p exceeds q at indices {target.excess_set}")
    dw = DynamicWeights.from_target(target, table=table, cycle_cap=cycle_cap)
    out = dw.sample_many(n, rng, method)
    out.meta.update(dw.counters)
    return out
