"""Preprocessed O(1) samplers for a fixed discrete weight vector.

Two exact backends are provided:

* :class:`MarsagliaTable` -- Marsaglia's digit-table method. Each probability
  is quantized to ``levels * bits`` binary digits; level ``k`` holds index
  ``i`` repeated as many times as the ``k``-th base ``2**bits`` digit of its
  quantized probability. The mass lost to quantization is kept in a residual
  bucket that is sampled by a linear scan, so draws are exact rather than
  accurate to 32 bits.
* :class:`AliasTable` -- Walker's alias method with Vose's construction.

Both are plain tuples of numpy arrays. The kernels address them by offset,
so :mod:`reduced_rejection.dynamic` can embed them in its flat state arrays.
"""

from __future__ import annotations

from fractions import Fraction
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import AllZeroWeights, NegativeWeight
from .rng import RngStream

DEFAULT_LEVELS = 4
DEFAULT_BITS = 8


@njit(cache=True, error_model="numpy")
def neumaier_sum(a):
    """Compensated sum of a float array."""
    s = 0.0
    c = 0.0
    for x in a:
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
    return s + c


# ---------------------------------------------------------------- Marsaglia


class MarsagliaTable(NamedTuple):
    """Table arrays; the jitted kernels address them by offset so the same
    layout can live inside a larger state arena.

    ``head`` holds ``levels, bits`` followed by the cumulative thresholds and
    the start offset of every level; ``fx`` holds the residual total, the
    table mass and one quantization residual per index (in units of
    ``2**-(levels*bits)``).
    """

    tab: np.ndarray  # int32, concatenated level tables (capacity-sized)
    head: np.ndarray  # int64[2 + 2*levels]
    fx: np.ndarray  # float64[2 + n]

    @property
    def levels(self) -> int:
        return int(self.head[0])

    @property
    def bits(self) -> int:
        return int(self.head[1])

    @property
    def thr(self) -> np.ndarray:
        return self.head[2 : 2 + self.levels]

    @property
    def off(self) -> np.ndarray:
        return self.head[2 + self.levels : 2 + 2 * self.levels]

    @property
    def resid(self) -> np.ndarray:
        return self.fx[2:]


def marsaglia_capacity(n: int, levels: int, bits: int) -> int:
    digit_max = (1 << bits) - 1
    return sum(min(digit_max * n, 1 << (bits * (k + 1))) for k in range(levels))


def marsaglia_head_size(levels: int) -> int:
    return 2 + 2 * levels


def marsaglia_allocate(n: int, levels: int = DEFAULT_LEVELS, bits: int = DEFAULT_BITS) -> MarsagliaTable:
    if levels * bits > 53:
        raise ValueError("levels * bits must not exceed 53 (double mantissa)")
    head = np.zeros(marsaglia_head_size(levels), dtype=np.int64)
    head[0] = levels
    head[1] = bits
    return MarsagliaTable(np.zeros(marsaglia_capacity(n, levels, bits), dtype=np.int32), head, np.zeros(2 + n))


@njit(cache=True, error_model="numpy")
def _mt_rebuild(tab, h, hb, fx, fb, q, total):
    """Fill the table at head offset ``hb`` and float offset ``fb`` for
    weights ``q`` summing to ``total``."""
    levels = h[hb]
    bits = h[hb + 1]
    nbits = levels * bits
    full = np.int64(1) << nbits
    scale = float(full) / total
    n = q.shape[0]
    rb = fb + 2
    m = np.empty(n, dtype=np.int64)
    mass = np.int64(0)
    for i in range(n):
        w = q[i] * scale
        mi = np.int64(w)
        if mi > full - 1:
            mi = full - 1
        m[i] = mi
        fx[rb + i] = w - mi
        mass += mi
    # Rounding in q/total can push the quantized mass past 2**nbits.
    while mass > full:
        j = np.argmax(m)
        m[j] -= 1
        fx[rb + j] += 1.0
        mass -= 1
    mask = (np.int64(1) << bits) - 1
    pos = 0
    cum = np.int64(0)
    for k in range(levels):
        shift = nbits - bits * (k + 1)
        h[hb + 2 + levels + k] = pos
        start = pos
        for i in range(n):
            d = (m[i] >> shift) & mask
            for _ in range(d):
                tab[pos] = i
                pos += 1
        cum += (pos - start) << shift
        h[hb + 2 + k] = cum
    fx[fb] = neumaier_sum(fx[rb : rb + n])
    fx[fb + 1] = float(cum)


@njit(cache=True, error_model="numpy")
def _mt_residual(fx, rb, n, rt, g):
    r = g.random() * rt
    acc = 0.0
    last = -1
    for i in range(n):
        ri = fx[rb + i]
        if ri > 0.0:
            acc += ri
            last = i
            if r < acc:
                return np.int64(i)
    return np.int64(last)


@njit(cache=True, error_model="numpy")
def _mt_draw(tab, h, hb, fx, fb, n, g):
    levels = h[hb]
    bits = h[hb + 1]
    nbits = levels * bits
    scale = float(np.int64(1) << nbits)
    while True:
        j = np.int64(g.random() * scale)
        lo = np.int64(0)
        for k in range(levels):
            thr = h[hb + 2 + k]
            if j < thr:
                shift = nbits - bits * (k + 1)
                return np.int64(tab[h[hb + 2 + levels + k] + ((j - lo) >> shift)])
            lo = thr
        rt = fx[fb]
        if rt > 0.0:
            return _mt_residual(fx, fb + 2, n, rt, g)
        # residual bucket is empty: the leftover integer range carries no mass


@njit(cache=True, error_model="numpy")
def _mt_draw_many(tab, h, fx, g, n):
    size = fx.shape[0] - 2
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = _mt_draw(tab, h, 0, fx, 0, size, g)
    return out


def _checked_weights(weights) -> np.ndarray:
    w = np.ascontiguousarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise AllZeroWeights("weights must be a non-empty 1-d sequence")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise NegativeWeight("weights must be finite and non-negative")
    if not np.any(w > 0):
        raise AllZeroWeights("at least one weight must be positive")
    return w


def marsaglia_build(weights, levels: int = DEFAULT_LEVELS, bits: int = DEFAULT_BITS) -> MarsagliaTable:
    """Build a Marsaglia table over non-negative ``weights``."""
    w = _checked_weights(weights)
    t = marsaglia_allocate(w.size, levels, bits)
    _mt_rebuild(t.tab, t.head, 0, t.fx, 0, w, neumaier_sum(w))
    return t


def marsaglia_sample(table: MarsagliaTable, rng: RngStream) -> int:
    return int(_mt_draw(table.tab, table.head, 0, table.fx, 0, table.fx.size - 2, rng.generator))


def marsaglia_sample_many(table: MarsagliaTable, n: int, rng: RngStream) -> np.ndarray:
    return _mt_draw_many(table.tab, table.head, table.fx, rng.generator, int(n))


def marsaglia_probabilities(table: MarsagliaTable) -> list[Fraction]:
    """Per-index draw probability, accounted exactly from the table contents.

    The table path contributes ``count_k(i) * 2**-(bits*(k+1))`` per level;
    the residual bucket contributes its leftover integer range times the
    index's share of the (floating-point) residual total.
    """
    levels, bits = table.levels, table.bits
    nbits = levels * bits
    resid = table.resid
    n = resid.size
    probs = [Fraction(0)] * n
    prev = 0
    for k in range(levels):
        start = int(table.off[k])
        stop = start + ((int(table.thr[k]) - prev) >> (nbits - bits * (k + 1)))
        prev = int(table.thr[k])
        unit = Fraction(1, 1 << (bits * (k + 1)))
        counts = np.bincount(table.tab[start:stop], minlength=n)
        for i in range(n):
            probs[i] += int(counts[i]) * unit
    leftover = Fraction((1 << nbits) - int(table.thr[-1]), 1 << nbits)
    rt = sum(Fraction(float(r)) for r in resid)
    if rt > 0:
        for i in range(n):
            probs[i] += leftover * Fraction(float(resid[i])) / rt
    elif leftover:
        # an empty residual bucket is redrawn, renormalizing the table path
        mass = 1 - leftover
        probs = [p / mass for p in probs]
    return probs


# ---------------------------------------------------------------- alias


class AliasTable(NamedTuple):
    prob: np.ndarray  # float64[n], probability of keeping the column index
    alias: np.ndarray  # int64[n]


@njit(cache=True, error_model="numpy")
def _alias_rebuild(prob, alias, w, total):
    n = w.shape[0]
    scaled = w * (n / total)
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        alias[i] = i
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    last_large = large[0] if nl > 0 else 0
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        nl -= 1
        g = large[nl]
        last_large = g
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            small[ns] = g
            ns += 1
        else:
            large[nl] = g
            nl += 1
    while nl > 0:
        nl -= 1
        prob[large[nl]] = 1.0
    # Leftover small columns exist only through rounding; a zero-weight column
    # must still never return itself.
    while ns > 0:
        ns -= 1
        s = small[ns]
        if w[s] > 0.0:
            prob[s] = 1.0
        else:
            prob[s] = 0.0
            alias[s] = last_large


@njit(cache=True, error_model="numpy")
def _alias_draw(fx, pb, h, ab, n, g):
    """Draw from the alias table whose probabilities start at ``fx[pb]`` and
    aliases at ``h[ab]``."""
    i = np.int64(g.random() * n)
    if g.random() < fx[pb + i]:
        return i
    return h[ab + i]


@njit(cache=True, error_model="numpy")
def _alias_draw_many(prob, alias, g, n):
    size = prob.shape[0]
    out = np.empty(n, dtype=np.int64)
    for k in range(n):
        out[k] = _alias_draw(prob, 0, alias, 0, size, g)
    return out


def alias_build(weights) -> AliasTable:
    """Build an alias table (Vose's O(n) construction)."""
    w = _checked_weights(weights)
    t = AliasTable(np.zeros(w.size), np.zeros(w.size, dtype=np.int64))
    _alias_rebuild(t.prob, t.alias, w, neumaier_sum(w))
    return t


def alias_sample(table: AliasTable, rng: RngStream) -> int:
    return int(_alias_draw(table.prob, 0, table.alias, 0, table.prob.size, rng.generator))


def alias_sample_many(table: AliasTable, n: int, rng: RngStream) -> np.ndarray:
    return _alias_draw_many(table.prob, table.alias, rng.generator, int(n))


def alias_probabilities(table: AliasTable) -> np.ndarray:
    """Exact-in-floating-point probability of each index under ``table``."""
    n = table.prob.size
    out = table.prob / n
    np.add.at(out, table.alias, (1.0 - table.prob) / n)
    return out
