"""Reduced Rejection sampling for discrete and continuous targets.

A *target* pairs the unnormalized function ``p`` we want samples from with a
proposal ``q`` that we already know how to sample. Unlike classic
acceptance-rejection, ``q`` need not enclose ``p``: the sample space splits
into the excess region ``L = {p > q}`` and the enclosed region
``S = {p <= q}``, and proposals rejected in ``S`` are replaced by draws from
the excess density ``p - q`` on ``L``.

Two algorithms cover the two regimes of total mass:

* :func:`algorithm_one` when ``I[p] >= I[q]`` -- at most one proposal and at
  most one excess draw per sample.
* :func:`algorithm_two` when ``I[p] < I[q]`` -- cycles like
  acceptance-rejection, but a rejected proposal is replaced by an excess draw
  with probability ``E / (I[q] - I[p] + E)``, where ``E`` is the excess mass.

:func:`reduced_rejection_sample` dispatches between them. The functions in
this module are generic: any object exposing the target protocol
(``total_p``, ``total_q``, ``excess_total``, ``sample_q``, ``sample_excess``,
``in_excess``, ``accepts``) works. Bulk sampling of discrete targets runs in
jitted kernels, see :mod:`reduced_rejection.dynamic`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Callable, Sequence

import numpy as np

from .errors import (
    DegenerateTarget,
    MalformedTarget,
    NonTermination,
    NotEnclosing,
    UnsupportedSize,
)
from .rng import RngStream
from .tables import _alias_draw, alias_build

DEFAULT_CYCLE_CAP = 10**6
SUM_RTOL = 1e-9
ORACLE_MAX_SUPPORT = 64


class Branch(enum.Enum):
    """Which step of the algorithm produced a sample.

    ``CYCLE_RETRY`` never tags a returned value; it names the outcome of an
    Algorithm II cycle that ends without acceptance, and appears in
    :func:`branch_probabilities`.
    """

    EXCESS_DIRECT = "excess_direct"
    Q_ACCEPT_L = "q_accept_L"
    Q_ACCEPT_S = "q_accept_S"
    REPLACED_BY_EXCESS = "replaced_by_excess"
    CYCLE_RETRY = "cycle_retry"


BRANCH_CODES = (
    Branch.EXCESS_DIRECT,
    Branch.Q_ACCEPT_L,
    Branch.Q_ACCEPT_S,
    Branch.REPLACED_BY_EXCESS,
    Branch.CYCLE_RETRY,
)


@dataclass(frozen=True)
class SampleRecord:
    value: Any
    branch: Branch
    proposals_used: int = 0
    excess_draws: int = 0


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= SUM_RTOL * max(abs(a), abs(b), 1e-300)


class DiscreteTarget:
    """Weights ``p`` and proposal weights ``q`` over indices ``0 .. n-1``.

    Sums are recomputed with ``math.fsum``; cached sums supplied by the caller
    are validated against the recomputation at 1e-9 relative tolerance.
    Ties ``p_i == q_i`` belong to the enclosed region.
    """

    def __init__(
        self,
        p: Sequence[float],
        q: Sequence[float],
        *,
        total_p: float | None = None,
        total_q: float | None = None,
        excess_total: float | None = None,
    ):
        self.p = np.array(p, dtype=np.float64)
        self.q = np.array(q, dtype=np.float64)
        if self.p.ndim != 1 or self.p.shape != self.q.shape or self.p.size == 0:
            raise MalformedTarget("p and q must be non-empty sequences of equal length")
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.q))):
            raise MalformedTarget("weights must be finite")
        if np.any(self.p < 0) or np.any(self.q < 0):
            raise MalformedTarget("weights must be non-negative")
        self.p.flags.writeable = False
        self.q.flags.writeable = False
        self.in_l = self.p > self.q
        self.in_l.flags.writeable = False
        self.total_p = math.fsum(self.p)
        self.total_q = math.fsum(self.q)
        self.excess_total = math.fsum(self.p[self.in_l] - self.q[self.in_l])
        for name, given, exact in (
            ("total_p", total_p, self.total_p),
            ("total_q", total_q, self.total_q),
            ("excess_total", excess_total, self.excess_total),
        ):
            if given is not None and not _close(given, exact):
                raise MalformedTarget(f"{name}={given} disagrees with recomputed {exact}")
        if self.total_p <= 0:
            raise DegenerateTarget("total_p must be positive")

    def __len__(self) -> int:
        return self.p.size

    def __repr__(self) -> str:
        return f"DiscreteTarget(p={self.p.tolist()}, q={self.q.tolist()})"

    @property
    def excess_set(self) -> list[int]:
        return np.flatnonzero(self.in_l).tolist()

    @cached_property
    def _q_table(self):
        return alias_build(self.q)

    @cached_property
    def _excess_table(self):
        return alias_build(np.where(self.in_l, self.p - self.q, 0.0))

    def sample_q(self, rng: RngStream) -> int:
        t = self._q_table
        return int(_alias_draw(t.prob, 0, t.alias, 0, t.prob.size, rng.generator))

    def sample_excess(self, rng: RngStream) -> int:
        t = self._excess_table
        return int(_alias_draw(t.prob, 0, t.alias, 0, t.prob.size, rng.generator))

    def in_excess(self, i: int) -> bool:
        return bool(self.in_l[i])

    def accepts(self, i: int, u: float) -> bool:
        return u * self.q[i] < self.p[i]


@dataclass(frozen=True)
class ContinuousTarget:
    """A (p, q) pair on an interval with Lebesgue measure.

    ``sample_q`` must draw with density ``q / total_q`` and ``sample_excess``
    with density ``(p - q) / excess_total`` on ``{p > q}``; the caller is
    responsible for their exactness. Set ``q_dominated`` when ``p >= q``
    holds everywhere, which lets every proposal be accepted without
    evaluating the densities.
    """

    eval_p: Callable[[float], float] | None
    eval_q: Callable[[float], float] | None
    total_p: float
    total_q: float
    excess_total: float
    sample_q: Callable[[RngStream], float]
    sample_excess: Callable[[RngStream], float]
    q_dominated: bool = False

    def __post_init__(self):
        if self.total_p <= 0:
            raise DegenerateTarget("total_p must be positive")
        if self.total_q < 0 or self.excess_total < 0:
            raise MalformedTarget("integrals must be non-negative")
        if not self.q_dominated and (self.eval_p is None or self.eval_q is None):
            raise MalformedTarget("densities are required unless q_dominated is set")
        # p - q integrates to total_p - total_q, and its positive part is the excess.
        if self.excess_total < self.total_p - self.total_q - SUM_RTOL * self.total_p:
            raise MalformedTarget("excess_total is smaller than total_p - total_q")

    def in_excess(self, x: float) -> bool:
        return self.q_dominated or self.eval_p(x) > self.eval_q(x)

    def accepts(self, x: float, u: float) -> bool:
        if self.q_dominated:
            return True
        return u * self.eval_q(x) < self.eval_p(x)


def _check_common(target) -> None:
    if not target.total_p > 0:
        raise DegenerateTarget("total_p must be positive")


def algorithm_one(target, rng: RngStream) -> SampleRecord:
    """Reduced Rejection for ``I[p] >= I[q]``; never loops."""
    _check_common(target)
    ip, iq = target.total_p, target.total_q
    if ip < iq:
        raise MalformedTarget(f"algorithm_one needs total_p >= total_q ({ip} < {iq})")
    if rng.uniform() * ip < ip - iq:
        return SampleRecord(target.sample_excess(rng), Branch.EXCESS_DIRECT, 0, 1)
    x = target.sample_q(rng)
    if target.in_excess(x):
        return SampleRecord(x, Branch.Q_ACCEPT_L, 1, 0)
    if target.accepts(x, rng.uniform()):
        return SampleRecord(x, Branch.Q_ACCEPT_S, 1, 0)
    return SampleRecord(target.sample_excess(rng), Branch.REPLACED_BY_EXCESS, 1, 1)


def replacement_probability(total_p: float, total_q: float, excess_total: float) -> float:
    """Chance that Algorithm II replaces a rejected proposal with an excess draw.

    Equals the excess mass over the rejected mass ``sum_S (q - p)``.
    """
    denom = total_q - total_p + excess_total
    if not denom > 0:
        raise MalformedTarget("rejected mass sum_S(q - p) must be positive")
    return excess_total / denom


def algorithm_two(target, rng: RngStream, *, cycle_cap: int = DEFAULT_CYCLE_CAP) -> SampleRecord:
    """Reduced Rejection for ``I[p] < I[q]``; cycles until acceptance."""
    _check_common(target)
    ip, iq = target.total_p, target.total_q
    if ip >= iq:
        raise MalformedTarget(f"algorithm_two needs total_p < total_q ({ip} >= {iq})")
    pa = replacement_probability(ip, iq, target.excess_total)
    for cycle in range(1, cycle_cap + 1):
        x = target.sample_q(rng)
        if target.in_excess(x):
            return SampleRecord(x, Branch.Q_ACCEPT_L, cycle, 0)
        if target.accepts(x, rng.uniform()):
            return SampleRecord(x, Branch.Q_ACCEPT_S, cycle, 0)
        if pa > 0 and rng.uniform() < pa:
            return SampleRecord(target.sample_excess(rng), Branch.REPLACED_BY_EXCESS, cycle, 1)
    raise NonTermination(f"no acceptance within {cycle_cap} cycles")


def reduced_rejection_sample(target, rng: RngStream, *, cycle_cap: int = DEFAULT_CYCLE_CAP) -> SampleRecord:
    if target.total_p >= target.total_q:
        return algorithm_one(target, rng)
    return algorithm_two(target, rng, cycle_cap=cycle_cap)


def acceptance_rejection_sample(target, rng: RngStream, *, cycle_cap: int = DEFAULT_CYCLE_CAP) -> SampleRecord:
    """Classic acceptance-rejection; ``q`` must enclose ``p``."""
    if isinstance(target, DiscreteTarget) and target.excess_set:
        raise NotEnclosing(f"p exceeds q at indices {target.excess_set}")
    if not target.total_q > 0:
        raise MalformedTarget("total_q must be positive")
    continuous = not isinstance(target, DiscreteTarget)
    if continuous and target.q_dominated:
        raise NotEnclosing("a q-dominated target is not enclosed by q")
    for cycle in range(1, cycle_cap + 1):
        x = target.sample_q(rng)
        if continuous and target.in_excess(x):
            raise NotEnclosing(f"p(x) > q(x) at x={x}")
        if target.accepts(x, rng.uniform()):
            return SampleRecord(x, Branch.Q_ACCEPT_S, cycle, 0)
    raise NonTermination(f"no acceptance within {cycle_cap} cycles")


# ------------------------------------------------------------------ oracle


def _exact_parts(target: DiscreteTarget):
    if len(target) > ORACLE_MAX_SUPPORT:
        raise UnsupportedSize(f"oracle supports at most {ORACLE_MAX_SUPPORT} points, got {len(target)}")
    p = [Fraction(float(v)) for v in target.p]
    q = [Fraction(float(v)) for v in target.q]
    ip, iq = sum(p), sum(q)
    big = [pi > qi for pi, qi in zip(p, q)]
    excess = sum(pi - qi for pi, qi, b in zip(p, q, big) if b)
    rejected = sum(qi - pi for pi, qi, b in zip(p, q, big) if not b)
    return p, q, ip, iq, big, excess, rejected


def path_probability_oracle(target: DiscreteTarget, z: int) -> Fraction:
    """Exact probability that dispatch returns ``z``, summed over the
    algorithm's branches in rational arithmetic.

    Algorithm I: ``z`` in ``S`` is returned only by an accepted proposal;
    ``z`` in ``L`` by the direct excess draw, an accepted proposal, or the
    replacement of a rejected one. Algorithm II: the per-cycle return
    probability is renormalized by the per-cycle acceptance ``I[p]/I[q]``.
    """
    p, q, ip, iq, big, excess, rejected = _exact_parts(target)
    if ip == 0:
        raise DegenerateTarget("total_p must be positive")
    if ip >= iq:
        if not big[z]:
            if q[z] == 0:
                return Fraction(0)
            return (iq / ip) * (q[z] / iq) * (p[z] / q[z])
        share = (p[z] - q[z]) / excess
        direct = (ip - iq) / ip * share
        proposal = (iq / ip) * (q[z] / iq) if iq else Fraction(0)
        replaced = (iq / ip) * (rejected / iq) * share if iq else Fraction(0)
        return direct + proposal + replaced
    if not big[z]:
        per_cycle = (q[z] / iq) * (p[z] / q[z]) if q[z] else Fraction(0)
    else:
        replace = excess / rejected
        per_cycle = q[z] / iq + (rejected / iq) * replace * (p[z] - q[z]) / excess
    return per_cycle / (ip / iq)


def branch_probabilities(target: DiscreteTarget) -> dict[Branch, Fraction]:
    """Exact distribution of the branch tag of a returned sample.

    For Algorithm II the entry ``CYCLE_RETRY`` is the chance that a single
    cycle ends without acceptance; the other entries are per returned sample.
    """
    p, q, ip, iq, big, excess, rejected = _exact_parts(target)
    q_in_l = sum(qi for qi, b in zip(q, big) if b)
    p_in_s = sum(pi for pi, b in zip(p, big) if not b)
    if ip >= iq:
        return {
            Branch.EXCESS_DIRECT: (ip - iq) / ip,
            Branch.Q_ACCEPT_L: q_in_l / ip,
            Branch.Q_ACCEPT_S: p_in_s / ip,
            Branch.REPLACED_BY_EXCESS: rejected / ip,
            Branch.CYCLE_RETRY: Fraction(0),
        }
    accept = ip / iq
    return {
        Branch.EXCESS_DIRECT: Fraction(0),
        Branch.Q_ACCEPT_L: q_in_l / iq / accept,
        Branch.Q_ACCEPT_S: p_in_s / iq / accept,
        Branch.REPLACED_BY_EXCESS: excess / iq / accept,
        Branch.CYCLE_RETRY: (rejected - excess) / iq,
    }


@dataclass
class BulkSample:
    """Samples drawn by a jitted kernel, with per-sample diagnostics."""

    values: np.ndarray
    branches: np.ndarray  # int8 codes indexing BRANCH_CODES
    proposals: np.ndarray
    excess_draws: np.ndarray
    meta: dict = field(default_factory=dict)

    def branch_counts(self) -> dict[Branch, int]:
        counts = np.bincount(self.branches, minlength=len(BRANCH_CODES))
        return {b: int(c) for b, c in zip(BRANCH_CODES, counts)}
