"""Sampling a doubly singular density on (0, 1).

The target is ``p(x) = x**-1/2 + (1 - x)**-1/5``. With proposal
``q(x) = x**-1/2`` the excess ``p - q = (1 - x)**-1/5`` is positive
everywhere, so ``L`` is the whole interval: every proposal is accepted and no
draw is ever wasted. Both pieces have closed-form inverse CDFs, which the
plain inverse transform of ``p`` itself (a high-degree root find) lacks.

Integrals: ``I[q] = 2``, excess ``5/4``, ``I[p] = 13/4``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import ContinuousTarget, SampleRecord, algorithm_one
from .errors import MalformedTarget
from .rng import RngStream

TOTAL_Q = 2.0
EXCESS_TOTAL = 1.25
TOTAL_P = TOTAL_Q + EXCESS_TOTAL


def density(x: float) -> float:
    return 1.0 / math.sqrt(x) + (1.0 - x) ** -0.2


def proposal_density(x: float) -> float:
    return 1.0 / math.sqrt(x)


def inv_sqrt_from_uniform(u: float) -> float:
    """Inverse of the CDF ``sqrt(x)`` of the normalized ``x**-1/2`` density."""
    return u * u


def quintic_from_uniform(u: float) -> float:
    """Inverse of the CDF ``1 - (1 - x)**(4/5)``."""
    return 1.0 - (1.0 - u) ** 1.25


def sample_inv_sqrt(rng: RngStream) -> float:
    """Draw from density ``x**-1/2 / 2`` on (0, 1)."""
    return inv_sqrt_from_uniform(rng.open_uniform())


def sample_excess_quintic(rng: RngStream) -> float:
    """Draw from density ``(1 - x)**-1/5 / (5/4)`` on (0, 1)."""
    while True:
        x = quintic_from_uniform(rng.open_uniform())
        # u within ~1e-13 of 1 rounds x up to exactly 1.0
        if 0.0 < x < 1.0:
            return x


def cdf(x):
    """CDF of the normalized target, by term-wise integration."""
    x = np.asarray(x, dtype=np.float64)
    return (2.0 * np.sqrt(x) + 1.25 * (1.0 - (1.0 - x) ** 0.8)) / TOTAL_P


def inv_sqrt_cdf(x):
    return np.sqrt(np.asarray(x, dtype=np.float64))


def quintic_cdf(x):
    return 1.0 - (1.0 - np.asarray(x, dtype=np.float64)) ** 0.8


SINGULAR_TARGET = ContinuousTarget(
    eval_p=density,
    eval_q=proposal_density,
    total_p=TOTAL_P,
    total_q=TOTAL_Q,
    excess_total=EXCESS_TOTAL,
    sample_q=sample_inv_sqrt,
    sample_excess=sample_excess_quintic,
)


def sample_mixture(rng: RngStream) -> SampleRecord:
    """One draw from the singular target via Algorithm I."""
    return algorithm_one(SINGULAR_TARGET, rng)


def sample_many(n: int, rng: RngStream) -> tuple[np.ndarray, list[SampleRecord]]:
    records = [algorithm_one(SINGULAR_TARGET, rng) for _ in range(n)]
    return np.fromiter((r.value for r in records), dtype=np.float64, count=n), records


@dataclass(frozen=True)
class Component:
    """One additive piece ``p_k`` of a mixture density.

    ``sampler`` must draw exactly from ``p_k / integral``; this is not checked.
    """

    sampler: Callable[[RngStream], float]
    integral: float
    density: Callable[[float], float] | None = None


def mixture_target(components: Sequence[Component]) -> ContinuousTarget:
    """Reduced Rejection target for ``p = p_1 + ... + p_n``.

    The first component is the proposal and the remaining ones form the
    excess, drawn by picking a component in proportion to its integral.
    Because ``p - q`` is a sum of non-negative pieces, every proposal is
    accepted.
    """
    if not components:
        raise MalformedTarget("a mixture needs at least one component")
    if any(not c.integral > 0 for c in components):
        raise MalformedTarget("component integrals must be positive")
    head, rest = components[0], list(components[1:])
    weights = np.array([c.integral for c in rest])
    excess = math.fsum(weights)
    cum = np.cumsum(weights)

    def sample_rest(rng: RngStream) -> float:
        k = int(np.searchsorted(cum, rng.uniform() * cum[-1], side="right"))
        return rest[min(k, len(rest) - 1)].sampler(rng)

    def unavailable(_rng: RngStream) -> float:
        raise MalformedTarget("single-component mixture has no excess")

    densities = [c.density for c in components]
    if all(d is not None for d in densities):
        eval_p = lambda x: math.fsum(d(x) for d in densities)  # noqa: E731
        eval_q = head.density
    else:
        eval_p = eval_q = None
    return ContinuousTarget(
        eval_p=eval_p,
        eval_q=eval_q,
        total_p=head.integral + excess,
        total_q=head.integral,
        excess_total=excess,
        sample_q=head.sampler,
        sample_excess=sample_rest if rest else unavailable,
        q_dominated=True,
    )


def sample_components(components: Sequence[Component], rng: RngStream) -> SampleRecord:
    return algorithm_one(mixture_target(components), rng)
