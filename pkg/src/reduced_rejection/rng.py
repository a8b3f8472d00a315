"""Seeded uniform-variate streams.

Every stochastic routine in the package draws from an :class:`RngStream`.
The stream wraps numpy's PCG64 bit generator, whose output is specified
bit-for-bit across platforms, and exposes the underlying
``numpy.random.Generator`` so jitted kernels can advance the same state.
"""

from __future__ import annotations

import math

import numpy as np

_U64 = 1 << 64


class RngStream:
    """Deterministic stream of uniform variates for one seed.

    Args:
        seed: unsigned 64-bit seed. The same seed always yields the same
            sequence of variates.
    """

    __slots__ = ("seed", "generator", "_seq")

    def __init__(self, seed: int = 0, *, _seq: np.random.SeedSequence | None = None):
        if _seq is None:
            if not 0 <= int(seed) < _U64:
                raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
            _seq = np.random.SeedSequence(int(seed))
        self.seed = int(seed)
        self._seq = _seq
        self.generator = np.random.Generator(np.random.PCG64(_seq))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed})"

    def uniform(self) -> float:
        """Uniform variate on [0, 1)."""
        return self.generator.random()

    def open_uniform(self) -> float:
        """Uniform variate on (0, 1); zero is redrawn."""
        g = self.generator
        u = g.random()
        while u == 0.0:
            u = g.random()
        return u

    def exponential(self, mean: float = 1.0) -> float:
        """Exponential variate with the given mean, by inverse transform."""
        return -mean * math.log1p(-self.generator.random())

    def below(self, n: int) -> int:
        """Uniform integer on ``0 .. n-1``."""
        return int(self.generator.random() * n)

    def spawn(self, n: int) -> list[RngStream]:
        """Return ``n`` child streams, statistically independent of this one
        and of each other (numpy ``SeedSequence`` spawning)."""
        return [RngStream(self.seed, _seq=s) for s in self._seq.spawn(n)]


def as_stream(rng: RngStream | int | None) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    return RngStream(0 if rng is None else rng)
