"""Randomized self-checks: exact oracle agreement and chi-square suites.

Every suite is seeded, so a given configuration always draws the same
targets and the same samples.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import DiscreteTarget, path_probability_oracle
from .dynamic import DynamicWeights, sample_target
from .rng import RngStream
from .stats import chi_square_gof
from .tables import alias_build, alias_sample_many, marsaglia_build, marsaglia_sample_many

ALPHA = 1e-3
ORACLE_TOL = 1e-12
MAX_SUPPORT = 6
MAX_WEIGHT = 9


@dataclass
class SuiteResult:
    name: str
    passed: bool
    n_pass: int
    n_total: int
    seconds: float
    detail: str = ""
    pvalues: list[float] = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<22} {self.n_pass}/{self.n_total}  {self.seconds:7.2f}s  {self.detail}"


def random_weights(g: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Integer weights in 0..9 with at least one positive entry."""
    n = int(g.integers(1, MAX_SUPPORT + 1)) if n is None else n
    while True:
        w = g.integers(0, MAX_WEIGHT + 1, size=n).astype(np.float64)
        if w.sum() > 0:
            return w


def random_target(g: np.random.Generator, regime: str = "any") -> DiscreteTarget:
    """Random small integer target.

    ``regime`` is ``"one"`` (``I[p] >= I[q]``), ``"two"`` (``I[p] < I[q]``),
    ``"enclosed"`` (``p <= q`` everywhere) or ``"any"``.
    """
    while True:
        n = int(g.integers(1, MAX_SUPPORT + 1))
        p = random_weights(g, n)
        if regime == "enclosed":
            q = p + np.floor(g.random(n) * (MAX_WEIGHT + 1 - p))
        else:
            q = g.integers(0, MAX_WEIGHT + 1, size=n).astype(np.float64)
        ip, iq = p.sum(), q.sum()
        if regime == "one" and ip < iq:
            continue
        if regime == "two" and ip >= iq:
            continue
        if regime == "enclosed" and iq == 0:
            continue
        return DiscreteTarget(p, q)


def oracle_suite(instances: int = 100, seed: int = 1) -> SuiteResult:
    """Exact oracle equals ``p_z / I[p]`` on random targets of both regimes."""
    g = RngStream(seed).generator
    start = time.perf_counter()
    ok = 0
    worst = 0.0
    regimes = ("one", "two")
    for k in range(instances):
        t = random_target(g, regimes[k % 2])
        ip = Fraction(int(t.total_p))
        good = True
        for z in range(len(t)):
            got = path_probability_oracle(t, z)
            exact = Fraction(int(t.p[z])) / ip
            err = abs(float(got - exact))
            worst = max(worst, err)
            good &= err <= ORACLE_TOL
        ok += good
    return SuiteResult("oracle", ok == instances, ok, instances, time.perf_counter() - start, f"max |err| = {worst:.1e}")


def _chi(counts, probs) -> float:
    return chi_square_gof(counts, probs).pvalue


def _static(method: str, regime: str):
    def draw(g, stream, n):
        t = random_target(g, regime)
        out = sample_target(t, n, stream, method)
        return [_chi(np.bincount(out.values, minlength=len(t)), t.p)]

    return draw


def _table(builder, sampler):
    def draw(g, stream, n):
        w = random_weights(g)
        counts = np.bincount(sampler(builder(w), n, stream), minlength=w.size)
        return [_chi(counts, w)]

    return draw


def _dynamic(table: str):
    """Interleave two weight configurations with draws, starting from a third."""

    def draw(g, stream, n):
        size = int(g.integers(1, MAX_SUPPORT + 1))
        w0 = random_weights(g, size)
        wa = random_weights(g, size)
        wb = random_weights(g, size)
        dw = DynamicWeights(w0, reinit_threshold=int(g.integers(1, size + 1)), table=table)
        idx = np.arange(size)
        counts = dw.alternate((idx, wa), (idx, wb), n // 2, stream)
        return [_chi(counts[0], wa), _chi(counts[1], wb)]

    return draw


GOF_SUITES = {
    "algorithm_one": _static("algorithm_one", "one"),
    "algorithm_two": _static("algorithm_two", "two"),
    "acceptance_rejection": _static("acceptance_rejection", "enclosed"),
    "sample_index": _dynamic("marsaglia"),
    "sample_index_alias": _dynamic("alias"),
    "marsaglia_table": _table(marsaglia_build, marsaglia_sample_many),
    "alias_table": _table(alias_build, alias_sample_many),
}


def gof_suite(name: str, targets: int = 100, samples: int = 10**6, seed: int = 2, min_pass: float = 0.95) -> SuiteResult:
    """Chi-square at level 0.001 on ``targets`` random targets; the suite
    passes when at least ``min_pass`` of them pass."""
    draw = GOF_SUITES[name]
    root = RngStream(seed)
    g = root.generator
    streams = root.spawn(targets)
    start = time.perf_counter()
    ok = 0
    pvals: list[float] = []
    for k in range(targets):
        ps = draw(g, streams[k], samples)
        pvals.extend(ps)
        ok += all(p >= ALPHA for p in ps)
    need = int(np.ceil(min_pass * targets))
    return SuiteResult(name, ok >= need, ok, targets, time.perf_counter() - start, f"need {need}", pvals)


def run_all(instances: int = 100, targets: int = 100, samples: int = 10**6, seed: int = 1) -> list[SuiteResult]:
    results = [oracle_suite(instances, seed)]
    for k, name in enumerate(GOF_SUITES):
        results.append(gof_suite(name, targets, samples, seed + 1 + k))
    return results
