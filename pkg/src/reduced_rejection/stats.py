"""Goodness-of-fit helpers used by the validation suites and the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class TestOutcome:
    statistic: float
    pvalue: float
    dof: int = 0

    def passes(self, alpha: float = 1e-3) -> bool:
        return self.pvalue >= alpha


def _pool(expected: np.ndarray, *observed: np.ndarray, min_expected: float = MIN_EXPECTED):
    """Merge cells with small expectation into one, smallest first."""
    order = np.argsort(expected, kind="stable")
    keep = np.ones(expected.size, dtype=bool)
    pooled_e = 0.0
    pooled_o = [0] * len(observed)
    for i in order:
        if expected[i] >= min_expected or pooled_e >= min_expected:
            break
        keep[i] = False
        pooled_e += expected[i]
        for k, o in enumerate(observed):
            pooled_o[k] += o[i]
    e = np.append(expected[keep], pooled_e) if not keep.all() else expected
    obs = [np.append(o[keep], po) if not keep.all() else o for o, po in zip(observed, pooled_o)]
    return e, obs


def chi_square_gof(counts, probs, *, min_expected: float = MIN_EXPECTED) -> TestOutcome:
    """Pearson chi-square of ``counts`` against probabilities ``probs``.

    Cells of probability zero must be empty; a single hit there fails the
    test outright (p-value 0). Sparse cells are pooled.
    """
    counts = np.asarray(counts, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    probs = probs / probs.sum()
    n = counts.sum()
    zero = probs == 0
    if counts[zero].sum() > 0:
        return TestOutcome(float("inf"), 0.0, 0)
    counts, probs = counts[~zero], probs[~zero]
    if counts.size <= 1:
        return TestOutcome(0.0, 1.0, 0)
    e, (o,) = _pool(probs * n, counts, min_expected=min_expected)
    if e.size <= 1:
        return TestOutcome(0.0, 1.0, 0)
    res = stats.chisquare(o, e)
    return TestOutcome(float(res.statistic), float(res.pvalue), e.size - 1)


def chi_square_two_sample(counts_a, counts_b, *, min_expected: float = MIN_EXPECTED) -> TestOutcome:
    """Chi-square homogeneity test for two count vectors over the same cells."""
    a = np.asarray(counts_a, dtype=np.float64)
    b = np.asarray(counts_b, dtype=np.float64)
    both = a + b
    nz = both > 0
    a, b, both = a[nz], b[nz], both[nz]
    if a.size <= 1:
        return TestOutcome(0.0, 1.0, 0)
    # pool on the smaller of the two expected rows
    share = min(a.sum(), b.sum()) / both.sum()
    _, (a, b) = _pool(both * share, a, b, min_expected=min_expected)
    if a.size <= 1:
        return TestOutcome(0.0, 1.0, 0)
    chi2, p, dof, _ = stats.chi2_contingency(np.vstack([a, b]), correction=False)
    return TestOutcome(float(chi2), float(p), int(dof))


def value_counts(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Counts of two integer samples over their joint support."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    lo = min(a.min(), b.min())
    size = max(a.max(), b.max()) - lo + 1
    return np.bincount(a - lo, minlength=size), np.bincount(b - lo, minlength=size)


def ks_statistic(samples, cdf) -> TestOutcome:
    res = stats.kstest(np.asarray(samples), cdf)
    return TestOutcome(float(res.statistic), float(res.pvalue))


def ks_threshold(n: int) -> float:
    """Asymptotic 0.001-level critical value ``1.95 / sqrt(n)``."""
    return 1.95 / np.sqrt(n)


def within_sigmas(estimate: float, expected: float, stderr: float, k: float = 3.0) -> bool:
    return abs(estimate - expected) <= k * stderr
