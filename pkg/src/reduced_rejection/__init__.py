"""Reduced Rejection sampling: exact sampling from ``p`` with a proposal
``q`` that need not enclose it, plus the dynamic-weights engine and the
simulators built on it."""

from .core import (
    Branch,
    ContinuousTarget,
    DiscreteTarget,
    SampleRecord,
    acceptance_rejection_sample,
    algorithm_one,
    algorithm_two,
    branch_probabilities,
    path_probability_oracle,
    reduced_rejection_sample,
)
from .dynamic import DynamicWeights, build, sample_target
from .rng import RngStream

__all__ = [
    "Branch",
    "ContinuousTarget",
    "DiscreteTarget",
    "DynamicWeights",
    "RngStream",
    "SampleRecord",
    "acceptance_rejection_sample",
    "algorithm_one",
    "algorithm_two",
    "branch_probabilities",
    "build",
    "path_probability_oracle",
    "reduced_rejection_sample",
    "sample_target",
]
