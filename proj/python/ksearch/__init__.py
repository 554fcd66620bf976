"""Kernel structure search for Gaussian-process regression."""

from ._core import (
    Tree,
    expected_improvement,
    feature_distributions,
    gram_matrix,
    kernel_kernel,
    log_evidence,
    neighbors,
    parse,
    random_mutation,
    search,
    simulate,
    sot_distance,
)

__all__ = [
    "Tree",
    "expected_improvement",
    "feature_distributions",
    "gram_matrix",
    "kernel_kernel",
    "log_evidence",
    "neighbors",
    "parse",
    "random_mutation",
    "search",
    "simulate",
    "sot_distance",
]

__version__ = "0.1.0"
