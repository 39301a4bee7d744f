"""Singular spectrum summaries of attention matrices.

Cumulative explained variance is defined on squared singular values
(variance semantics); a sigma-normalized column is emitted alongside for
comparison. The effective rank at threshold tau is the smallest k whose
cumulative explained variance reaches tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .linalg import as_matrix, svd

DEFAULT_THRESHOLDS = (0.9, 0.95, 0.99)


@dataclass
class SpectrumReport:
    singular_values: np.ndarray
    explained_variance: np.ndarray  # cumulative, sigma^2-normalized
    explained_sigma: np.ndarray  # cumulative, sigma-normalized
    effective_ranks: dict[float, int]


def effective_rank(explained: np.ndarray, tau: float) -> int:
    """Smallest k (1-based) with explained[k-1] >= tau."""
    hits = np.nonzero(explained >= tau)[0]
    if hits.size == 0:
        return int(explained.shape[0])
    return int(hits[0]) + 1


def compute_spectrum(matrix, thresholds=DEFAULT_THRESHOLDS) -> SpectrumReport:
    matrix = as_matrix(matrix, "spectrum input")
    k = min(matrix.shape)
    sigma = svd(matrix, k).sigma
    total_sq = float(np.sum(sigma**2))
    if total_sq == 0.0:
        raise ShapeError("zero matrix has no spectrum")
    explained = np.cumsum(sigma**2) / total_sq
    explained_sigma = np.cumsum(sigma) / float(np.sum(sigma))
    ranks = {tau: effective_rank(explained, tau) for tau in thresholds}
    return SpectrumReport(
        singular_values=sigma,
        explained_variance=explained,
        explained_sigma=explained_sigma,
        effective_ranks=ranks,
    )


def spectrum_csv_rows(report: SpectrumReport):
    for i, sigma in enumerate(report.singular_values):
        yield [
            i + 1,
            float(sigma),
            float(report.explained_variance[i]),
            float(report.explained_sigma[i]),
        ]


SPECTRUM_CSV_HEADER = ["k", "sigma_k", "cum_explained_variance", "cum_explained_sigma"]
