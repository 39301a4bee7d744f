"""Projection-variance objective per head and the total training loss.

Each head's objective balances the weighted second moments of the e/r
projection scores against the coupling trace of its raw weight banks:

    J = 1/2 sum_i e_i' L e_i + 1/2 sum_j r_j' L r_j - Tr(W_e' W_r)

with L the positive diagonal from the head's ``lambda_raw``. J vanishes
exactly at the stationary points recovered by the dual oracle, so training
drives it to zero through a squared penalty added to the task loss:

    total = task_loss + eta * sum_l J_l^2

where J_l is the mean over the heads of layer l. All reductions here use
exact summation (math.fsum), making J invariant under any simultaneous
permutation of the projection directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .linalg import as_matrix


def ksvd_objective(e_scores, r_scores, w_e, w_r, lam) -> float:
    """Evaluate J from scores, raw weight banks and the positive diagonal."""
    e = as_matrix(e_scores, "e_scores")
    r = as_matrix(r_scores, "r_scores")
    w_e = as_matrix(w_e, "w_e")
    w_r = as_matrix(w_r, "w_r")
    lam = np.asarray(lam, dtype=np.float64).reshape(-1)
    s = e.shape[1]
    if r.shape[1] != s or lam.shape[0] != s:
        raise ShapeError(f"score widths and diagonal length must agree, got {e.shape[1]}, {r.shape[1]}, {lam.shape[0]}")
    if w_e.shape != w_r.shape or w_e.shape[1] != s:
        raise ShapeError(f"weight banks must be equal-shaped with {s} columns")
    if np.any(lam <= 0.0):
        raise ShapeError("diagonal must be strictly positive")
    quad_e = math.fsum((e * e * lam).ravel().tolist())
    quad_r = math.fsum((r * r * lam).ravel().tolist())
    cross = math.fsum((w_e * w_r).ravel().tolist())
    return 0.5 * quad_e + 0.5 * quad_r - cross


def total_loss(task_loss: float, per_layer_j, eta: float) -> float:
    """Task loss plus the squared per-layer objective penalty."""
    if eta < 0.0:
        raise ShapeError("eta must be nonnegative")
    penalty = eta * math.fsum(float(j) ** 2 for j in per_layer_j)
    return float(task_loss) + penalty


@dataclass
class KsvdLossReport:
    """Decomposition of one training step's regularized loss."""

    per_head_j: list[list[float]]  # [layer][head]
    eta: float
    task_loss: float = 0.0
    per_layer_j: list[float] = field(init=False)
    penalty: float = field(init=False)

    def __post_init__(self):
        self.per_layer_j = [
            math.fsum(heads) / len(heads) if heads else 0.0 for heads in self.per_head_j
        ]
        self.penalty = self.eta * math.fsum(j * j for j in self.per_layer_j)

    @property
    def total(self) -> float:
        return self.task_loss + self.penalty
