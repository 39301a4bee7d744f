"""Dual-side ground truth for the primal attention mechanism.

Build the (generally asymmetric) kernel matrix induced by a head's
feature maps, factor it through its coupled singular system

    K H_r = H_e S,    K' H_e = H_r S,

reconstruct the primal weight banks that are stationary for the
projection-variance objective, and certify the whole chain: residuals,
orthonormality, full-rank reconstruction, the zero value of the
objective at stationarity, agreement of primal scores with their dual
kernel expansions, and the per-direction equal-norm identity checked on
an independently computed eigensystem.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .attention import (
    DATA_DEPENDENT,
    DATA_INDEPENDENT,
    HeadParams,
    build_fx,
    head_feature_rows,
    primal_scores,
    with_stationary,
)
from .errors import IllConditionedError, ShapeError
from .features import FeatureMapSpec
from .linalg import as_matrix, svd
from .objective import ksvd_objective

SIGMA_FLOOR = 1e-12


@dataclass
class KsvdSolution:
    """Leading singular triplets of the attention kernel.

    ``truncated`` flags that directions with (numerically) zero singular
    values were dropped, so fewer than the requested s triplets remain.
    """

    h_e: np.ndarray
    h_r: np.ndarray
    sigma: np.ndarray
    truncated: bool = False

    @property
    def s(self) -> int:
        return self.sigma.shape[0]


@dataclass
class StationaryParams:
    w_e_star: np.ndarray
    w_r_star: np.ndarray
    lambda_star: np.ndarray


@dataclass
class CheckResult:
    name: str
    residual: float
    tolerance: float
    passed: bool


@dataclass
class VerificationReport:
    checks: list[CheckResult]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_jsonable(self) -> dict:
        return {
            "schema": 1,
            "checks": [
                {
                    "name": c.name,
                    "residual": c.residual,
                    "tolerance": c.tolerance,
                    "pass": c.passed,
                }
                for c in self.checks
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_jsonable(), indent=2, sort_keys=True)


def build_kernel(x, params: HeadParams, fmap: FeatureMapSpec) -> np.ndarray:
    """N x N kernel of pairwise feature inner products.

    Data-independent: K_ij = phi_q(x_i) . phi_k(x_j). Data-dependent mode
    routes both features through the subsampled sequence rows first:
    K_ij = (F_X phi_q(x_i)) . (F_X phi_k(x_j)).
    """
    x = as_matrix(x, "input sequence")
    phi_q, phi_k = head_feature_rows(x, params, fmap)
    if params.mode == DATA_INDEPENDENT:
        return phi_q @ phi_k.T
    fx = build_fx(x, params)
    return (phi_q @ fx.T) @ (fx @ phi_k.T)


def ksvd_solve(kernel, s: int) -> KsvdSolution:
    """Top-s singular triplets of the kernel; zero singular values excluded."""
    kernel = as_matrix(kernel, "kernel")
    n = kernel.shape[0]
    if kernel.shape[1] != n:
        raise ShapeError(f"kernel must be square, got {kernel.shape}")
    if not 1 <= s <= n:
        raise ShapeError(f"s={s} out of range for an {n} x {n} kernel")
    result = svd(kernel, s)
    top = result.sigma[0] if result.sigma[0] > 0.0 else 1.0
    keep = int(np.sum(result.sigma > SIGMA_FLOOR * max(1.0, top)))
    if keep == 0:
        raise IllConditionedError("kernel has no positive singular values")
    return KsvdSolution(
        h_e=result.u[:, :keep].copy(),
        h_r=result.v[:, :keep].copy(),
        sigma=result.sigma[:keep].copy(),
        truncated=keep < s,
    )


def stationary_params(sol: KsvdSolution, x, params: HeadParams, fmap: FeatureMapSpec) -> StationaryParams:
    """Primal weight banks that are stationary for the head objective.

    W_e* aggregates key features against the right singular vectors and
    W_r* query features against the left ones; the stationary diagonal is
    the inverse of the singular values.
    """
    if np.any(sol.sigma < SIGMA_FLOOR):
        raise IllConditionedError("singular value underflow; cannot invert")
    x = as_matrix(x, "input sequence")
    phi_q, phi_k = head_feature_rows(x, params, fmap)
    w_e = phi_k.T @ sol.h_r
    w_r = phi_q.T @ sol.h_e
    if params.mode == DATA_DEPENDENT:
        fx = build_fx(x, params)
        w_e = fx @ w_e
        w_r = fx @ w_r
    return StationaryParams(w_e_star=w_e, w_r_star=w_r, lambda_star=1.0 / sol.sigma)


def dual_scores(sol_or_h, kernel) -> tuple[np.ndarray, np.ndarray]:
    """Kernel-expansion scores: e = K H_r and r = K' H_e."""
    if isinstance(sol_or_h, KsvdSolution):
        h_e, h_r = sol_or_h.h_e, sol_or_h.h_r
    else:
        h_e, h_r = sol_or_h
    kernel = as_matrix(kernel, "kernel")
    return kernel @ h_r, kernel.T @ h_e


def _equal_norm_residual(kernel: np.ndarray) -> float:
    """Max deviation of |u|^2 - |v|^2 over the coupled eigensystem.

    Uses a symmetric eigendecomposition of [[0, K], [K', 0]] - an
    independent route to the singular system - whose eigenvectors stack
    the left/right vectors without normalizing each half separately.
    """
    n = kernel.shape[0]
    augmented = np.zeros((2 * n, 2 * n))
    augmented[:n, n:] = kernel
    augmented[n:, :n] = kernel.T
    eigenvalues, vectors = np.linalg.eigh(augmented)
    top = float(np.max(np.abs(eigenvalues))) if eigenvalues.size else 1.0
    worst = 0.0
    for idx in range(2 * n):
        if eigenvalues[idx] <= SIGMA_FLOOR * max(1.0, top):
            continue
        upper = vectors[:n, idx]
        lower = vectors[n:, idx]
        worst = max(worst, abs(float(upper @ upper) - float(lower @ lower)))
    return worst


def verify_suite(
    x,
    params: HeadParams,
    fmap: FeatureMapSpec,
    s: int,
    corrupt_h_e: bool = False,
) -> VerificationReport:
    """Run every certified identity for one head configuration.

    ``corrupt_h_e`` flips the sign of one left-singular-vector entry
    before checking, for exercising fault localization; failures are
    reported as data, never raised.
    """
    x = as_matrix(x, "input sequence")
    kernel = build_kernel(x, params, fmap)
    kernel_norm = float(np.linalg.norm(kernel))
    residual_tol = 1e-8 * kernel_norm
    # one full-rank factorization serves both the top-s checks and the
    # reconstruction check (the Jacobi sweep computes all triplets anyway)
    full = ksvd_solve(kernel, kernel.shape[0])
    keep = min(s, full.s)
    sol = KsvdSolution(
        h_e=full.h_e[:, :keep].copy(),
        h_r=full.h_r[:, :keep].copy(),
        sigma=full.sigma[:keep].copy(),
        truncated=keep < s,
    )
    if corrupt_h_e:
        h_e = sol.h_e.copy()
        h_e[0, 0] = -h_e[0, 0]
        sol = KsvdSolution(h_e=h_e, h_r=sol.h_r, sigma=sol.sigma, truncated=sol.truncated)

    checks = []

    def record(name, residual, tolerance):
        residual = float(residual)
        checks.append(CheckResult(name, residual, float(tolerance), residual <= tolerance))

    record("shifted_eigenproblem_left", np.linalg.norm(kernel @ sol.h_r - sol.h_e * sol.sigma), residual_tol)
    record("shifted_eigenproblem_right", np.linalg.norm(kernel.T @ sol.h_e - sol.h_r * sol.sigma), residual_tol)
    eye = np.eye(sol.s)
    record("orthonormality_left", np.linalg.norm(sol.h_e.T @ sol.h_e - eye), 1e-8)
    record("orthonormality_right", np.linalg.norm(sol.h_r.T @ sol.h_r - eye), 1e-8)

    record(
        "reconstruction_full_rank",
        np.linalg.norm(kernel - full.h_e @ (full.sigma[:, None] * full.h_r.T)),
        residual_tol,
    )

    stationary = stationary_params(sol, x, params, fmap)
    head_at_stationary = with_stationary(params, stationary.w_e_star, stationary.w_r_star, stationary.lambda_star)
    e_primal, r_primal = primal_scores(x, head_at_stationary, fmap)
    j_value = ksvd_objective(
        e_primal, r_primal, stationary.w_e_star, stationary.w_r_star, stationary.lambda_star
    )
    record("zero_objective", abs(j_value), 1e-8 * (1.0 + kernel_norm))

    e_dual, r_dual = dual_scores(sol, kernel)
    record("primal_dual_e", np.max(np.abs(e_primal - e_dual)), 1e-8)
    record("primal_dual_r", np.max(np.abs(r_primal - r_dual)), 1e-8)

    record("equal_norm_identity", _equal_norm_residual(kernel), 1e-9)
    return VerificationReport(checks=checks)
