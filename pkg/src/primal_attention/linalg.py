"""Dense float64 matrices and a one-sided Jacobi SVD.

Matrices are plain C-contiguous ``numpy.ndarray`` values with two axes;
every exported operation checks shapes and rejects non-finite entries.
The SVD is computed in-repo so that the factorization used throughout the
package is a single, inspectable algorithm: one-sided Jacobi rotations
orthogonalize the columns of the working matrix, which is robust at the
matrix sizes this package targets (a few hundred rows).

Conventions fixed here and relied on by the rest of the package:

* singular values are returned in nonincreasing order;
* each left singular vector has its largest-magnitude entry positive,
  ties broken by the lowest row index (the paired right vector is flipped
  with it), so factorizations are deterministic and comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, NumericError, ShapeError

# Convergence: a sweep that applies no rotation means every column pair
# satisfies |w_i . w_j| <= JACOBI_TOL * ||w_i|| * ||w_j||.
JACOBI_TOL = 1e-12


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Validate and return a finite float64 2-D array."""
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={a.ndim}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{name} must have positive dimensions, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError(name)
    return a


def check_finite(a: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(name)
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with shape validation."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return check_finite(a @ b, "matmul result")


@dataclass
class SvdResult:
    """Top-k singular triplets: a = u @ diag(sigma) @ v.T (for full k)."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def residuals(self, a: np.ndarray) -> tuple[float, float]:
        """Frobenius norms of A v - u sigma and A^T u - v sigma."""
        left = np.linalg.norm(a @ self.v - self.u * self.sigma)
        right = np.linalg.norm(a.T @ self.u - self.v * self.sigma)
        return float(left), float(right)


def _jacobi_orthogonalize(w: np.ndarray, v: np.ndarray, tol: float, max_sweeps: int) -> int:
    """Rotate column pairs of w (and v) until all pairs are orthogonal.

    Returns the number of sweeps used. Raises ConvergenceError when the
    sweep cap is reached with rotations still pending.
    """
    m = w.shape[1]
    for sweep in range(1, max_sweeps + 1):
        # recompute squared column norms each sweep to bound incremental drift
        sq = np.einsum("ij,ij->j", w, w)
        rotated = 0
        for i in range(m - 1):
            for j in range(i + 1, m):
                aij = float(w[:, i] @ w[:, j])
                aii = sq[i]
                ajj = sq[j]
                if abs(aij) <= tol * np.sqrt(aii * ajj):
                    continue
                rotated += 1
                if ajj == aii:
                    t = 1.0
                else:
                    tau = (ajj - aii) / (2.0 * aij)
                    t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                wi = w[:, i].copy()
                w[:, i] = c * wi - s * w[:, j]
                w[:, j] = s * wi + c * w[:, j]
                vi = v[:, i].copy()
                v[:, i] = c * vi - s * v[:, j]
                v[:, j] = s * vi + c * v[:, j]
                sq[i] = max(c * c * aii - 2.0 * c * s * aij + s * s * ajj, 0.0)
                sq[j] = max(s * s * aii + 2.0 * c * s * aij + c * c * ajj, 0.0)
        if rotated == 0:
            return sweep
    raise ConvergenceError("Jacobi SVD did not converge", iterations=max_sweeps)


def _complete_orthonormal(u: np.ndarray, dead: list[int]) -> None:
    """Fill columns listed in `dead` with unit vectors orthogonal to the rest.

    Deterministic: each filled column is the residual of the lowest-index
    standard basis vector not yet spanned.
    """
    n = u.shape[0]
    live = [c for c in range(u.shape[1]) if c not in dead]
    basis = u[:, live]
    residual = np.eye(n) - basis @ basis.T
    for col in dead:
        norms = np.sqrt(np.einsum("ij,ij->j", residual, residual))
        candidates = np.nonzero(norms > 1e-8)[0]
        if candidates.size == 0:  # pragma: no cover - n columns always fit
            raise ShapeError("cannot complete orthonormal basis")
        pick = int(candidates[0])
        vec = residual[:, pick] / norms[pick]
        u[:, col] = vec
        residual -= vec[:, None] * (vec @ residual)[None, :]


def _apply_sign_convention(u: np.ndarray, v: np.ndarray) -> None:
    for col in range(u.shape[1]):
        pivot = int(np.argmax(np.abs(u[:, col])))
        if u[pivot, col] < 0.0:
            u[:, col] = -u[:, col]
            v[:, col] = -v[:, col]


def svd(a, k: int, *, tol: float = JACOBI_TOL, max_sweeps: int | None = None) -> SvdResult:
    """Top-k singular triplets of a dense matrix by one-sided Jacobi.

    Satisfies A v_l = sigma_l u_l and A^T u_l = sigma_l v_l with orthonormal
    u and v columns. `max_sweeps` defaults to 10 * max(rows, cols).
    """
    a = as_matrix(a)
    rows, cols = a.shape
    if not 1 <= k <= min(rows, cols):
        raise ShapeError(f"k={k} out of range for shape {a.shape}")
    transposed = rows < cols
    work = (a.T if transposed else a).copy()
    n, m = work.shape
    v = np.eye(m)
    cap = max_sweeps if max_sweeps is not None else 10 * max(rows, cols)
    _jacobi_orthogonalize(work, v, tol, cap)

    sigma = np.linalg.norm(work, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    work = work[:, order]
    v = v[:, order]

    u = np.zeros_like(work)
    cutoff = max(n, m) * np.finfo(np.float64).eps * (sigma[0] if sigma[0] > 0 else 1.0)
    dead = []
    for col in range(m):
        if sigma[col] > cutoff:
            u[:, col] = work[:, col] / sigma[col]
        else:
            dead.append(col)
    if dead:
        sigma = sigma.copy()
        sigma[dead] = 0.0
        _complete_orthonormal(u, dead)

    if transposed:
        u, v = v, u
    _apply_sign_convention(u, v)
    return SvdResult(u=u[:, :k].copy(), sigma=sigma[:k].copy(), v=v[:, :k].copy())


def save_matrix_csv(path, a) -> None:
    """Write one row per line, comma separated, 17 significant digits."""
    a = as_matrix(a)
    lines = [",".join(f"{x:.17g}" for x in row) for row in a]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_matrix_csv(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        rows = [
            [float(cell) for cell in line.strip().split(",")]
            for line in fh
            if line.strip()
        ]
    if not rows:
        raise ShapeError(f"empty matrix file: {path}")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ShapeError(f"ragged rows in matrix file: {path}")
    return as_matrix(rows, name=str(path))
