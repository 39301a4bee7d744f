"""Query/key projections and the explicit feature maps applied to them.

Three feature maps are supported on projected queries/keys:

* ``cosine``   - unit-normalize each vector (norm clamped at ``epsilon`` so
  a dead all-zero token maps to zero instead of raising);
* ``identity`` - pass-through;
* ``random_exponential`` - the softmax surrogate
  ``g(z) = exp(-|z|^2/2) * (exp(w_1.z), ..., exp(w_p.z))`` with frozen
  standard-normal directions ``w_i``, plus its positive per-position
  normalizer (see :func:`dhat_normalizer`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateNormalizerError, ShapeError
from .linalg import as_matrix
from .rng import Rng

COSINE = "cosine"
IDENTITY = "identity"
RANDOM_EXPONENTIAL = "random_exponential"
_KINDS = (COSINE, IDENTITY, RANDOM_EXPONENTIAL)


@dataclass(frozen=True)
class FeatureMapSpec:
    """Immutable description of a feature map from R^input_dim to R^dim.

    For cosine/identity, ``dim`` must equal the projected query/key
    dimension. For random_exponential, ``dim`` counts the direction
    vectors (defaulting to ``input_dim``); the directions are drawn once
    at construction from ``seed`` and are bit-reproducible.
    """

    kind: str
    dim: int
    seed: int = 0
    epsilon: float = 1e-12
    input_dim: int | None = None
    directions: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ShapeError(f"unknown feature map kind: {self.kind!r}")
        if self.dim < 1:
            raise ShapeError("feature dimension must be positive")
        if self.epsilon <= 0.0:
            raise ShapeError("epsilon must be positive")
        input_dim = self.dim if self.input_dim is None else self.input_dim
        object.__setattr__(self, "input_dim", input_dim)
        if self.kind in (COSINE, IDENTITY) and input_dim != self.dim:
            raise ShapeError(f"{self.kind} map requires input_dim == dim, got {input_dim} != {self.dim}")
        if self.kind == RANDOM_EXPONENTIAL:
            w = Rng(self.seed).normals((self.dim, input_dim))
            object.__setattr__(self, "directions", w)

    def to_config(self) -> dict:
        out = {"kind": self.kind, "p": self.dim, "seed": self.seed, "epsilon": self.epsilon}
        if self.input_dim != self.dim:
            out["input_dim"] = self.input_dim
        return out

    @classmethod
    def from_config(cls, cfg: dict) -> "FeatureMapSpec":
        return cls(
            kind=cfg["kind"],
            dim=int(cfg["p"]),
            seed=int(cfg.get("seed", 0)),
            epsilon=float(cfg.get("epsilon", 1e-12)),
            input_dim=cfg.get("input_dim"),
        )


def feature_map_rows(spec: FeatureMapSpec, z: np.ndarray) -> np.ndarray:
    """Apply the feature map to each row of an N x input_dim matrix."""
    z = as_matrix(z, "feature map input")
    if z.shape[1] != spec.input_dim:
        raise ShapeError(f"feature map expects width {spec.input_dim}, got {z.shape[1]}")
    if spec.kind == IDENTITY:
        return z.copy()
    if spec.kind == COSINE:
        norms = np.sqrt(np.einsum("ij,ij->i", z, z))[:, None]
        return z / np.maximum(norms, spec.epsilon)
    scale = np.exp(-0.5 * np.einsum("ij,ij->i", z, z))[:, None]
    return scale * np.exp(z @ spec.directions.T)


def apply_feature_map(spec: FeatureMapSpec, z) -> np.ndarray:
    """Apply the feature map to a single vector."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ShapeError(f"expected a vector, got ndim={z.ndim}")
    return feature_map_rows(spec, z[None, :])[0]


@dataclass(frozen=True)
class ProjectionSet:
    """Per-head linear projections; rows of X map through W^T."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray | None = None

    def __post_init__(self):
        w_q = as_matrix(self.w_q, "w_q")
        w_k = as_matrix(self.w_k, "w_k")
        object.__setattr__(self, "w_q", w_q)
        object.__setattr__(self, "w_k", w_k)
        if w_q.shape[0] != w_k.shape[0]:
            raise ShapeError(f"query/key output dims differ: {w_q.shape[0]} != {w_k.shape[0]}")
        if w_q.shape[1] != w_k.shape[1]:
            raise ShapeError(f"query/key input dims differ: {w_q.shape[1]} != {w_k.shape[1]}")
        if self.w_v is not None:
            w_v = as_matrix(self.w_v, "w_v")
            object.__setattr__(self, "w_v", w_v)
            if w_v.shape[1] != w_q.shape[1]:
                raise ShapeError(f"value input dim {w_v.shape[1]} != {w_q.shape[1]}")

    @property
    def d_qk(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_in(self) -> int:
        return self.w_q.shape[1]


def project(ps: ProjectionSet, x) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Row-wise projections: Q = X W_q^T, K = X W_k^T, V = X W_v^T."""
    x = as_matrix(x, "input sequence")
    if x.shape[1] != ps.d_in:
        raise ShapeError(f"input width {x.shape[1]} != projection input dim {ps.d_in}")
    q = x @ ps.w_q.T
    k = x @ ps.w_k.T
    v = x @ ps.w_v.T if ps.w_v is not None else None
    return q, k, v


def dhat_normalizer(phi_q_rows: np.ndarray, phi_k_rows: np.ndarray) -> np.ndarray:
    """Per-position normalizer: component i is phi_q(x_i) . sum_j phi_k(x_j).

    Only meaningful for the random_exponential map, whose strictly positive
    features guarantee positive components; any nonpositive component is a
    degenerate input and raises.
    """
    pq = as_matrix(phi_q_rows, "phi_q rows")
    pk = as_matrix(phi_k_rows, "phi_k rows")
    if pq.shape != pk.shape:
        raise ShapeError(f"feature row shapes differ: {pq.shape} != {pk.shape}")
    values = pq @ pk.sum(axis=0)
    if np.any(values <= 0.0):
        raise DegenerateNormalizerError(
            f"normalizer component {int(np.argmin(values))} is not positive"
        )
    return values
