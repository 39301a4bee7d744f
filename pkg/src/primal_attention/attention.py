"""Attention forward passes.

Two mechanisms share the projection/feature plumbing from
:mod:`primal_attention.features`:

* the primal mechanism projects feature-mapped queries and keys through
  two learned weight banks into s-dimensional "e" and "r" scores per
  position, concatenates them, and maps the 2s channels to d_v - linear
  in sequence length, no N x N matrix anywhere;
* the canonical softmax baseline materializes the full attention weight
  matrix and aggregates values with it.

Projection weights come in two flavours. Data-independent weights are
plain p x s parameters. Data-dependent weights are folded through a
(possibly subsampled) copy of the input sequence: the effective p x s
weights become F_X^T W with F_X rows drawn from X itself, which requires
the feature dimension p to equal the model width d. The causal variant of
the data-dependent mode mixes each position only over its prefix (and
disables subsampling); data-independent scores are positionwise, hence
causal as-is.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import flops
from .errors import DegenerateNormalizerError, ShapeError
from .features import (
    RANDOM_EXPONENTIAL,
    FeatureMapSpec,
    ProjectionSet,
    feature_map_rows,
    project,
)
from .linalg import as_matrix, check_finite
from .rng import Rng

DATA_INDEPENDENT = "data_independent"
DATA_DEPENDENT = "data_dependent"


@dataclass(frozen=True)
class HeadParams:
    """Learnable state of one attention head.

    ``w_e``/``w_r`` are the raw projection-weight parameters: p x s in
    data-independent mode, n x s (n = min(s * rank_multi, N), or N when
    causal) in data-dependent mode. ``lambda_raw`` parameterizes the
    positive diagonal regularization weights as exp(lambda_raw).
    """

    projections: ProjectionSet
    w_e: np.ndarray
    w_r: np.ndarray
    lambda_raw: np.ndarray
    mode: str = DATA_INDEPENDENT
    rank_multi: int = 10
    subsample_seed: int = 0
    causal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "w_e", as_matrix(self.w_e, "w_e"))
        object.__setattr__(self, "w_r", as_matrix(self.w_r, "w_r"))
        lam = np.asarray(self.lambda_raw, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "lambda_raw", lam)
        if self.mode not in (DATA_INDEPENDENT, DATA_DEPENDENT):
            raise ShapeError(f"unknown projection-weight mode: {self.mode!r}")
        if self.w_e.shape != self.w_r.shape:
            raise ShapeError(f"w_e shape {self.w_e.shape} != w_r shape {self.w_r.shape}")
        if self.s < 1:
            raise ShapeError("need at least one projection direction")
        if lam.shape[0] != self.s:
            raise ShapeError(f"lambda_raw length {lam.shape[0]} != s={self.s}")
        if self.rank_multi < 1:
            raise ShapeError("rank_multi must be positive")

    @property
    def s(self) -> int:
        return self.w_e.shape[1]

    def lambda_diag(self) -> np.ndarray:
        """Strictly positive diagonal of the regularization weights."""
        return np.exp(self.lambda_raw)


@dataclass(frozen=True)
class OutputMap:
    """Linear map from the concatenated 2s score channels to d_v."""

    w_o: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w_o", as_matrix(self.w_o, "w_o"))

    @property
    def d_v(self) -> int:
        return self.w_o.shape[0]


@dataclass
class AttentionOutput:
    e_scores: np.ndarray
    r_scores: np.ndarray
    concatenated: np.ndarray
    projected: np.ndarray


def subsample_indices(seed: int, n_total: int, n_take: int) -> list[int]:
    """Deterministic uniform sample without replacement, sorted ascending."""
    if n_take >= n_total:
        return list(range(n_total))
    return sorted(Rng(seed).sample_without_replacement(n_total, n_take))


def build_fx(x, params: HeadParams) -> np.ndarray:
    """Rows of X backing the data-dependent weight fold.

    Uniform subsample without replacement of n rows, indices sorted
    ascending and fully determined by ``params.subsample_seed``. Heads are
    constructed with n = min(s * rank_multi, N) weight-bank rows, and the
    bank's row count is authoritative here so that replacing the weights
    (e.g. with a truncated stationary solution) keeps the original fold.
    Causal heads use the full sequence.
    """
    x = as_matrix(x, "input sequence")
    if params.mode != DATA_DEPENDENT:
        raise ShapeError("build_fx applies to data-dependent mode only")
    n_positions = x.shape[0]
    if params.causal:
        return x
    n = min(params.w_e.shape[0], n_positions)
    if n == n_positions:
        return x
    return x[subsample_indices(params.subsample_seed, n_positions, n)]


def head_feature_rows(x, params: HeadParams, fmap: FeatureMapSpec) -> tuple[np.ndarray, np.ndarray]:
    """Feature-mapped query and key rows for one head."""
    q, k, _ = project(params.projections, x)
    check_finite(q, "queries")
    check_finite(k, "keys")
    phi_q = check_finite(feature_map_rows(fmap, q), "phi_q")
    phi_k = check_finite(feature_map_rows(fmap, k), "phi_k")
    return phi_q, phi_k


def _prefix_dhat(phi_q: np.ndarray, phi_k: np.ndarray) -> np.ndarray:
    # causal analogue of the per-position normalizer: keys summed over the prefix
    prefix = np.cumsum(phi_k, axis=0)
    values = np.einsum("ij,ij->i", phi_q, prefix)
    if np.any(values <= 0.0):
        raise DegenerateNormalizerError(
            f"normalizer component {int(np.argmin(values))} is not positive"
        )
    return values


def primal_scores(x, params: HeadParams, fmap: FeatureMapSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-position e/r projection scores (N x s each)."""
    x = as_matrix(x, "input sequence")
    n_positions = x.shape[0]
    p = fmap.dim
    s = params.s
    phi_q, phi_k = head_feature_rows(x, params, fmap)
    flops.add_flops(2 * flops.feature_map_flop_count(fmap.kind, n_positions, p, fmap.input_dim))

    if params.mode == DATA_INDEPENDENT:
        if params.w_e.shape[0] != p:
            raise ShapeError(f"w_e rows {params.w_e.shape[0]} != feature dim {p}")
        e = phi_q @ params.w_e
        r = phi_k @ params.w_r
        flops.add_flops(2 * (2 * n_positions * p * s))
    else:
        if p != x.shape[1]:
            raise ShapeError(
                f"data-dependent weights need feature dim == input width, got {p} != {x.shape[1]}"
            )
        if params.causal:
            if params.w_e.shape[0] != n_positions:
                raise ShapeError(
                    f"causal data-dependent w_e needs {n_positions} rows, got {params.w_e.shape[0]}"
                )
            mix_q = np.tril(phi_q @ x.T)
            mix_k = np.tril(phi_k @ x.T)
            e = mix_q @ params.w_e
            r = mix_k @ params.w_r
            flops.add_flops(2 * (2 * n_positions * n_positions * p))
            flops.add_flops(2 * (2 * n_positions * n_positions * s))
        else:
            fx = build_fx(x, params)
            if params.w_e.shape[0] != fx.shape[0]:
                raise ShapeError(
                    f"data-dependent w_e needs {fx.shape[0]} rows, got {params.w_e.shape[0]}"
                )
            e = phi_q @ (fx.T @ params.w_e)
            r = phi_k @ (fx.T @ params.w_r)
            flops.add_flops(2 * (2 * fx.shape[0] * p * s))
            flops.add_flops(2 * (2 * n_positions * p * s))

    if fmap.kind == RANDOM_EXPONENTIAL:
        if params.causal:
            dhat = _prefix_dhat(phi_q, phi_k)
        else:
            from .features import dhat_normalizer

            dhat = dhat_normalizer(phi_q, phi_k)
        scale = dhat[:, None] ** -0.5
        e = e * scale
        r = r * scale
        flops.add_flops(n_positions * p + 2 * n_positions * p + 2 * n_positions + 2 * n_positions * s)

    check_finite(e, "e_scores")
    check_finite(r, "r_scores")
    return e, r


def primal_forward(x, params: HeadParams, fmap: FeatureMapSpec, out_map: OutputMap) -> AttentionOutput:
    """Primal attention output: projected [e_i; r_i] per position."""
    e, r = primal_scores(x, params, fmap)
    if out_map.w_o.shape[1] != 2 * params.s:
        raise ShapeError(f"output map expects {2 * params.s} channels, got {out_map.w_o.shape[1]}")
    concatenated = np.concatenate([e, r], axis=1)
    projected = concatenated @ out_map.w_o.T
    flops.add_flops(2 * x.shape[0] * (2 * params.s) * out_map.d_v)
    check_finite(projected, "projected")
    return AttentionOutput(e_scores=e, r_scores=r, concatenated=concatenated, projected=projected)


def canonical_attention_matrix(x, ps: ProjectionSet, causal: bool = False) -> np.ndarray:
    """Row-stochastic softmax attention weights with 1/sqrt(d_k) temperature."""
    q, k, _ = project(ps, x)
    n = q.shape[0]
    scores = (q @ k.T) / np.sqrt(ps.d_qk)
    if causal:
        scores = np.where(np.tril(np.ones((n, n), dtype=bool)), scores, -np.inf)
    scores = scores - scores.max(axis=1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=1, keepdims=True)
    flops.add_flops(n * n * (2 * ps.d_qk + 1) + 4 * n * n)
    return check_finite(weights, "attention weights")


def canonical_forward(x, ps: ProjectionSet, causal: bool = False) -> np.ndarray:
    """Canonical softmax attention: o_i = sum_j v(x_j) softmax_j(q_i . k_j / sqrt(d_k))."""
    if ps.w_v is None:
        raise ShapeError("canonical attention needs value projections (w_v)")
    x = as_matrix(x, "input sequence")
    weights = canonical_attention_matrix(x, ps, causal=causal)
    v = x @ ps.w_v.T
    out = weights @ v
    flops.add_flops(2 * x.shape[0] * x.shape[0] * ps.w_v.shape[0])
    return check_finite(out, "canonical output")


def multi_head_forward(
    x,
    heads: list[HeadParams],
    head_out_maps: list[OutputMap] | None,
    mixer: np.ndarray,
    fmap: FeatureMapSpec | None = None,
    kind: str = "primal",
) -> np.ndarray:
    """Concatenate per-head outputs along features, then apply the mixer.

    Every head reads the full input sequence; heads differ only through
    their parameters. ``kind`` selects the mechanism for all heads.
    """
    if not heads:
        raise ShapeError("need at least one head")
    x = as_matrix(x, "input sequence")
    mixer = as_matrix(mixer, "mixer")
    outputs = []
    if kind == "primal":
        if fmap is None or head_out_maps is None or len(head_out_maps) != len(heads):
            raise ShapeError("primal heads need a feature map and one output map per head")
        for hp, om in zip(heads, head_out_maps):
            outputs.append(primal_forward(x, hp, fmap, om).projected)
    elif kind == "canonical":
        for hp in heads:
            outputs.append(canonical_forward(x, hp.projections, causal=hp.causal))
    else:
        raise ShapeError(f"unknown attention kind: {kind!r}")
    concat = np.concatenate(outputs, axis=1)
    if mixer.shape[1] != concat.shape[1]:
        raise ShapeError(f"mixer expects {concat.shape[1]} columns, got {mixer.shape[1]}")
    return check_finite(concat @ mixer.T, "mixed heads")


def with_stationary(params: HeadParams, w_e: np.ndarray, w_r: np.ndarray, lam: np.ndarray) -> HeadParams:
    """Copy of params with replaced projection weights and diagonal."""
    return replace(params, w_e=w_e, w_r=w_r, lambda_raw=np.log(lam))
