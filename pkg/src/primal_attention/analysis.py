"""Higher-level analysis drivers shared by the CLI and the test suite.

Covers the randomized verification grid over head configurations, kernel
extraction from trained models for spectrum reports, and the matched-run
effective-rank comparison used to study the regularizer's low-rank push.
"""

from __future__ import annotations

import numpy as np

from .attention import (
    DATA_DEPENDENT,
    DATA_INDEPENDENT,
    HeadParams,
    canonical_attention_matrix,
)
from .errors import ConfigError
from .features import COSINE, IDENTITY, FeatureMapSpec, ProjectionSet
from .model import CANONICAL, PRIMAL, Model, collect_layer_inputs
from .oracle import VerificationReport, build_kernel, verify_suite
from .rng import Rng
from .spectrum import compute_spectrum
from .tasks import Dataset

DEFAULT_GRID = {
    "cases": 200,
    "n_range": (3, 32),
    "d_range": (2, 6),
    "modes": (DATA_INDEPENDENT, DATA_DEPENDENT),
    "feature_maps": (COSINE, IDENTITY),
    "rank_multi": 2,
    "seed": 20240901,
    "inject_corruption": False,
}


def random_verify_case(seed: int, index: int, cfg: dict):
    """One random head configuration for the verification grid."""
    rng = Rng(seed).derive("case", index)
    n_lo, n_hi = cfg["n_range"]
    d_lo, d_hi = cfg["d_range"]
    n = n_lo + rng.below(n_hi - n_lo + 1)
    d = d_lo + rng.below(d_hi - d_lo + 1)
    s = 1 + rng.below(n)
    mode = cfg["modes"][index % len(cfg["modes"])]
    fmap_kind = cfg["feature_maps"][(index // len(cfg["modes"])) % len(cfg["feature_maps"])]
    rank_multi = cfg.get("rank_multi", 2)

    x = rng.normals((n, d))
    d_q = d  # data-dependent folding requires square projections
    w_q = rng.normals((d_q, d)) / np.sqrt(d)
    w_k = rng.normals((d_q, d)) / np.sqrt(d)
    rows = d_q if mode == DATA_INDEPENDENT else min(s * rank_multi, n)
    params = HeadParams(
        projections=ProjectionSet(w_q=w_q, w_k=w_k),
        w_e=np.zeros((rows, s)),
        w_r=np.zeros((rows, s)),
        lambda_raw=np.zeros(s),
        mode=mode,
        rank_multi=rank_multi,
        subsample_seed=rng.next_u64(),
    )
    fmap = FeatureMapSpec(kind=fmap_kind, dim=d_q)
    return x, params, fmap, s


def run_verification_grid(cfg: dict | None = None) -> dict:
    """Run the certified-identity suite over a randomized case grid."""
    merged = dict(DEFAULT_GRID)
    merged.update(cfg or {})
    cases = int(merged["cases"])
    if cases < 1:
        raise ConfigError("grid needs at least one case")
    out_cases = []
    all_passed = True
    for index in range(cases):
        x, params, fmap, s = random_verify_case(int(merged["seed"]), index, merged)
        report: VerificationReport = verify_suite(
            x, params, fmap, s, corrupt_h_e=bool(merged.get("inject_corruption", False))
        )
        all_passed = all_passed and report.all_passed
        out_cases.append(
            {
                "case": index,
                "n": x.shape[0],
                "d": x.shape[1],
                "s": s,
                "mode": params.mode,
                "feature_map": fmap.kind,
                "all_passed": report.all_passed,
                "failing": report.failing(),
                "checks": report.to_jsonable()["checks"],
            }
        )
    return {
        "schema": 1,
        "grid": {k: list(v) if isinstance(v, tuple) else v for k, v in merged.items()},
        "cases": out_cases,
        "all_passed": all_passed,
    }


def model_kernel_matrix(model: Model, dataset: Dataset, layer: int, head: int, batch_seed: int) -> np.ndarray:
    """Induced kernel (primal layer) or attention matrix (canonical layer).

    The analyzed sequence is drawn from the test split by ``batch_seed``;
    the matrix is built on the standardized input the chosen attention
    sublayer actually sees.
    """
    cfg = model.config
    if not 0 <= layer < cfg.layers or not 0 <= head < cfg.heads:
        raise ConfigError(f"layer {layer} / head {head} out of range")
    pick = Rng(batch_seed).below(dataset.test_inputs.shape[0])
    sequence = dataset.test_inputs[pick]
    layer_input = collect_layer_inputs(model, sequence)[layer]
    kind, head_params, _ = model.head_params_at(layer, head)
    if kind == CANONICAL:
        return canonical_attention_matrix(layer_input, head_params.projections, causal=cfg.causal)
    return build_kernel(layer_input, head_params, cfg.feature_map)


def last_primal_layer(model: Model) -> int:
    for layer in reversed(range(model.config.layers)):
        if model.config.kinds[layer] == PRIMAL:
            return layer
    raise ConfigError("model has no primal layer")


def mean_effective_rank(
    model: Model,
    dataset: Dataset,
    layer: int,
    tau: float = 0.9,
    sequence_count: int = 8,
) -> float:
    """Mean effective rank of one layer's kernels over heads and sequences."""
    cfg = model.config
    ranks = []
    count = min(sequence_count, dataset.test_inputs.shape[0])
    for seq_idx in range(count):
        layer_input = collect_layer_inputs(model, dataset.test_inputs[seq_idx])[layer]
        for head in range(cfg.heads):
            kind, head_params, _ = model.head_params_at(layer, head)
            if kind == CANONICAL:
                matrix = canonical_attention_matrix(layer_input, head_params.projections, causal=cfg.causal)
            else:
                matrix = build_kernel(layer_input, head_params, cfg.feature_map)
            report = compute_spectrum(matrix, thresholds=(tau,))
            ranks.append(report.effective_ranks[tau])
    return float(np.mean(ranks))
