"""Attention through asymmetric kernel SVD in its primal representation.

The package provides the linear-complexity primal attention mechanism and
its canonical softmax baseline, the dual-side SVD oracle that certifies
their shared kernel identities, a tape-based training harness with
finite-difference gradient certification, and spectrum/efficiency
analysis tooling behind a CLI.
"""

from .attention import (
    DATA_DEPENDENT,
    DATA_INDEPENDENT,
    AttentionOutput,
    HeadParams,
    OutputMap,
    build_fx,
    canonical_attention_matrix,
    canonical_forward,
    multi_head_forward,
    primal_forward,
    primal_scores,
)
from .features import (
    COSINE,
    IDENTITY,
    RANDOM_EXPONENTIAL,
    FeatureMapSpec,
    ProjectionSet,
    apply_feature_map,
    dhat_normalizer,
    project,
)
from .linalg import SvdResult, load_matrix_csv, matmul, save_matrix_csv, svd
from .model import Model, ModelConfig, forward_loss, predict
from .objective import KsvdLossReport, ksvd_objective, total_loss
from .oracle import (
    KsvdSolution,
    StationaryParams,
    VerificationReport,
    build_kernel,
    dual_scores,
    ksvd_solve,
    stationary_params,
    verify_suite,
)
from .rng import Rng, derive_seed
from .spectrum import SpectrumReport, compute_spectrum
from .tasks import Dataset, TaskSpec, make_task
from .train import OptimizerConfig, TrainLog, evaluate, train

__version__ = "0.1.0"
