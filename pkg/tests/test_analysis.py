import numpy as np
import pytest

from primal_attention.analysis import (
    last_primal_layer,
    mean_effective_rank,
    model_kernel_matrix,
)
from primal_attention.errors import ConfigError
from primal_attention.model import Model, ModelConfig
from primal_attention.tasks import TaskSpec, make_task


def build_run(kinds=("primal", "primal"), seed=0):
    task = TaskSpec(
        kind="majority_token",
        n_positions=8,
        vocab=4,
        classes=2,
        dataset_seed=seed,
        train_size=16,
        test_size=8,
    )
    cfg = ModelConfig.for_task(
        task, layers=len(kinds), kinds=tuple(kinds), heads=2, d_model=10, head_dim=10, s=3, d_v=5
    )
    return make_task(task), Model.build(cfg, init_seed=seed + 1)


class TestModelKernelMatrix:
    def test_primal_layer_kernel_shape_and_determinism(self):
        ds, model = build_run()
        kernel = model_kernel_matrix(model, ds, layer=1, head=0, batch_seed=5)
        assert kernel.shape == (8, 8)
        assert np.array_equal(kernel, model_kernel_matrix(model, ds, layer=1, head=0, batch_seed=5))

    def test_canonical_layer_gives_row_stochastic_matrix(self):
        ds, model = build_run(kinds=("canonical", "primal"))
        weights = model_kernel_matrix(model, ds, layer=0, head=1, batch_seed=2)
        assert np.allclose(weights.sum(axis=1), 1.0, atol=1e-12)

    def test_out_of_range_rejected(self):
        ds, model = build_run()
        with pytest.raises(ConfigError):
            model_kernel_matrix(model, ds, layer=5, head=0, batch_seed=0)


class TestEffectiveRankHelpers:
    def test_last_primal_layer(self):
        _, model = build_run(kinds=("canonical", "primal"))
        assert last_primal_layer(model) == 1
        _, canonical_only = build_run(kinds=("canonical",))
        with pytest.raises(ConfigError):
            last_primal_layer(canonical_only)

    def test_mean_effective_rank_bounds(self):
        ds, model = build_run()
        value = mean_effective_rank(model, ds, layer=1, tau=0.9, sequence_count=3)
        assert 1.0 <= value <= 8.0
