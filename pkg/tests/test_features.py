import numpy as np
import pytest

from primal_attention.errors import DegenerateNormalizerError, ShapeError
from primal_attention.features import (
    COSINE,
    IDENTITY,
    RANDOM_EXPONENTIAL,
    FeatureMapSpec,
    ProjectionSet,
    apply_feature_map,
    dhat_normalizer,
    feature_map_rows,
    project,
)
from primal_attention.rng import Rng


class TestProject:
    def test_identity_projection(self):
        x = Rng(1).normals((4, 3))
        ps = ProjectionSet(w_q=np.eye(3), w_k=np.eye(3))
        q, k, v = project(ps, x)
        assert np.array_equal(q, x)
        assert np.array_equal(k, x)
        assert v is None

    def test_permutation_projection(self):
        ps = ProjectionSet(w_q=np.array([[0.0, 1.0], [1.0, 0.0]]), w_k=np.eye(2))
        q, _, _ = project(ps, np.array([[1.0, 0.0]]))
        assert np.array_equal(q[0], [0.0, 1.0])

    def test_matches_per_row_oracle(self):
        rng = Rng(2)
        x = rng.normals((5, 4))
        ps = ProjectionSet(w_q=rng.normals((3, 4)), w_k=rng.normals((3, 4)), w_v=rng.normals((2, 4)))
        q, k, v = project(ps, x)
        for i in range(5):
            assert np.max(np.abs(q[i] - ps.w_q @ x[i])) <= 1e-12
            assert np.max(np.abs(k[i] - ps.w_k @ x[i])) <= 1e-12
            assert np.max(np.abs(v[i] - ps.w_v @ x[i])) <= 1e-12

    def test_rejects_mismatched_query_key_dims(self):
        with pytest.raises(ShapeError):
            ProjectionSet(w_q=np.ones((3, 4)), w_k=np.ones((2, 4)))

    def test_rejects_wrong_input_width(self):
        ps = ProjectionSet(w_q=np.eye(3), w_k=np.eye(3))
        with pytest.raises(ShapeError):
            project(ps, np.ones((2, 4)))


class TestCosineMap:
    def test_three_four_five(self):
        spec = FeatureMapSpec(kind=COSINE, dim=2)
        assert np.allclose(apply_feature_map(spec, [3.0, 4.0]), [0.6, 0.8])

    def test_zero_vector_maps_to_zero(self):
        spec = FeatureMapSpec(kind=COSINE, dim=2)
        assert np.array_equal(apply_feature_map(spec, [0.0, 0.0]), [0.0, 0.0])

    def test_unit_norm_for_nonzero_inputs(self):
        spec = FeatureMapSpec(kind=COSINE, dim=5)
        rows = Rng(3).normals((50, 5))
        mapped = feature_map_rows(spec, rows)
        assert np.allclose(np.linalg.norm(mapped, axis=1), 1.0, atol=1e-12)

    def test_scale_invariance_is_exact_for_powers_of_two(self):
        spec = FeatureMapSpec(kind=COSINE, dim=4)
        z = Rng(4).normals((1, 4))
        base = feature_map_rows(spec, z)
        for c in (0.125, 2.0, 8.0, 1024.0):
            assert np.array_equal(feature_map_rows(spec, c * z), base)

    def test_scale_invariance_general_positive_scale(self):
        spec = FeatureMapSpec(kind=COSINE, dim=4)
        z = Rng(5).normals((1, 4))
        base = feature_map_rows(spec, z)
        for c in (0.3, 7.7):
            assert np.max(np.abs(feature_map_rows(spec, c * z) - base)) <= 1e-14


class TestIdentityMap:
    def test_passthrough(self):
        spec = FeatureMapSpec(kind=IDENTITY, dim=3)
        z = Rng(6).normals((4, 3))
        assert np.array_equal(feature_map_rows(spec, z), z)

    def test_requires_matching_dim(self):
        spec = FeatureMapSpec(kind=IDENTITY, dim=3)
        with pytest.raises(ShapeError):
            feature_map_rows(spec, np.ones((2, 4)))


class TestRandomExponentialMap:
    def test_zero_vector_gives_all_ones(self):
        spec = FeatureMapSpec(kind=RANDOM_EXPONENTIAL, dim=6, seed=9)
        assert np.array_equal(apply_feature_map(spec, np.zeros(6)), np.ones(6))

    def test_matches_definition(self):
        spec = FeatureMapSpec(kind=RANDOM_EXPONENTIAL, dim=5, seed=10, input_dim=3)
        z = Rng(11).normals((3,))
        expected = np.exp(-0.5 * z @ z) * np.exp(spec.directions @ z)
        assert np.max(np.abs(apply_feature_map(spec, z) - expected)) <= 1e-12

    def test_directions_reproducible_from_seed(self):
        a = FeatureMapSpec(kind=RANDOM_EXPONENTIAL, dim=4, seed=77)
        b = FeatureMapSpec(kind=RANDOM_EXPONENTIAL, dim=4, seed=77)
        assert np.array_equal(a.directions, b.directions)
        z = Rng(12).normals((2, 4))
        assert np.array_equal(feature_map_rows(a, z), feature_map_rows(b, z))

    def test_dim_defaults_to_input_dim(self):
        spec = FeatureMapSpec(kind=RANDOM_EXPONENTIAL, dim=4, seed=1)
        assert spec.input_dim == 4
        assert spec.directions.shape == (4, 4)

    def test_normalized_kernel_rows_sum_to_one(self):
        # with the normalizer divided out, total similarity mass per row is 1
        spec = FeatureMapSpec(kind=RANDOM_EXPONENTIAL, dim=16, seed=13, input_dim=4)
        z_q = Rng(14).normals((6, 4))
        z_k = Rng(15).normals((6, 4))
        phi_q = feature_map_rows(spec, z_q)
        phi_k = feature_map_rows(spec, z_k)
        dhat = dhat_normalizer(phi_q, phi_k)
        kernel = phi_q @ phi_k.T
        row_sums = (kernel / dhat[:, None]).sum(axis=1)
        assert np.max(np.abs(row_sums - 1.0)) <= 1e-10


class TestDhatNormalizer:
    def test_single_row(self):
        phi = np.array([[1.0, 0.0, 0.0]])
        assert np.allclose(dhat_normalizer(phi, phi), [1.0])

    def test_equal_rows(self):
        u = np.array([1.0, 2.0, 0.5])
        rows = np.tile(u, (4, 1))
        assert np.allclose(dhat_normalizer(rows, rows), 4.0 * (u @ u))

    def test_matches_double_loop_oracle(self):
        rng = Rng(16)
        phi_q = np.exp(rng.normals((5, 3)))
        phi_k = np.exp(rng.normals((5, 3)))
        got = dhat_normalizer(phi_q, phi_k)
        for i in range(5):
            acc = 0.0
            for j in range(5):
                acc += float(phi_q[i] @ phi_k[j])
            assert abs(got[i] - acc) <= 1e-12 * max(1.0, abs(acc))

    def test_nonpositive_component_raises(self):
        phi_q = np.array([[0.0, 0.0]])
        phi_k = np.array([[1.0, 1.0]])
        with pytest.raises(DegenerateNormalizerError):
            dhat_normalizer(phi_q, phi_k)


class TestFeatureMapSpecConfig:
    def test_round_trip(self):
        spec = FeatureMapSpec(kind=RANDOM_EXPONENTIAL, dim=6, seed=3, epsilon=1e-10, input_dim=4)
        again = FeatureMapSpec.from_config(spec.to_config())
        assert again == spec
        assert np.array_equal(again.directions, spec.directions)

    def test_config_keys(self):
        spec = FeatureMapSpec(kind=COSINE, dim=8, seed=5)
        assert spec.to_config() == {"kind": COSINE, "p": 8, "seed": 5, "epsilon": 1e-12}

    def test_cosine_requires_square(self):
        with pytest.raises(ShapeError):
            FeatureMapSpec(kind=COSINE, dim=3, input_dim=4)
