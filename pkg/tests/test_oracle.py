import json

import numpy as np
import pytest

from primal_attention.attention import (
    DATA_DEPENDENT,
    DATA_INDEPENDENT,
    HeadParams,
    primal_scores,
    with_stationary,
)
from primal_attention.errors import IllConditionedError, ShapeError
from primal_attention.features import (
    COSINE,
    IDENTITY,
    FeatureMapSpec,
    ProjectionSet,
    feature_map_rows,
)
from primal_attention.objective import ksvd_objective
from primal_attention.oracle import (
    build_kernel,
    dual_scores,
    ksvd_solve,
    stationary_params,
    verify_suite,
)
from primal_attention.rng import Rng


def make_head(seed, n, d, s, mode=DATA_INDEPENDENT, rank_multi=2):
    rng = Rng(seed)
    rows = d if mode == DATA_INDEPENDENT else min(s * rank_multi, n)
    return HeadParams(
        projections=ProjectionSet(w_q=rng.normals((d, d)), w_k=rng.normals((d, d))),
        w_e=np.zeros((rows, s)),
        w_r=np.zeros((rows, s)),
        lambda_raw=np.zeros(s),
        mode=mode,
        rank_multi=rank_multi,
        subsample_seed=seed,
    )


class TestBuildKernel:
    def test_orthonormal_rows_give_identity(self):
        head = HeadParams(
            projections=ProjectionSet(w_q=np.eye(2), w_k=np.eye(2)),
            w_e=np.zeros((2, 1)),
            w_r=np.zeros((2, 1)),
            lambda_raw=np.zeros(1),
        )
        fmap = FeatureMapSpec(kind=COSINE, dim=2)
        assert np.array_equal(build_kernel(np.eye(2), head, fmap), np.eye(2))

    def test_equal_rows_give_all_ones(self):
        head = make_head(1, 4, 3, 2)
        head = HeadParams(
            projections=ProjectionSet(w_q=np.eye(3), w_k=np.eye(3)),
            w_e=head.w_e[:3],
            w_r=head.w_r[:3],
            lambda_raw=head.lambda_raw,
        )
        fmap = FeatureMapSpec(kind=COSINE, dim=3)
        x = np.tile(Rng(2).normals((1, 3)), (4, 1))
        assert np.allclose(build_kernel(x, head, fmap), np.ones((4, 4)), atol=1e-12)

    def test_asymmetric_and_matches_double_loop(self):
        head = make_head(3, 4, 3, 2)
        fmap = FeatureMapSpec(kind=COSINE, dim=3)
        x = Rng(4).normals((4, 3))
        kernel = build_kernel(x, head, fmap)
        assert np.linalg.norm(kernel - kernel.T) > 1e-6
        phi_q = feature_map_rows(fmap, x @ head.projections.w_q.T)
        phi_k = feature_map_rows(fmap, x @ head.projections.w_k.T)
        for i in range(4):
            for j in range(4):
                assert abs(kernel[i, j] - float(phi_q[i] @ phi_k[j])) <= 1e-12

    def test_data_dependent_routes_through_sequence_rows(self):
        head = make_head(5, 10, 3, 2, mode=DATA_DEPENDENT)
        fmap = FeatureMapSpec(kind=COSINE, dim=3)
        x = Rng(6).normals((10, 3))
        kernel = build_kernel(x, head, fmap)
        from primal_attention.attention import build_fx

        fx = build_fx(x, head)
        phi_q = feature_map_rows(fmap, x @ head.projections.w_q.T)
        phi_k = feature_map_rows(fmap, x @ head.projections.w_k.T)
        for i in range(10):
            for j in range(10):
                expected = float((fx @ phi_q[i]) @ (fx @ phi_k[j]))
                assert abs(kernel[i, j] - expected) <= 1e-12


class TestKsvdSolve:
    def test_diagonal_kernel(self):
        sol = ksvd_solve(np.diag([2.0, 1.0]), 2)
        assert np.allclose(sol.sigma, [2.0, 1.0])
        assert np.allclose(sol.h_e, np.eye(2))
        assert np.allclose(sol.h_r, np.eye(2))
        assert not sol.truncated

    def test_maximally_asymmetric_kernel(self):
        sol = ksvd_solve(np.array([[0.0, 1.0], [0.0, 0.0]]), 1)
        assert np.allclose(sol.sigma, [1.0])
        assert np.allclose(sol.h_e[:, 0], [1.0, 0.0])
        assert np.allclose(sol.h_r[:, 0], [0.0, 1.0])

    def test_residuals_and_gram_oracle(self):
        kernel = Rng(7).normals((6, 6))
        sol = ksvd_solve(kernel, 3)
        norm = np.linalg.norm(kernel)
        assert np.linalg.norm(kernel @ sol.h_r - sol.h_e * sol.sigma) <= 1e-8 * norm
        assert np.linalg.norm(kernel.T @ sol.h_e - sol.h_r * sol.sigma) <= 1e-8 * norm
        eigenvalues = np.linalg.eigh(kernel.T @ kernel)[0][::-1]
        assert np.allclose(sol.sigma, np.sqrt(eigenvalues[:3]), rtol=1e-9)

    def test_zero_directions_truncated_with_flag(self):
        kernel = np.outer([1.0, 2.0, 3.0], [1.0, 0.5, 0.25])  # rank one
        sol = ksvd_solve(kernel, 3)
        assert sol.truncated
        assert sol.s == 1
        assert sol.sigma[0] > 0.0

    def test_rejects_non_square(self):
        with pytest.raises(ShapeError):
            ksvd_solve(np.ones((2, 3)), 1)


class TestStationaryParams:
    def test_identity_kernel_recovers_feature_transposes(self):
        x = np.eye(3)
        head = HeadParams(
            projections=ProjectionSet(w_q=np.eye(3), w_k=np.eye(3)),
            w_e=np.zeros((3, 3)),
            w_r=np.zeros((3, 3)),
            lambda_raw=np.zeros(3),
        )
        fmap = FeatureMapSpec(kind=COSINE, dim=3)
        kernel = build_kernel(x, head, fmap)
        sol = ksvd_solve(kernel, 3)
        stat = stationary_params(sol, x, head, fmap)
        phi_q = feature_map_rows(fmap, x)
        phi_k = feature_map_rows(fmap, x)
        assert np.allclose(stat.w_e_star, phi_k.T)
        assert np.allclose(stat.w_r_star, phi_q.T)
        assert np.allclose(stat.lambda_star, np.ones(3))

    @pytest.mark.parametrize("mode", [DATA_INDEPENDENT, DATA_DEPENDENT])
    @pytest.mark.parametrize("fmap_kind", [COSINE, IDENTITY])
    def test_zero_objective_and_dual_equivalence(self, mode, fmap_kind):
        for seed in range(8):
            rng = Rng(1000 + seed)
            n = 3 + rng.below(10)
            d = 2 + rng.below(3)
            s = 1 + rng.below(n)
            head = make_head(2000 + seed, n, d, s, mode=mode)
            fmap = FeatureMapSpec(kind=fmap_kind, dim=d)
            x = rng.normals((n, d))
            kernel = build_kernel(x, head, fmap)
            sol = ksvd_solve(kernel, s)
            stat = stationary_params(sol, x, head, fmap)
            at_stat = with_stationary(head, stat.w_e_star, stat.w_r_star, stat.lambda_star)
            e, r = primal_scores(x, at_stat, fmap)
            j_value = ksvd_objective(e, r, stat.w_e_star, stat.w_r_star, stat.lambda_star)
            assert abs(j_value) <= 1e-8 * (1.0 + np.linalg.norm(kernel))
            e_dual, r_dual = dual_scores(sol, kernel)
            assert np.max(np.abs(e - e_dual)) <= 1e-8
            assert np.max(np.abs(r - r_dual)) <= 1e-8

    def test_primal_dual_identity_holds_for_arbitrary_dual_variables(self):
        # the weight-bank reconstruction makes primal scores equal kernel
        # expansions for any dual matrices, not only singular vectors
        for mode in (DATA_INDEPENDENT, DATA_DEPENDENT):
            rng = Rng(31)
            n, d, s = 9, 3, 4
            head = make_head(32, n, d, s, mode=mode)
            fmap = FeatureMapSpec(kind=COSINE, dim=d)
            x = rng.normals((n, d))
            kernel = build_kernel(x, head, fmap)
            h_e = rng.normals((n, s))
            h_r = rng.normals((n, s))
            from primal_attention.oracle import KsvdSolution

            fake = KsvdSolution(h_e=h_e, h_r=h_r, sigma=np.ones(s))
            stat = stationary_params(fake, x, head, fmap)
            at_stat = with_stationary(head, stat.w_e_star, stat.w_r_star, stat.lambda_star)
            e, r = primal_scores(x, at_stat, fmap)
            e_dual, r_dual = dual_scores((h_e, h_r), kernel)
            assert np.max(np.abs(e - e_dual)) <= 1e-8
            assert np.max(np.abs(r - r_dual)) <= 1e-8

    def test_underflow_raises(self):
        from primal_attention.oracle import KsvdSolution

        sol = KsvdSolution(h_e=np.eye(2), h_r=np.eye(2), sigma=np.array([1.0, 1e-13]))
        head = make_head(33, 2, 2, 2)
        with pytest.raises(IllConditionedError):
            stationary_params(sol, np.eye(2), head, FeatureMapSpec(kind=COSINE, dim=2))


class TestEqualNormIdentity:
    def test_raw_coupled_eigensystem_has_equal_half_norms(self):
        for seed in range(10):
            kernel = Rng(40 + seed).normals((7, 7))
            n = 7
            augmented = np.zeros((2 * n, 2 * n))
            augmented[:n, n:] = kernel
            augmented[n:, :n] = kernel.T
            eigenvalues, vectors = np.linalg.eigh(augmented)
            for idx in range(2 * n):
                if eigenvalues[idx] <= 1e-10:
                    continue
                upper = vectors[:n, idx]
                lower = vectors[n:, idx]
                assert abs(float(upper @ upper) - float(lower @ lower)) <= 1e-9


class TestVarianceMaximization:
    def test_svd_solution_beats_random_orthonormal_candidates(self):
        rng = Rng(50)
        for n in (4, 5, 6):
            kernel = rng.normals((n, n))
            s = 2
            sol = ksvd_solve(kernel, s)
            svd_value = float(np.trace(sol.h_e.T @ kernel @ sol.h_r))
            np_rng = np.random.default_rng(60 + n)
            best = -np.inf
            for _ in range(2000):
                q_e = np.linalg.qr(np_rng.standard_normal((n, s)))[0]
                q_r = np.linalg.qr(np_rng.standard_normal((n, s)))[0]
                best = max(best, float(np.trace(q_e.T @ kernel @ q_r)))
            # local refinement: alternate polar factors from the best pair
            q_e = np.linalg.qr(np_rng.standard_normal((n, s)))[0]
            q_r = np.linalg.qr(np_rng.standard_normal((n, s)))[0]
            for _ in range(50):
                u, _, vt = np.linalg.svd(kernel @ q_r, full_matrices=False)
                q_e = u @ vt
                u, _, vt = np.linalg.svd(kernel.T @ q_e, full_matrices=False)
                q_r = u @ vt
            best = max(best, float(np.trace(q_e.T @ kernel @ q_r)))
            assert svd_value >= best - 1e-9


class TestVerifySuite:
    def test_random_case_passes_both_modes(self):
        x = Rng(70).normals((8, 3))
        fmap = FeatureMapSpec(kind=COSINE, dim=3)
        for mode in (DATA_INDEPENDENT, DATA_DEPENDENT):
            head = make_head(71, 8, 3, 3, mode=mode)
            report = verify_suite(x, head, fmap, 3)
            assert report.all_passed, report.failing()

    def test_identity_kernel_has_exact_zero_residuals(self):
        head = HeadParams(
            projections=ProjectionSet(w_q=np.eye(2), w_k=np.eye(2)),
            w_e=np.zeros((2, 2)),
            w_r=np.zeros((2, 2)),
            lambda_raw=np.zeros(2),
        )
        report = verify_suite(np.eye(2), head, FeatureMapSpec(kind=COSINE, dim=2), 2)
        assert report.all_passed
        for check in report.checks:
            if check.name == "equal_norm_identity":
                assert check.residual <= 1e-12  # independent eigensolver rounding
            else:
                assert check.residual == 0.0

    def test_corrupted_left_vectors_fail_and_are_localized(self):
        x = Rng(72).normals((6, 3))
        head = make_head(73, 6, 3, 2)
        report = verify_suite(x, head, FeatureMapSpec(kind=COSINE, dim=3), 2, corrupt_h_e=True)
        results = {c.name: c.passed for c in report.checks}
        assert not report.all_passed
        assert not results["shifted_eigenproblem_left"]
        assert results["orthonormality_right"]
        assert results["primal_dual_e"]
        assert results["reconstruction_full_rank"]

    def test_report_serializes_one_object_per_check(self):
        x = Rng(74).normals((5, 2))
        head = make_head(75, 5, 2, 2)
        report = verify_suite(x, head, FeatureMapSpec(kind=COSINE, dim=2), 2)
        payload = json.loads(report.to_json())
        assert payload["schema"] == 1
        assert {"name", "residual", "tolerance", "pass"} == set(payload["checks"][0])
        names = [c["name"] for c in payload["checks"]]
        assert "zero_objective" in names and "reconstruction_full_rank" in names
