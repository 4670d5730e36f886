import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bilinear_ident import (
    InfeasibleError,
    RankOneInstance,
    SolverConfig,
    adjoint_apply,
    apply_lifted,
    conv_rank2_element,
    detect_event_E2,
    kernel_basis,
    lift_from_matrices,
    lift_linear_convolution,
    project_onto_kernel,
    solve_min_rank_near,
)
from bilinear_ident.solver import distance_to_kernel


def planted(rng, m, n):
    """Unit rank-one ``M`` plus a rank-two kernel element within ``1/sqrt 2`` of it.

    With ``X0`` scaled to unit Frobenius norm, ``s1 X0`` is at distance
    ``s2 = sqrt(1 - s1^2) <= 1/sqrt 2`` from ``M = u1 v1^T``.
    """
    X0 = conv_rank2_element(rng.standard_normal(m - 1), rng.standard_normal(n - 1)).matrix()
    U, s, Vt = np.linalg.svd(X0)
    return np.outer(U[:, 0], Vt[0]), X0 * s[0] / (s ** 2).sum()


class TestConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert cfg.mu == 0.8 and cfg.outer_iters == 20 and cfg.inner_iters == 500
        assert cfg.primal_tol == cfg.dual_tol == 1e-7 and cfg.rank_rel_threshold == 1e-3

    @pytest.mark.parametrize("bad", [{"mu": 0.0}, {"weight_smoothing": -1.0}, {"rank_rel_threshold": 1.0},
                                     {"outer_iters": 2.5}, {"primal_tol": 0.0}])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            SolverConfig(**bad)

    def test_mapping_round_trip(self):
        cfg = SolverConfig(mu=0.5, outer_iters=5)
        assert SolverConfig.from_mapping(cfg.to_mapping()) == cfg
        with pytest.raises(KeyError):
            SolverConfig.from_mapping({"mu": 0.5, "momentum": 1})


class TestKernelBasis:
    def test_two_by_two(self):
        B = kernel_basis(lift_linear_convolution(2, 2))
        assert B.dim == 1
        K = B.matrices[0]
        K = K / K[0, 1]
        np.testing.assert_allclose(K, [[0, 1], [-1, 0]], atol=1e-12)

    @pytest.mark.parametrize("m,n", [(3, 4), (1, 1), (1, 5), (6, 6), (10, 7)])
    def test_dimension_formula(self, m, n):
        assert kernel_basis(lift_linear_convolution(m, n)).dim == m * n - (m + n - 1)

    def test_identity_operator_has_empty_kernel(self):
        op = lift_from_matrices(np.eye(6).reshape(6, 2, 3))
        B = kernel_basis(op)
        assert B.dim == 0
        np.testing.assert_array_equal(project_onto_kernel(B, np.ones((2, 3))), np.zeros((2, 3)))

    def test_budget(self):
        with pytest.raises(ValueError, match="budget"):
            kernel_basis(lift_linear_convolution(101, 100))

    def test_orthonormal_and_annihilated(self):
        op = lift_linear_convolution(5, 7)
        B = kernel_basis(op)
        np.testing.assert_allclose(B.rows @ B.rows.T, np.eye(B.dim), atol=1e-10)
        for K in B:
            assert np.abs(apply_lifted(op, K).z).max() <= 1e-10


class TestProjection:
    def setup_method(self):
        self.op = lift_linear_convolution(4, 6)
        self.B = kernel_basis(self.op)

    def test_kernel_element_fixed(self):
        X = conv_rank2_element(np.arange(1.0, 4), np.arange(1.0, 6)).matrix()
        np.testing.assert_allclose(project_onto_kernel(self.B, X), X, atol=1e-10)

    def test_orthogonal_complement_removed(self):
        W = adjoint_apply(self.op, np.arange(9.0))
        np.testing.assert_allclose(project_onto_kernel(self.B, W), np.zeros((4, 6)), atol=1e-10)

    def test_shape_check(self):
        with pytest.raises(ValueError):
            project_onto_kernel(self.B, np.zeros((6, 4)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_pythagoras_idempotence_self_adjoint(self, seed):
        rng = np.random.default_rng(seed)
        W, V = rng.standard_normal((2, 4, 6))
        P = project_onto_kernel(self.B, W)
        d = distance_to_kernel(self.B, W)
        total = np.linalg.norm(W) ** 2
        assert abs(total - (np.linalg.norm(P) ** 2 + d ** 2)) <= 1e-9 * total
        np.testing.assert_allclose(project_onto_kernel(self.B, P), P, atol=1e-10)
        lhs = (project_onto_kernel(self.B, W) * V).sum()
        rhs = (W * project_onto_kernel(self.B, V)).sum()
        assert abs(lhs - rhs) <= 1e-9 * (1 + abs(lhs))


class TestSolve:
    def test_zero_is_optimal_inside_ball(self):
        op = lift_linear_convolution(4, 6)
        M = RankOneInstance.from_signals(np.ones(4), np.ones(6)).normalized()
        res = solve_min_rank_near(op, M, SolverConfig(mu=1.0))
        assert res.numerical_rank == 0 and res.converged
        np.testing.assert_array_equal(res.X, np.zeros((4, 6)))
        assert not detect_event_E2(op, M, SolverConfig(mu=1.0))

    def test_infeasible(self):
        rng = np.random.default_rng(0)
        op = lift_linear_convolution(4, 6)
        M = RankOneInstance.from_signals(rng.standard_normal(4), rng.standard_normal(6)).normalized()
        d = distance_to_kernel(kernel_basis(op), M.matrix())
        assert d > 1e-6
        with pytest.raises(InfeasibleError) as info:
            solve_min_rank_near(op, M, SolverConfig(mu=1e-6))
        assert info.value.distance == pytest.approx(d, rel=1e-9) and info.value.mu == 1e-6

    def test_planted_four_by_six(self):
        rng = np.random.default_rng(1)
        op = lift_linear_convolution(4, 6)
        for _ in range(10):
            M, X0 = planted(rng, 4, 6)
            assert np.linalg.norm(X0 - M) <= 2 ** -0.5 + 1e-12
            res = solve_min_rank_near(op, M, SolverConfig())
            assert res.numerical_rank <= 2
            assert detect_event_E2(op, M)

    def test_feasibility_and_reporting(self):
        rng = np.random.default_rng(2)
        op = lift_linear_convolution(5, 7)
        B = kernel_basis(op)
        cfg = SolverConfig()
        for _ in range(15):
            M = RankOneInstance.from_signals(rng.standard_normal(5), rng.standard_normal(7)).normalized()
            res = solve_min_rank_near(op, M, cfg, B)
            kr, br = res.constraint_residuals
            assert kr == pytest.approx(np.abs(apply_lifted(op, res.X).z).max(), abs=1e-15)
            assert br == pytest.approx(max(0.0, np.linalg.norm(res.X - M.matrix()) - cfg.mu), abs=1e-15)
            s = res.singular_values
            assert (np.diff(s) <= 0).all() and (s >= 0).all()
            if res.converged:
                assert kr <= 1e-8
                assert np.linalg.norm(res.X - M.matrix()) <= cfg.mu * (1 + 1e-6)
                assert res.monotone

    def test_diagnostics_recorded(self):
        rng = np.random.default_rng(3)
        op = lift_linear_convolution(6, 6)
        for _ in range(5):
            M, _ = planted(rng, 6, 6)
            res = solve_min_rank_near(op, M)
            assert res.gamma > 0 and len(res.objective_history) == res.outer_iterations
            assert res.inner_iterations > 0

    def test_non_convergence_is_reported(self):
        rng = np.random.default_rng(4)
        op = lift_linear_convolution(6, 8)
        M, _ = planted(rng, 6, 8)
        res = solve_min_rank_near(op, M, SolverConfig(outer_iters=2, inner_iters=2))
        assert not res.converged
        assert res.constraint_residuals[0] <= 1e-8

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        op = lift_linear_convolution(5, 6)
        M = RankOneInstance.from_signals(rng.standard_normal(5), rng.standard_normal(6)).normalized()
        a, b = solve_min_rank_near(op, M), solve_min_rank_near(op, M)
        np.testing.assert_array_equal(a.X, b.X)

    def test_input_validation(self):
        op = lift_linear_convolution(3, 3)
        with pytest.raises(ValueError):
            solve_min_rank_near(op, np.zeros((3, 3)))
        with pytest.raises(ValueError):
            solve_min_rank_near(op, np.ones((3, 4)))

    @pytest.mark.parametrize("m", [4, 6, 8])
    def test_planted_recovery_rate(self, m):
        rng = np.random.default_rng(100 + m)
        op = lift_linear_convolution(m, m)
        B = kernel_basis(op)
        hits = sum(detect_event_E2(op, planted(rng, m, m)[0], SolverConfig(), B) for _ in range(100))
        assert hits >= 95
