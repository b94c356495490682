import numpy as np
import pytest

from bornprec.correction import OptimalScalarMap, ScalarMap
from bornprec.fields import make_rng
from bornprec.iterate import Format, IterationConfig, spectral_diagnostics
from bornprec.newton import (
    BRANCH_SEEDS,
    NewtonConfig,
    NewtonError,
    default_grid,
    dense_born_map,
    distinct_solutions,
    factorized_born_map,
    jacobian_matrix,
    low_mode,
    newton_source,
    newton_step,
    nonlinear_residual,
    perturbed_starts,
    relative_distance,
    solution_bank,
    solve_newton,
)
from bornprec.problems import NewtonJacobianProblem, five_point_matrix
from bornprec.spectral import GridSpec


@pytest.fixture(scope="module")
def grid15():
    return default_grid(15)


@pytest.fixture(scope="module")
def bank15(grid15):
    return solution_bank(grid15)


class TestResidual:
    def test_zero_state(self, grid15):
        x, y = grid15.coords()
        np.testing.assert_allclose(nonlinear_residual(np.zeros(grid15.shape), 1600.0, grid15),
                                   1600.0 * np.sin(np.pi * x) * np.sin(np.pi * y), atol=1e-10)

    def test_sign_convention(self, grid15):
        u = make_rng(0).standard_normal(grid15.shape)
        lhs = nonlinear_residual(u, 1600.0, grid15) + newton_source(grid15, 1600.0) + u**2
        np.testing.assert_allclose(lhs.ravel(), five_point_matrix(grid15) @ u.ravel(), atol=1e-9)

    def test_jacobian_matches_finite_differences(self, grid15):
        rng = make_rng(1)
        u, v = 10 * rng.standard_normal(grid15.shape), rng.standard_normal(grid15.shape)
        eps = 1e-5
        fd = (nonlinear_residual(u + eps * v, 1600.0, grid15) - nonlinear_residual(u - eps * v, 1600.0, grid15)) / (2 * eps)
        jv = (jacobian_matrix(u, grid15) @ v.ravel()).reshape(grid15.shape)
        assert np.linalg.norm(fd - jv) / np.linalg.norm(jv) <= 1e-6

    def test_jacobian_problem_operator_is_the_jacobian(self, grid15):
        u = make_rng(2).standard_normal(grid15.shape)
        v = make_rng(3).standard_normal(grid15.shape)
        p = NewtonJacobianProblem(u, grid15)
        np.testing.assert_allclose(p.apply_A(v).ravel(), jacobian_matrix(u, grid15) @ v.ravel(), atol=1e-9)

    def test_needs_dirichlet_grid(self):
        with pytest.raises(ValueError):
            nonlinear_residual(np.zeros((8, 8)), 1.0, GridSpec(8, 8))


class TestRoots:
    def test_bank_holds_distinct_roots(self, grid15, bank15):
        assert len(bank15) == len(BRANCH_SEEDS)
        for u in bank15:
            assert np.linalg.norm(nonlinear_residual(u, 1600.0, grid15)) <= 1e-8
        assert len(distinct_solutions(bank15)) == len(bank15)

    def test_mirror_branches(self, bank15):
        np.testing.assert_allclose(bank15[2], bank15[3].T, atol=1e-8)

    def test_root_is_fixed_point(self, grid15, bank15):
        cfg = NewtonConfig(inner_map=dense_born_map)
        u_new, _ = newton_step(bank15[0], cfg, grid15)
        np.testing.assert_allclose(u_new, bank15[0], atol=1e-10)

    def test_converged_start_needs_at_most_two_steps(self, grid15, bank15):
        tr = solve_newton(bank15[1], NewtonConfig(oracle=True), grid15)
        assert tr.converged and tr.steps <= 2


class TestSteps:
    def test_quadratic_convergence(self, grid15, bank15):
        x, y = grid15.coords()
        u0 = bank15[0] + 2.0 * np.sin(np.pi * x) * np.sin(2 * np.pi * y)
        inner = IterationConfig(format=Format.NPBS, rtol=1e-12, max_iters=5)
        tr = solve_newton(u0, NewtonConfig(inner_map=dense_born_map, inner=inner), grid15)
        r = np.array(tr.residuals)
        c = r[1:4] / r[0:3] ** 2
        assert tr.converged
        assert c.max() / c.min() <= 3.0
        assert all(k == 1 for k in tr.inner_iters)

    def test_scalar_inner_map_at_zero_state(self, grid15):
        p = NewtonJacobianProblem(np.zeros(grid15.shape), grid15)
        assert spectral_diagnostics(p).rho_est < 1
        cfg = NewtonConfig(inner_map=OptimalScalarMap(), inner=IterationConfig(rtol=1e-8))
        u1, inner = newton_step(np.zeros(grid15.shape), cfg, grid15)
        assert inner.terminated.value == "converged"
        ref, _ = newton_step(np.zeros(grid15.shape), NewtonConfig(oracle=True), grid15)
        np.testing.assert_allclose(u1, ref, rtol=1e-6)

    def test_inner_divergence_aborts(self, grid15):
        cfg = NewtonConfig(inner_map=ScalarMap(50.0), inner=IterationConfig(format=Format.DIRECT))
        with pytest.raises(NewtonError):
            newton_step(np.zeros(grid15.shape), cfg, grid15)

    def test_oracle_and_npbs_inner_agree(self, grid15, bank15):
        starts = perturbed_starts(bank15, grid15, 2, seed=5)
        inner = IterationConfig(format=Format.NPBS, rtol=1e-10, max_iters=50)
        for u0 in starts:
            a = solve_newton(u0, NewtonConfig(oracle=True), grid15)
            b = solve_newton(u0, NewtonConfig(inner_map=factorized_born_map, inner=inner), grid15)
            assert a.converged and b.converged
            assert relative_distance(a.u, b.u) <= 1e-6

    def test_two_seeds_find_two_solutions(self, grid15, bank15):
        starts = perturbed_starts(bank15, grid15, 2, seed=0)
        sols = [solve_newton(u0, NewtonConfig(oracle=True), grid15).u for u0 in starts]
        assert relative_distance(sols[0], sols[1]) > 0.1


class TestHelpers:
    def test_low_mode(self, grid15):
        x, y = grid15.coords()
        np.testing.assert_allclose(low_mode(grid15, 2, 1), np.sin(2 * np.pi * x) * np.sin(np.pi * y))

    def test_perturbed_starts_cycle_through_bank(self, grid15, bank15):
        starts = perturbed_starts(bank15, grid15, 6, seed=1)
        assert len(starts) == 6
        assert relative_distance(starts[4], bank15[0]) < relative_distance(starts[4], bank15[1])
        again = perturbed_starts(bank15, grid15, 6, seed=1)
        np.testing.assert_array_equal(starts[3], again[3])

    def test_empty_bank(self, grid15):
        with pytest.raises(ValueError):
            perturbed_starts([], grid15, 2, seed=0)

    def test_distinct_solutions_clusters(self):
        a = np.ones((3, 3))
        assert len(distinct_solutions([a, 1.01 * a, -a])) == 2

    def test_trace_csv(self, grid15, tmp_path):
        tr = solve_newton(np.zeros(grid15.shape), NewtonConfig(oracle=True), grid15)
        tr.to_csv(tmp_path / "n.csv")
        lines = (tmp_path / "n.csv").read_text().splitlines()
        assert lines[0] == "outer_step,F_nl_norm,inner_iters"
        assert len(lines) == len(tr.residuals) + 1

    @pytest.mark.parametrize("kw", [dict(s=0.0), dict(outer_tol=0.0), dict(max_outer=0)])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            NewtonConfig(**kw)
