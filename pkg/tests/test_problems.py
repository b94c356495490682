import numpy as np
import pytest

from bornprec.problems import (
    DENSE_CAP,
    CdrProblem,
    HelmholtzProblem,
    NewtonJacobianProblem,
    assemble_dense,
    default_eta,
    default_k0,
    five_point,
    five_point_matrix,
    read_problem,
    write_problem,
)
from bornprec.spectral import BC, GridSpec, SingularSymbolError

from helpers import ALL, TWO_PI, _cplx, _rng, cdr, newton


def plane_wave(grid, xi):
    x, y = grid.coords()
    return np.exp(1j * (xi[0] * x + xi[1] * y))


class TestHelmholtz:
    def test_homogeneous_plane_wave(self):
        k0 = 1.7
        p = HelmholtzProblem(np.full(TWO_PI.shape, k0**2), TWO_PI)
        u = plane_wave(TWO_PI, (2, 1))
        np.testing.assert_allclose(p.apply_A(u), (5 - k0**2) * u, atol=1e-12)

    def test_homogeneous_potential_is_minus_i_eta(self):
        p = HelmholtzProblem(np.full(TWO_PI.shape, 4.0), TWO_PI, eta=0.3)
        u = _cplx(_rng(), TWO_PI.shape)
        np.testing.assert_allclose(p.apply_V(u), -0.3j * u)

    def test_green_on_single_mode(self):
        p = HelmholtzProblem(np.full(TWO_PI.shape, 2.0), TWO_PI, k0=1.0, eta=0.5)
        u = plane_wave(TWO_PI, (1, -2))
        np.testing.assert_allclose(p.apply_G(u), u / (5 - 1 - 0.5j), atol=1e-12)

    def test_defaults(self):
        k2 = np.array([[1.0, 3.0], [5.0, 7.0]])
        assert default_k0(k2) == pytest.approx(2.0)
        assert default_eta(k2, 2.0) == pytest.approx(1.05 * 3.0)

    def test_homogeneous_default_eta_stays_positive(self):
        p = HelmholtzProblem(np.full(TWO_PI.shape, 9.0), TWO_PI)
        assert p.eta > 0

    def test_sponge_enters_imaginary_part(self):
        g = GridSpec(8, 8)
        p = HelmholtzProblem.from_wavenumber(np.full(g.shape, 2.0), g, sponge=np.full(g.shape, 0.5))
        np.testing.assert_allclose(p.k2, 4.0 * (1 + 0.5j))

    def test_rejects_dirichlet_grid(self):
        g = GridSpec(8, 8, bc=BC.DIRICHLET)
        with pytest.raises(ValueError):
            HelmholtzProblem(np.ones(g.shape), g)

    def test_rejects_nonpositive_eta(self):
        with pytest.raises(ValueError):
            HelmholtzProblem(np.ones(TWO_PI.shape), TWO_PI, eta=0.0)


class TestCdr:
    def test_reference_symbol_single_mode(self):
        p = CdrProblem(1.0, 1.0, 0.0, 2.0, TWO_PI, kappa0=1.0, v0=(1.0, 0.0), sigma0=2.0)
        u = plane_wave(TWO_PI, (1, 0))
        np.testing.assert_allclose(p.apply_A(u), (3 + 1j) * u, atol=1e-12)

    def test_matches_finite_difference_free_formula(self):
        # for smooth coefficients the spectral operator agrees with the analytic one
        g = GridSpec(32, 32, lx=2 * np.pi, ly=2 * np.pi)
        x, y = g.coords()
        kappa = 1 + 0.3 * np.cos(x)
        vx, vy = np.sin(y), np.zeros(g.shape)
        sigma = 2 + np.sin(x + y)
        p = CdrProblem(kappa, vx, vy, sigma, g)
        u = np.sin(x) * np.cos(2 * y)
        ux, uy, lap = np.cos(x) * np.cos(2 * y), -2 * np.sin(x) * np.sin(2 * y), -5 * u
        exact = -(kappa * lap + (-0.3 * np.sin(x)) * ux) + vx * ux + vy * uy + sigma * u
        np.testing.assert_allclose(p.apply_A(u), exact, atol=1e-10)

    def test_midrange_and_mean_defaults(self):
        p = cdr()
        assert p.kappa0 == pytest.approx(0.5 * (p.kappa.min() + p.kappa.max()))
        assert p.sigma0 == pytest.approx(0.5 * (p.sigma.min() + p.sigma.max()))
        assert p.v0[0] == pytest.approx(p.vx.mean())

    def test_dealias_removes_high_modes(self):
        rng = _rng(1)
        g = GridSpec(12, 12)
        p = CdrProblem(np.exp(0.3 * rng.standard_normal(g.shape)), 0.0, 0.0, 1.0, g, dealias=True)
        out = np.fft.fft2(p.apply_V(_cplx(rng, g.shape)))
        assert np.abs(out[6, 6]) < 1e-12


class TestNewtonJacobian:
    def test_zero_state_matches_dense_five_point(self):
        g = GridSpec(7, 7, bc=BC.DIRICHLET)
        p = NewtonJacobianProblem(np.zeros(g.shape), g)
        x, y = g.coords()
        u = np.sin(np.pi * x) * np.sin(np.pi * y)
        np.testing.assert_allclose(p.apply_A(u).ravel(), five_point_matrix(g) @ u.ravel(), atol=1e-12)

    def test_constant_state_has_no_potential(self):
        g = GridSpec(7, 7, bc=BC.DIRICHLET)
        p = NewtonJacobianProblem(np.full(g.shape, 3.0), g)
        np.testing.assert_allclose(p.apply_V(_cplx(_rng(), g.shape)), 0, atol=1e-14)

    def test_green_matches_dense_inverse_of_reference(self):
        p = newton()
        g = p.grid
        j0 = five_point_matrix(g).toarray() + (p.alpha - 2 * p.ubar) * np.eye(g.size)
        q = _cplx(_rng(3), g.shape)
        np.testing.assert_allclose(p.apply_G(q).ravel(), np.linalg.solve(j0, q.ravel()), atol=1e-10)

    def test_sparse_matrix_is_the_operator(self):
        p = newton(alpha=0.5)
        u = _cplx(_rng(4), p.shape)
        np.testing.assert_allclose(p.sparse_matrix() @ u.ravel(), p.apply_A(u).ravel(), atol=1e-10)

    def test_alpha_shift_cancels_in_A(self):
        a, b = newton(alpha=0.0), newton(alpha=3.0)
        u = _cplx(_rng(4), a.shape)
        np.testing.assert_allclose(a.apply_A(u), b.apply_A(u))
        np.testing.assert_allclose(b.apply_V(u) - a.apply_V(u), 3.0 * u)

    def test_negative_alpha_rejected(self):
        g = GridSpec(7, 7, bc=BC.DIRICHLET)
        with pytest.raises(ValueError):
            NewtonJacobianProblem(np.zeros(g.shape), g, alpha=-1)

    def test_singular_reference_raises(self):
        g = GridSpec(3, 3, bc=BC.DIRICHLET)
        lam = 128 * np.sin(np.pi / 8) ** 2
        with pytest.raises(SingularSymbolError):
            NewtonJacobianProblem(np.full(g.shape, lam / 2), g)


@pytest.mark.parametrize("make", ALL)
class TestSplitting:
    def test_splitting_residual(self, make):
        p = make()
        for u in _cplx(_rng(5), (20, *p.shape)):
            err = np.linalg.norm(p.apply_Lref(u) - p.apply_V(u) - p.apply_A(u)) / np.linalg.norm(u)
            assert err <= 1e-12

    def test_green_inverts_reference(self, make):
        p = make()
        q = _cplx(_rng(6), p.shape)
        np.testing.assert_allclose(p.apply_Lref(p.apply_G(q)), q, atol=1e-11)
        np.testing.assert_array_equal(p.apply_G(np.zeros(p.shape)), 0)

    def test_key_identity(self, make):
        p = make()
        r = _cplx(_rng(7), (10, *p.shape))
        np.testing.assert_allclose(p.apply_T(r), p.apply_G(p.apply_A(r)), atol=1e-11)

    @pytest.mark.parametrize("op", ["A", "V", "G", "Lref", "T"])
    def test_adjoints(self, make, op):
        p = make()
        rng = _rng(8)
        x, y = _cplx(rng, p.shape), _cplx(rng, p.shape)
        lhs = np.vdot(y, getattr(p, f"apply_{op}")(x))
        rhs = np.vdot(getattr(p, f"apply_{op}_adj")(y), x)
        assert lhs == pytest.approx(rhs, rel=1e-11)

    def test_dense_matvec(self, make):
        p = make()
        x = _cplx(_rng(9), p.shape)
        np.testing.assert_allclose(assemble_dense(p, "A") @ x.ravel(), p.apply_A(x).ravel(), atol=1e-10)

    def test_batch_axis(self, make):
        p = make()
        x = _cplx(_rng(10), (3, *p.shape))
        np.testing.assert_allclose(p.apply_A(x)[2], p.apply_A(x[2]), atol=1e-12)

    def test_grid_mismatch(self, make):
        with pytest.raises(ValueError):
            make().apply_A(np.zeros((5, 5)))

    def test_manifest_round_trip(self, make, tmp_path):
        p = make()
        q = read_problem(write_problem(p, tmp_path, "case"))
        x = _cplx(_rng(11), p.shape)
        np.testing.assert_array_equal(q.apply_A(x), p.apply_A(x))
        np.testing.assert_array_equal(q.apply_G(x), p.apply_G(x))


class TestDense:
    def test_n3_five_point_matrix(self):
        g = GridSpec(3, 3, bc=BC.DIRICHLET)
        a = assemble_dense(NewtonJacobianProblem(np.zeros(g.shape), g), "A")
        np.testing.assert_allclose(np.diag(a), 64.0)
        assert a[0, 1] == pytest.approx(-16) and a[0, 3] == pytest.approx(-16) and a[0, 4] == 0
        np.testing.assert_allclose(a, a.T)

    def test_identity_operator(self):
        class Identity:
            size, shape = 16, (4, 4)

            def apply_A(self, u):
                return u

        np.testing.assert_array_equal(assemble_dense(Identity(), "A"), np.eye(16))

    def test_size_cap(self):
        g = GridSpec(70, 70)
        p = HelmholtzProblem(np.full(g.shape, 4.0), g)
        assert p.size > DENSE_CAP
        with pytest.raises(ValueError):
            assemble_dense(p)


def test_five_point_zero_halo():
    u = np.zeros((3, 3))
    u[1, 1] = 1.0
    out = five_point(u, 0.25, 0.25)
    assert out[1, 1] == pytest.approx(64) and out[0, 1] == pytest.approx(-16)
