import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homogenize.assembly import assemble_fibre, assemble_region, dirichlet_eigenpairs
from homogenize.boundary import (KreinResolvent, RegionSolver, direct_solve, dtn_matrix,
                                 harmonic_lift, krein_resolvent, lift_gram, m_total,
                                 m_total_monolithic, relative_mass_error,
                                 schur_frobenius_invert, solution_operator)
from homogenize.errors import IllConditionedError, ResonanceError
from homogenize.identities import (SolverCache, additivity_residual, difference_residual,
                                   herglotz_margin, krein_residual, scaling_residual)
from homogenize.mesh import refine


def _cvec(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def _nodes(forms):
    mesh = forms.mesh
    vert = np.empty(mesh.n_dofs, dtype=int)
    vert[mesh.dof] = np.arange(mesh.n_vertices)
    return mesh.vertices[vert[forms.dofs]]


@pytest.fixture(scope="module")
def fibre_ii(coarse_ii):
    return assemble_fibre(coarse_ii, (0.7, -0.3), 0.2)


@pytest.fixture(scope="module")
def fibre_i(coarse_i):
    return assemble_fibre(coarse_i, (0.4, 1.1), 0.1)


class TestLifts:
    def test_constant_lift(self, coarse_i):
        for region in ("soft", "stiff"):
            f = assemble_region(coarse_i, region, (0.0, 0.0))
            u = harmonic_lift(f, np.ones(f.n_gamma)).values
            assert np.abs(u - 1).max() < 1e-12

    def test_trace_exact(self, coarse_ii, rng):
        f = assemble_region(coarse_ii, "soft", (0.3, 0.9))
        phi = _cvec(rng, f.n_gamma)
        assert np.array_equal(harmonic_lift(f, phi).trace, phi)

    def test_linearity(self, coarse_ii, rng):
        f = assemble_region(coarse_ii, "stiff", (1.2, -0.4))
        p, q = _cvec(rng, f.n_gamma), _cvec(rng, f.n_gamma)
        a, b = 2 - 1j, 0.5j
        lhs = harmonic_lift(f, a * p + b * q).values
        rhs = a * harmonic_lift(f, p).values + b * harmonic_lift(f, q).values
        assert np.abs(lhs - rhs).max() < 1e-12 * np.abs(lhs).max()

    def test_plane_wave_lift_under_refinement(self, coarse_ii):
        tau = np.array([1.0, 0.5])
        errs = []
        for m in (coarse_ii, refine(coarse_ii)):
            f = assemble_region(m, "stiff", tau)
            w = np.exp(-1j * _nodes(f) @ tau)
            u = harmonic_lift(f, w[f.n_int:]).values
            errs.append(np.abs(u - w).max())
        assert errs[1] < errs[0] / 2
        assert errs[1] < 1e-4

    def test_zero_z_matches_harmonic(self, coarse_i, rng):
        f = assemble_region(coarse_i, "soft", (0.2, 0.2))
        phi = _cvec(rng, f.n_gamma)
        a = solution_operator(f, 0.0, phi).values
        b = harmonic_lift(f, phi).values
        assert np.array_equal(a, b)

    def test_interior_residual(self, coarse_ii, rng):
        f = assemble_region(coarse_ii, "soft", (0.6, 0.1))
        z = 1 + 1j
        u = solution_operator(f, z, _cvec(rng, f.n_gamma)).values
        r = (f.pencil(z) @ u)[:f.n_int]
        assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(f.pencil(z) @ u)

    def test_resonance(self, coarse_i):
        f = assemble_region(coarse_i, "soft", (0.0, 0.0))
        lam = dirichlet_eigenpairs(f, 1).lam[0]
        with pytest.raises(ResonanceError):
            solution_operator(f, lam, np.ones(f.n_gamma))


class TestDtN:
    @pytest.mark.parametrize("region", ["soft", "stiff"])
    def test_lambda_hermitian_nonpositive(self, coarse_ii, region):
        f = assemble_region(coarse_ii, region, (0.9, -1.7))
        L = dtn_matrix(f)
        assert L.z is None
        assert L.kind.startswith("Lambda")
        assert L.hermitian_defect() <= 1e-10
        assert np.linalg.eigvalsh(L.matrix).max() <= 1e-10 * np.linalg.norm(L.matrix, 2)

    def test_lambda_annihilates_constants_at_zero(self, coarse_i):
        f = assemble_region(coarse_i, "stiff", (0.0, 0.0))
        L = dtn_matrix(f).matrix
        assert np.abs(L @ np.ones(f.n_gamma)).max() < 1e-10 * np.abs(L).max()

    def test_conjugate_symmetry(self, fibre_ii):
        z = 0.8 + 1.3j
        a = m_total(fibre_ii, z).matrix
        b = m_total(fibre_ii, np.conj(z)).matrix
        assert np.linalg.norm(b - a.conj().T) <= 1e-10 * np.linalg.norm(a)

    def test_additivity(self, fibre_i, fibre_ii):
        for fib in (fibre_i, fibre_ii):
            assert additivity_residual(fib, 1 + 1j) <= 1e-12
            assert additivity_residual(fib, -1 + 0.5j) <= 1e-12

    def test_additivity_against_monolithic_kind(self, fibre_ii):
        M = m_total(fibre_ii, 1 + 1j)
        assert M.kind == "M_total"
        assert M.eps == fibre_ii.eps
        assert M.matrix.shape == m_total_monolithic(fibre_ii, 1 + 1j).shape

    def test_scaling(self, fibre_i, fibre_ii):
        for fib in (fibre_i, fibre_ii):
            assert scaling_residual(fib, 1 + 1j) <= 1e-12

    def test_difference(self, fibre_ii):
        assert difference_residual(fibre_ii, 1 + 1j, 2 - 1j) <= 1e-9

    def test_lift_gram_single_region(self, coarse_ii):
        f = assemble_region(coarse_ii, "soft", (0.5, 0.5))
        z, zeta = 1 + 1j, 2 - 1j
        lhs = dtn_matrix(f, z).matrix - dtn_matrix(f, zeta).matrix
        rhs = (z - zeta) * lift_gram(f, z, zeta)
        assert np.linalg.norm(lhs - rhs) <= 1e-9 * np.linalg.norm(dtn_matrix(f, z).matrix)

    def test_herglotz_sign(self, fibre_ii):
        assert herglotz_margin(fibre_ii, 1 + 2j) >= -1e-10
        assert herglotz_margin(fibre_ii, 1 + 2j) > 0
        cache = SolverCache(fibre_ii)
        M = cache.m_total(1 - 2j)
        im = (M - M.conj().T) / 2j
        assert np.linalg.eigvalsh(im).max() <= 1e-10 * np.linalg.norm(M, 2)


class TestKrein:
    def test_example_point(self, coarse_ii, rng):
        fib = assemble_fibre(coarse_ii, (0.7, -0.3), 0.2)
        f = _cvec(rng, coarse_ii.n_dofs)
        assert krein_residual(fib, 1 + 1j, f) <= 1e-9

    @settings(max_examples=8, deadline=None)
    @given(st.sampled_from([0.5, 0.2, 0.1]),
           st.tuples(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0)),
           st.integers(0, 2 ** 16))
    def test_random_points(self, coarse_i, eps, tau, seed):
        fib = assemble_fibre(coarse_i, tau, eps)
        f = _cvec(np.random.default_rng(seed), coarse_i.n_dofs)
        assert krein_residual(fib, -1 + 0.5j, f) <= 1e-9

    def test_stiff_supported_load(self, fibre_ii, rng):
        n = fibre_ii.mesh.n_dofs
        f = np.zeros(n, dtype=complex)
        idx = fibre_ii.stiff.int_dofs
        f[idx] = _cvec(rng, len(idx))
        u = krein_resolvent(fibre_ii, 1 + 1j, f)
        v = direct_solve(fibre_ii, 1 + 1j, f)
        s = fibre_ii.soft.int_dofs
        assert np.abs(u[s] - v[s]).max() <= 1e-9 * np.abs(v).max()

    def test_adjoint_symmetry(self, fibre_i, rng):
        n = fibre_i.mesh.n_dofs
        f, g = _cvec(rng, n), _cvec(rng, n)
        z = 0.5 + 0.7j
        a = np.vdot(g, fibre_i.Mass @ KreinResolvent(fibre_i, z)(f))
        b = np.vdot(KreinResolvent(fibre_i, np.conj(z))(g), fibre_i.Mass @ f)
        assert abs(a - b) <= 1e-9 * abs(a)

    def test_relative_mass_error_zero(self, fibre_i, rng):
        u = _cvec(rng, fibre_i.mesh.n_dofs)
        assert relative_mass_error(fibre_i.Mass, u, u) == 0.0

    def test_region_solver_lift_matrix(self, fibre_ii, rng):
        s = RegionSolver(fibre_ii.soft, 1 + 1j)
        phi = _cvec(rng, fibre_ii.soft.n_gamma)
        assert np.allclose(s.lift_matrix() @ phi, s.lift(phi), rtol=0, atol=1e-12)


class TestSchurFrobenius:
    def test_decoupled(self):
        A = np.array([[2.0, 0.5], [0.5, 3.0]])
        D = np.array([[4.0]])
        inv = schur_frobenius_invert(A, np.zeros((2, 1)), np.zeros((1, 2)), D)
        assert np.allclose(inv[0], np.linalg.inv(A))
        assert np.allclose(inv[3], [[0.25]])
        assert np.all(inv[1] == 0) and np.all(inv[2] == 0)

    def test_scalar_blocks(self):
        a, b, e, d = schur_frobenius_invert(2.0, 1.0, 1.0, 2.0)
        got = np.block([[a, b], [e, d]])
        assert np.allclose(got, [[2 / 3, -1 / 3], [-1 / 3, 2 / 3]], rtol=0, atol=1e-15)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_random_hpd(self, seed):
        rng = np.random.default_rng(seed)
        X = _cvec(rng, 36).reshape(6, 6)
        H = X @ X.conj().T + 6 * np.eye(6)
        a, b, e, d = schur_frobenius_invert(H[:1, :1], H[:1, 1:], H[1:, :1], H[1:, 1:])
        inv = np.block([[a, b], [e, d]])
        assert np.abs(inv @ H - np.eye(6)).max() <= 1e-12

    def test_singular_block(self):
        with pytest.raises(IllConditionedError):
            schur_frobenius_invert(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2))
