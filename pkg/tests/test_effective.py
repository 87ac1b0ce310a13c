import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homogenize.assembly import dirichlet_eigenpairs
from homogenize.effective import (Dispersion, assemble_hom_fibre, bands_from_roots,
                                  dispersion_for, dispersion_K, limiting_spectrum,
                                  series_dispersion, wholespace_apply)
from homogenize.errors import ModelMismatchError, MultiplierSingularError, PoleError
from homogenize.problem import tau_grid

J01 = 2.404825557695773


@pytest.fixture(scope="module")
def zb_full(coarse_problem_i):
    soft0 = coarse_problem_i.forms((0.0, 0.0))[0]
    return coarse_problem_i.zhikov(soft0.n_int)


class TestHomPencil:
    def test_hermitian_exact(self, coarse_problem_i, coarse_problem_ii):
        for p in (coarse_problem_i, coarse_problem_ii):
            assert p.hom((0.9, -0.4), 0.1).hermitian_defect() == 0.0

    def test_model_ii_eps_independent(self, coarse_problem_ii):
        a = coarse_problem_ii.hom((1.0, 0.5), 0.1)
        b = coarse_problem_ii.hom((1.0, 0.5), 0.01)
        assert (a.K != b.K).nnz == 0 and (a.M != b.M).nnz == 0

    def test_variants(self, coarse_problem_i, coarse_problem_ii):
        assert coarse_problem_i.hom((0.3, 0.3), 0.1).variant == "asymptotic"
        assert coarse_problem_i.hom((0.3, 0.3), 0.1, "exact").variant == "exact"
        h = coarse_problem_ii.hom((0.3, 0.3), 0.1, "exact")
        assert h.m == coarse_problem_ii.steklov((0.3, 0.3)).mu

    def test_wrong_inputs(self, coarse_problem_i):
        soft, stiff = coarse_problem_i.forms((0.2, 0.2))
        with pytest.raises(ModelMismatchError):
            assemble_hom_fibre(stiff, np.eye(2), 0.1, "I")
        with pytest.raises(ModelMismatchError):
            assemble_hom_fibre(soft, np.eye(3), 0.1, "I")
        with pytest.raises(ModelMismatchError):
            assemble_hom_fibre(soft, np.eye(2), 0.1, "II")
        other = coarse_problem_i.steklov((0.1, 0.2))
        with pytest.raises(ModelMismatchError):
            assemble_hom_fibre(soft, other, 0.1, "I")

    def test_resolvent_constrained_trace(self, coarse_problem_ii, rng):
        h = coarse_problem_ii.hom((0.5, -1.0), 0.1)
        g = rng.standard_normal(len(h.soft.dofs))
        u, beta = h.resolvent(1 + 1j)(g)
        n = h.soft.n_int
        assert np.allclose(u[n:], beta / h.norm * h.psi, rtol=0, atol=1e-14)


class TestDispersion:
    # the lower edge sits below 0 so that the exact zero eigenvalue at tau = 0 is counted
    @pytest.mark.parametrize("model,window", [("I", (-1, 150)), ("II", (-1, 150))])
    def test_roots_match_eigenvalues(self, request, model, window):
        p = request.getfixturevalue(f"coarse_problem_{model.lower()}")
        for tau in tau_grid(3)[:5]:
            h = p.hom(tau, 0.1)
            r = dispersion_for(h, window[1] * 1.05 + 1).roots(*window)
            e, _ = h.eigenvalues(*window)
            assert len(r) == len(e)
            assert np.all(np.abs(r - e) <= 1e-8 * (1 + np.abs(e)))

    def test_roots_are_fixed_points(self, coarse_problem_ii):
        h = coarse_problem_ii.hom((0.4, 0.9), 0.1)
        d = dispersion_for(h, 100)
        for r in d.roots(0, 60):
            if r in d.decoupled:
                continue
            assert abs(d(r) - r) <= 1e-8 * (1 + r)

    def test_series_matches_dn(self, coarse_problem_ii):
        h = coarse_problem_ii.hom((0.4, 0.9), 0.1)
        eig = dirichlet_eigenpairs(h.soft)
        z = 5 + 0.1j
        a = dispersion_K(h, z, eig)
        b = dispersion_K(h, z)
        assert abs(a - b) <= 1e-6 * abs(b)
        assert series_dispersion(h, eig).tail_bound(z) == 0.0

    def test_truncated_series_tail(self, coarse_problem_ii):
        h = coarse_problem_ii.hom((0.4, 0.9), 0.1)
        eig = dirichlet_eigenpairs(h.soft, 10)
        sd = series_dispersion(h, eig)
        z = 5 + 0.1j
        assert abs(sd(z) - dispersion_K(h, z)) <= sd.tail_bound(z)

    def test_model_i_zero_tau(self, coarse_problem_i, zb_full):
        d = Dispersion(coarse_problem_i.hom((0.0, 0.0), 0.1))
        for z in (1 + 1j, 3 + 2j, 50 + 0.5j, 5.0):
            assert abs(d(z) - (z - zb_full(z))) <= 1e-10 * abs(d(z))

    def test_conjugation(self, coarse_problem_i, coarse_problem_ii):
        for p in (coarse_problem_i, coarse_problem_ii):
            d = Dispersion(p.hom((0.7, 0.2), 0.1))
            z = 3 + 2j
            assert abs(d(np.conj(z)) - np.conj(d(z))) <= 1e-12 * abs(d(z))

    @settings(max_examples=15, deadline=None)
    @given(st.floats(-30.0, 120.0), st.floats(1e-3, 20.0))
    def test_model_ii_herglotz(self, coarse_problem_ii, x, y):
        d = Dispersion(coarse_problem_ii.hom((1.0, 0.5), 0.1))
        for z in (complex(x, y), complex(x, -y)):
            k = d(z)
            assert k.imag * z.imag <= 1e-10 * abs(k)

    def test_derivative_negative(self, coarse_problem_ii):
        d = Dispersion(coarse_problem_ii.hom((1.0, 0.5), 0.1))
        x, dx = 7.0, 1e-5
        fd = (d.real(x + dx) - d.real(x - dx)) / (2 * dx)
        assert d.derivative(x) < 0
        assert fd == pytest.approx(d.derivative(x), rel=1e-5)

    def test_pole_error(self, coarse_problem_i):
        h = coarse_problem_i.hom((0.0, 0.0), 0.1)
        d = dispersion_for(h, 120)
        with pytest.raises(PoleError):
            d(float(d.poles[0]))

    def test_one_root_below_first_pole(self, coarse_problem_i):
        for tau in tau_grid(3):
            h = coarse_problem_i.hom(tau, 0.1)
            d = dispersion_for(h, 150)
            lam1 = d.poles[0]
            r = d.roots(0, lam1 * (1 - 1e-9))
            assert len(r) <= 1


class TestZhikov:
    def test_zero(self, problem_i):
        assert problem_i.zhikov(80)(0.0) == 0.0

    def test_first_pole(self, problem_i):
        oracle = (J01 / 0.25) ** 2
        assert abs(problem_i.zhikov(80).poles[0] - oracle) / oracle <= 0.01

    def test_zero_mean_weights(self, problem_i):
        zb = problem_i.zhikov(80)
        w = zb.weights
        # the first two excited modes are the odd pair
        assert np.all(w[1:3] <= 1e-8)
        assert w[0] > 1e-2

    def test_increasing_between_poles(self, problem_i):
        zb = problem_i.zhikov(80)
        edges = np.concatenate([[0.0], zb.poles[zb.poles < 150], [150.0]])
        for a, b in zip(edges[:-1], edges[1:]):
            x = np.linspace(a * (1 + 1e-5), b * (1 - 1e-5), 50)
            vals = np.array([zb(v) for v in x])
            assert np.all(np.diff(vals) > 0)

    def test_k_tilde_identity(self, coarse_problem_i, zb_full):
        p = coarse_problem_i
        mu = p.tensor.mu_star
        eps, t, z = 0.1, np.array([2.0, -1.0]), 1 + 1j
        tau = eps * t
        h = dataclasses.replace(p.hom((0.0, 0.0), eps), m=float(tau @ mu @ tau))
        assert abs(Dispersion(h)(z) - zb_full.k_tilde(t, z, mu)) <= 1e-12 * abs(z)

    def test_tail_bound(self, coarse_problem_i, zb_full):
        zb = coarse_problem_i.zhikov(20)
        z = 20 + 3j
        assert abs(zb(z) - zb_full(z)) <= zb.tail_bound(z)


class TestWholespace:
    def test_delta_source(self, problem_i):
        zb = problem_i.zhikov(80)
        mu = problem_i.tensor.mu_star
        t = np.array([[0.0, 0.0], [1.0, 2.0], [-0.5, 0.3]])
        F = np.array([0.0, 1.0, 0.0])
        z = 2 + 1j
        out = wholespace_apply(F, t, z, mu, zb)
        expect = 1.0 / (t[1] @ zb.a_hom(mu) @ t[1] - zb(z))
        assert out[1] == pytest.approx(expect, rel=1e-14)
        assert out[0] == 0 and out[2] == 0

    def test_origin(self, problem_i):
        zb = problem_i.zhikov(80)
        z = 2 + 1j
        out = wholespace_apply(np.ones(1), np.zeros((1, 2)), z, problem_i.tensor.mu_star, zb)
        assert out[0] == pytest.approx(-1.0 / zb(z), rel=1e-14)

    def test_sign_below_spectrum(self, problem_i):
        zb = problem_i.zhikov(80)
        mu = problem_i.tensor.mu_star
        t = np.stack(np.meshgrid(np.linspace(-3, 3, 9), np.linspace(-3, 3, 9)), -1).reshape(-1, 2)
        out = wholespace_apply(np.ones(len(t)), t, -1.0, mu, zb)
        assert np.isrealobj(out) or np.all(out.imag == 0)
        assert np.all(out > 0)

    def test_singular(self, problem_i):
        zb = problem_i.zhikov(80)
        with pytest.raises(MultiplierSingularError):
            wholespace_apply(np.ones(1), np.zeros((1, 2)), 0.0, problem_i.tensor.mu_star, zb)


class TestBands:
    def test_from_roots(self):
        taus = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        roots = [np.array([1.0, 5.0]), np.array([2.0, 6.0]), np.array([1.5])]
        bs = bands_from_roots(taus, roots, (0, 10))
        assert bs.bands[0][1:3] == (1.0, 2.0)
        assert bs.bands[0][3] == (0.0, 0.0) and bs.bands[0][4] == (1.0, 0.0)
        assert bs.intervals == [(1.0, 2.0), (5.0, 6.0)]
        assert bs.gaps == [(0, 1.0), (2.0, 5.0), (6.0, 10)]

    def test_extremal_tau_reported(self, coarse_problem_i):
        taus = tau_grid(3)
        bs = limiting_spectrum([coarse_problem_i.hom(t, 0.1) for t in taus], (0, 150))
        grid = {tuple(t) for t in taus}
        for _, lo, hi, tlo, thi in bs.bands:
            assert lo <= hi
            assert tuple(tlo) in grid and tuple(thi) in grid
        # the lowest band starts at z = 0 from the centre of the zone
        assert bs.bands[0][1] == pytest.approx(0.0, abs=1e-9)
        assert bs.bands[0][3] == (0.0, 0.0)

    def test_touching_bands_merge(self):
        taus = np.array([[0.0, 0.0], [1.0, 0.0]])
        roots = [np.array([1.0, 2.0 + 3e-13]), np.array([2.0, 3.0])]
        bs = bands_from_roots(taus, roots, (0, 10))
        assert bs.intervals == [(1.0, 3.0)]
        assert bs.gaps == [(0, 1.0), (3.0, 10)]
