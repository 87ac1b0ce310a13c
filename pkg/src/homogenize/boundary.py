"""Lifts, solution operators, DN maps, M-functions and the Krein formula.

Everything here is exact Schur-complement algebra on the FE matrices.  For a
region with pencil T(z) = w*K - z*Mass (w the region weight) and local
ordering [interior, interface]:

    lift      L_z phi = [-T_ii^{-1} T_ib phi ; phi]
    M-function M(z)   = -(T_bb - T_bi T_ii^{-1} T_ib)

so that M(0) is the non-positive DN map.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .assembly import FibreOperator, RegionForms, generalized_eigs
from .errors import IllConditionedError, ResonanceError, SingularError

COND_LIMIT = 1e12
RESONANCE_RTOL = 1e-8

KINDS = ("Lambda_soft", "Lambda_stiff_unweighted", "M_soft", "M_stiff", "M_total")


@dataclass(frozen=True)
class BoundaryOperator:
    kind: str
    matrix: np.ndarray
    tau: np.ndarray
    B_gamma: np.ndarray
    z: complex | None = None
    eps: float | None = None

    def __add__(self, other):
        return BoundaryOperator("M_total", self.matrix + other.matrix, self.tau, self.B_gamma,
                                self.z, self.eps if self.eps is not None else other.eps)

    def hermitian_defect(self) -> float:
        A = self.matrix
        return float(np.linalg.norm(A - A.conj().T) / max(np.linalg.norm(A), 1e-300))


@dataclass(frozen=True)
class LiftField:
    region: str
    tau: np.ndarray
    z: complex | None
    values: np.ndarray  # local ordering [interior, interface]
    n_gamma: int

    @property
    def trace(self):
        return self.values[len(self.values) - self.n_gamma:]


class RegionSolver:
    """Factorized interior block of w*K - z*Mass for one region."""

    def __init__(self, forms: RegionForms, z=0.0, weight=1.0, check=True):
        self.forms = forms
        self.z = complex(z)
        self.weight = float(weight)
        T = forms.pencil(self.z, self.weight)
        n = forms.n_int
        self.T = T
        self.T_ii = T[:n, :n].tocsc()
        self.T_ib = T[:n, n:]
        self.T_bi = T[n:, :n]
        self.T_bb = T[n:, n:]
        if check:
            _check_resonance(forms, self.z, self.weight)
        try:
            self.lu = spla.splu(self.T_ii)
        except RuntimeError as exc:
            raise SingularError(f"interior block singular: {exc}") from exc
        self._X = None

    def solve(self, rhs):
        return self.lu.solve(np.asarray(rhs, dtype=complex))

    @property
    def X(self):
        """T_ii^{-1} T_ib as a dense (n_int, n_gamma) array."""
        if self._X is None:
            self._X = self.solve(self.T_ib.toarray())
        return self._X

    def lift(self, phi):
        phi = np.asarray(phi, dtype=complex)
        inner = -self.solve(self.T_ib @ phi)
        return np.concatenate([inner, phi], axis=0)

    def lift_matrix(self):
        return np.vstack([-self.X, np.eye(self.forms.n_gamma)])

    def schur(self):
        S = self.T_bb.toarray() - self.T_bi @ self.X
        return S

    def dtn(self):
        return -self.schur()


def _check_resonance(forms: RegionForms, z: complex, weight: float):
    if abs(z.imag) > RESONANCE_RTOL * max(1.0, abs(z)):
        return
    A = forms.K_int * weight
    B = forms.block(forms.Mass, "i", "i").tocsc()
    lam1, _ = generalized_eigs(A, B, k=1)
    if forms.n_int > 1500:
        near, _ = generalized_eigs(A, B, k=1, sigma=z.real - 1e-3 * abs(lam1[0]))
    else:
        w, _ = generalized_eigs(A, B)
        near = w[np.argmin(np.abs(w - z.real))][None]
    if np.min(np.abs(near - z)) < RESONANCE_RTOL * abs(lam1[0]):
        raise ResonanceError(f"z = {z} hits a {forms.region} Dirichlet eigenvalue")


def _lift_field(forms, z, values):
    return LiftField(forms.region, forms.tau, z, values, forms.n_gamma)


def harmonic_lift(forms: RegionForms, phi) -> LiftField:
    solver = RegionSolver(forms, 0.0, 1.0, check=False)
    return _lift_field(forms, None, solver.lift(phi))


def solution_operator(forms: RegionForms, z, phi, weight=1.0) -> LiftField:
    solver = RegionSolver(forms, z, weight)
    return _lift_field(forms, complex(z), solver.lift(phi))


def dtn_matrix(forms: RegionForms, z=None, weight=1.0, eps=None) -> BoundaryOperator:
    """Negative Schur complement of weight*K - z*Mass onto the interface.

    ``eps`` (if given) sets weight = eps**-2 and marks the operator as weighted.
    """
    if eps is not None:
        weight = eps ** -2
    zz = 0.0 if z is None else complex(z)
    solver = RegionSolver(forms, zz, weight, check=z is not None)
    if z is None:
        kind = "Lambda_soft" if forms.region == "soft" else "Lambda_stiff_unweighted"
    else:
        kind = "M_soft" if forms.region == "soft" else "M_stiff"
    mat = solver.dtn()
    if z is None:
        mat = 0.5 * (mat + mat.conj().T)
    return BoundaryOperator(kind, mat, forms.tau, forms.B_gamma, None if z is None else zz, eps)


def m_total(fibre: FibreOperator, z) -> BoundaryOperator:
    return (dtn_matrix(fibre.soft, z) + dtn_matrix(fibre.stiff, z, eps=fibre.eps))


def m_total_monolithic(fibre: FibreOperator, z) -> np.ndarray:
    """Schur complement of the whole fibre pencil onto the interface (oracle)."""
    T = fibre.pencil(z).tocsr()
    g = fibre.mesh.gamma_dofs
    rest = np.setdiff1d(np.arange(fibre.mesh.n_dofs), g)
    Tii = T[rest][:, rest].tocsc()
    Tib = T[rest][:, g].toarray()
    X = spla.splu(Tii).solve(Tib.astype(complex))
    return -(T[g][:, g].toarray() - T[g][:, rest] @ X)


def lift_gram(forms: RegionForms, z, zeta, weight=1.0) -> np.ndarray:
    """S*_{conj z} S_zeta: Mass-weighted product of lift matrices."""
    Lz = RegionSolver(forms, np.conj(z), weight).lift_matrix()
    Lzeta = RegionSolver(forms, zeta, weight).lift_matrix()
    return Lz.conj().T @ (forms.Mass @ Lzeta)


def direct_solve(fibre: FibreOperator, z, f) -> np.ndarray:
    """Monolithic oracle: (K_eps - z Mass) u = Mass f."""
    return spla.splu(fibre.pencil(z)).solve(np.asarray(fibre.Mass @ f, dtype=complex))


class KreinResolvent:
    """Fibre resolvent from the decoupled Dirichlet solves plus an interface correction."""

    def __init__(self, fibre: FibreOperator, z):
        self.fibre = fibre
        self.z = complex(z)
        self.soft = RegionSolver(fibre.soft, self.z, 1.0)
        self.stiff = RegionSolver(fibre.stiff, self.z, fibre.eps ** -2)
        M = self.soft.dtn() + self.stiff.dtn()
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise IllConditionedError(f"M(z) condition number {cond:.3e}")
        self.M = M
        self.lu = sla.lu_factor(M)

    def apply_load(self, g) -> np.ndarray:
        mesh = self.fibre.mesh
        g = np.asarray(g, dtype=complex)
        u = np.zeros(mesh.n_dofs, dtype=complex)
        corr = g[mesh.gamma_dofs].copy()
        interior = []
        for solver in (self.soft, self.stiff):
            fm = solver.forms
            u0 = solver.solve(g[fm.int_dofs])
            interior.append(u0)
            corr -= solver.T_bi @ u0
        phi = sla.lu_solve(self.lu, corr)
        u[mesh.gamma_dofs] = -phi
        for solver, u0 in zip((self.soft, self.stiff), interior):
            u[solver.forms.int_dofs] = u0 + solver.solve(solver.T_ib @ phi)
        return u

    def __call__(self, f) -> np.ndarray:
        return self.apply_load(self.fibre.Mass @ np.asarray(f, dtype=complex))


def krein_resolvent(fibre: FibreOperator, z, f) -> np.ndarray:
    return KreinResolvent(fibre, z)(f)


def schur_frobenius_invert(A, B, E, D):
    """Block inverse of [[A, B], [E, D]] through the Schur complement D - E A^{-1} B."""
    A, B, E, D = (np.atleast_2d(np.asarray(x, dtype=complex)) for x in (A, B, E, D))
    for name, X in (("A", A),):
        c = np.linalg.cond(X)
        if not np.isfinite(c) or c > COND_LIMIT:
            raise IllConditionedError(f"block {name} condition number {c:.3e}")
    Ainv = np.linalg.inv(A)
    S = D - E @ Ainv @ B
    c = np.linalg.cond(S)
    if not np.isfinite(c) or c > COND_LIMIT:
        raise IllConditionedError(f"Schur complement condition number {c:.3e}")
    Sinv = np.linalg.inv(S)
    AB = Ainv @ B
    EA = E @ Ainv
    return (Ainv + AB @ Sinv @ EA, -AB @ Sinv, -Sinv @ EA, Sinv)


def relative_mass_error(Mass, u, v) -> float:
    d = u - v
    num = math.sqrt(abs(np.vdot(d, Mass @ d)))
    den = math.sqrt(abs(np.vdot(v, Mass @ v)))
    return num / den
