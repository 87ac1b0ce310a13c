"""Steklov data of the stiff component, the effective tensor and the germ oracle."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .assembly import RegionForms, assemble_region
from .boundary import RegionSolver, dtn_matrix
from .errors import DegenerateError, FitError, ModelMismatchError, SolverError
from .mesh import CellMesh

GAP_TOL = 1e-6


@dataclass(frozen=True)
class SteklovData:
    tau: np.ndarray
    mu: float
    psi: np.ndarray       # interface vector, B-normalized
    Psi: np.ndarray       # stiff lift of psi, local stiff ordering
    B_gamma: np.ndarray
    gap: float
    spectrum: np.ndarray  # all Steklov eigenvalues, ascending
    lift_norm: float      # stiff Mass norm of Psi

    @property
    def projection(self) -> np.ndarray:
        """Rank-one B-orthogonal projection psi <., psi>_B as a nodal matrix."""
        return np.outer(self.psi, self.psi.conj() @ self.B_gamma)


def _fix_phase(psi, B):
    m = np.ones(len(psi)) @ (B @ psi)
    if abs(m) < 1e-8 * np.linalg.norm(psi):
        k = int(np.argmax(np.abs(psi)))
        m = psi[k]
    return psi * (abs(m) / m)


def steklov_solve(stiff: RegionForms) -> SteklovData:
    if stiff.region != "stiff":
        raise ModelMismatchError("Steklov data lives on the stiff component")
    lam = dtn_matrix(stiff).matrix
    B = stiff.B_gamma
    w, v = sla.eigh(lam, B)
    order = np.argsort(np.abs(w), kind="stable")
    mu = float(w[order[0]])
    gap = float(abs(w[order[1]]) - abs(w[order[0]])) if len(w) > 1 else math.inf
    if gap < GAP_TOL:
        raise DegenerateError(f"least Steklov eigenvalue not simple (gap {gap:.2e})")
    psi = v[:, order[0]]
    psi = psi / math.sqrt(abs(np.vdot(psi, B @ psi)))
    psi = _fix_phase(psi, B)
    Psi = RegionSolver(stiff, 0.0, 1.0, check=False).lift(psi)
    nrm = math.sqrt(abs(np.vdot(Psi, stiff.Mass @ Psi)))
    return SteklovData(stiff.tau, mu, psi, Psi, B, gap, w, nrm)


def steklov_at(mesh: CellMesh, tau) -> SteklovData:
    return steklov_solve(assemble_region(mesh, "stiff", tau))


@dataclass(frozen=True)
class EffectiveTensor:
    mu_star: np.ndarray
    fit_residual: float
    stencil: tuple
    coarse: np.ndarray   # plain quadratic fit at step s
    fine: np.ndarray     # plain quadratic fit at step s/2


def stencil_points(s: float) -> np.ndarray:
    d = np.array([1.0, 1.0]) / math.sqrt(2.0)
    base = np.array([[1.0, 0.0], [0.0, 1.0], d])
    return s * np.concatenate([base, -base])


def quadratic_fit(mesh: CellMesh, s: float, mu_fn=None):
    """Least-squares fit mu(tau) ~ tau.A.tau over the stencil (mu_0 = 0 imposed)."""
    pts = stencil_points(s)
    fn = mu_fn or (lambda t: steklov_at(mesh, t).mu)
    mus = np.array([fn(t) for t in pts])
    X = np.stack([pts[:, 0] ** 2, 2 * pts[:, 0] * pts[:, 1], pts[:, 1] ** 2], axis=1)
    coef, *_ = np.linalg.lstsq(X, mus, rcond=None)
    A = np.array([[coef[0], coef[1]], [coef[1], coef[2]]])
    return A, pts, mus


def effective_tensor(mesh: CellMesh, model: str | None = None, s: float = 0.1,
                     mu_fn=None) -> EffectiveTensor:
    """Richardson-combined quadratic fit of the least Steklov eigenvalue.

    The stencil is even in tau, so the plain fit at step s carries an O(s^2)
    quartic bias; combining steps s and s/2 removes it.
    """
    model = model or mesh.geometry.model
    if not 0 < s <= 0.3:
        raise ValueError("stencil step must lie in (0, 0.3]")
    A1, p1, _ = quadratic_fit(mesh, s, mu_fn)
    A2, p2, _ = quadratic_fit(mesh, s / 2, mu_fn)
    stencil = tuple(map(tuple, np.concatenate([p1, p2])))
    if model == "II":
        return EffectiveTensor(np.zeros((2, 2)), float(np.abs(A2).max()), stencil, A1, A2)
    mu_star = (4 * A2 - A1) / 3
    mu_star = 0.5 * (mu_star + mu_star.T)
    resid = float(np.linalg.norm(A2 - A1) / 3)
    if resid > 0.05 * np.linalg.norm(mu_star):
        raise FitError(f"fit residual {resid:.3e} exceeds 5% of |mu_*|; reduce the step")
    return EffectiveTensor(mu_star, resid, stencil, A1, A2)


def germ_oracle(mesh: CellMesh) -> np.ndarray:
    """Normalized germ q of the Neumann-perforated stiff medium.

    Correctors w_k solve the periodic Neumann problem on the stiff region;
    the result is (1/|Q_stiff|) * integral (e_j + grad w_j).(e_k + grad w_k).
    """
    if mesh.geometry.model != "I":
        raise ModelMismatchError("germ oracle needs a connected stiff matrix (Model I)")
    stiff = assemble_region(mesh, "stiff", (0.0, 0.0))
    K = stiff.K.real.tocsr()
    n = K.shape[0]
    b = np.zeros((n, 2))
    b[stiff.n_int:] = stiff.normal_functional
    keep = np.arange(1, n)  # pin one dof; constants span the kernel
    try:
        lu = spla.splu(K[keep][:, keep].tocsc())
    except RuntimeError as exc:
        raise SolverError(f"corrector solve failed: {exc}") from exc
    W = np.zeros((n, 2))
    W[keep] = lu.solve(-b[keep])
    res = np.linalg.norm(K @ W + b) / np.linalg.norm(b)
    if res > 1e-8:
        raise SolverError(f"corrector residual {res:.2e}")
    q = stiff.area * np.eye(2) + b.T @ W
    q = 0.5 * (q + q.T)
    return q / stiff.area


@dataclass(frozen=True)
class LambdaDelta:
    tau: np.ndarray
    eps: float
    matrix: np.ndarray   # interface form matrix (chi^H F phi = <Lambda_Delta phi, chi>)
    coefficient: complex  # value of eps^2 * Lambda_Delta on the B-normalized psi_0
    psi1: np.ndarray     # (n_gamma, 2) derivative of psi_tau at tau = 0
    psi0: np.ndarray

    def hermitian_defect(self) -> float:
        F = self.matrix
        nrm = np.linalg.norm(F)
        return float(np.linalg.norm(F - F.conj().T) / nrm) if nrm else 0.0


def steklov_derivative(mesh: CellMesh, fd_step: float):
    """psi_0 and central differences of psi_tau along both axes."""
    if not 0 < fd_step <= 0.05:
        raise ValueError("fd_step must lie in (0, 0.05]")
    psi0 = steklov_at(mesh, (0.0, 0.0)).psi
    cols = []
    for e in np.eye(2):
        plus = steklov_at(mesh, fd_step * e).psi
        minus = steklov_at(mesh, -fd_step * e).psi
        cols.append((plus - minus) / (2 * fd_step))
    return psi0, np.stack(cols, axis=1)


def lambda_delta(mesh: CellMesh, tau, eps: float, fd_step: float = 0.01,
                 derivative=None) -> LambdaDelta:
    if mesh.geometry.model != "I":
        raise ModelMismatchError("Lambda_Delta is a Model I construction")
    tau = np.asarray(tau, dtype=float)
    psi0, psi1 = derivative if derivative is not None else steklov_derivative(mesh, fd_step)
    stiff0 = assemble_region(mesh, "stiff", (0.0, 0.0))
    N = stiff0.normal_functional          # integral over Gamma of n_out(stiff) phi_a
    B = stiff0.B_gamma
    tn = N @ tau
    tpsi1 = psi1 @ tau
    # <(tau.n)(tau.psi1), psi0>_Gamma, exact for P1 traces on the polygon
    a = np.sum(tn * tpsi1 * psi0.conj())
    c = -1j * np.conj(a)
    Bp = B @ psi0
    F = eps ** -2 * c * np.outer(Bp, Bp.conj())
    return LambdaDelta(tau, eps, F, complex(c), psi1, psi0)
