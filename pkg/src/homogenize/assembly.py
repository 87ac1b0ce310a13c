"""P1 assembly of magnetic Laplacians (grad + i tau)^2 on the periodic cell."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ContrastError, QuasimomentumError, SolverError
from .mesh import CellMesh, SOFT, STIFF

REGION_TAGS = {"soft": SOFT, "stiff": STIFF}
DENSE_EIG_LIMIT = 400


def check_tau(tau) -> np.ndarray:
    t = np.asarray(tau, dtype=float).reshape(2)
    if np.any(t < -math.pi) or np.any(t >= math.pi) or not np.all(np.isfinite(t)):
        raise QuasimomentumError(f"tau {tuple(t)} outside [-pi, pi)^2")
    return t


def check_eps(eps) -> float:
    e = float(eps)
    if not 0.0 < e < 1.0:
        raise ContrastError(f"contrast eps must lie in (0,1), got {eps}")
    return e


def element_geometry(mesh: CellMesh, mask=None):
    tris = mesh.triangles if mask is None else mesh.triangles[mask]
    p = mesh.vertices[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    g1 = np.stack([d2[:, 1], -d2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-d1[:, 1], d1[:, 0]], axis=1) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], axis=1)  # (M, 3, 2)
    return tris, 0.5 * det, grads


def _scatter(rows, vals, n):
    r = np.repeat(rows, 3, axis=1).ravel()
    c = np.tile(rows, (1, 3)).ravel()
    return sp.csr_matrix((vals.ravel(), (r, c)), shape=(n, n))


def assemble_global(mesh: CellMesh, tau, mask=None):
    """Magnetic stiffness and mass over the triangles in ``mask``, on all periodic dofs."""
    tau = np.asarray(tau, dtype=float)
    tris, area, g = element_geometry(mesh, mask)
    rows = mesh.dof[tris]
    ggt = np.einsum("tai,tbi->tab", g, g) * area[:, None, None]
    mloc = (np.ones((3, 3)) + np.eye(3)) / 12.0 * area[:, None, None]
    tg = g @ tau  # (M, 3)
    cross = 1j * (area / 3.0)[:, None, None] * (tg[:, :, None] - tg[:, None, :])
    kloc = ggt + cross + float(tau @ tau) * mloc
    n = mesh.n_dofs
    K = _scatter(rows, kloc, n)
    K = ((K + K.conj().T) * 0.5).tocsr()
    M = _scatter(rows, mloc, n)
    M = ((M + M.T) * 0.5).tocsr()
    return K, M


def boundary_mass(mesh: CellMesh) -> np.ndarray:
    """P1 mass on the interface polygon, ordered as mesh.gamma."""
    p = mesh.vertices[mesh.gamma]
    ln = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    n = len(ln)
    B = np.zeros((n, n))
    i = np.arange(n)
    j = (i + 1) % n
    np.add.at(B, (i, i), ln / 3.0)
    np.add.at(B, (j, j), ln / 3.0)
    np.add.at(B, (i, j), ln / 6.0)
    np.add.at(B, (j, i), ln / 6.0)
    return B


@dataclass(frozen=True)
class RegionForms:
    """Forms of one region; local ordering is [interior dofs, interface dofs]."""

    region: str
    tau: np.ndarray
    mesh: CellMesh
    dofs: np.ndarray        # local -> global dof
    n_int: int
    K: sp.csr_matrix        # local full stiffness
    Mass: sp.csr_matrix     # local full mass
    B_gamma: np.ndarray
    area: float
    normal_functional: np.ndarray  # (n_gamma, 2): integral of grad(phi_a) over the region

    @property
    def n_gamma(self) -> int:
        return len(self.dofs) - self.n_int

    @property
    def int_dofs(self):
        return self.dofs[:self.n_int]

    @property
    def gamma_dofs(self):
        return self.dofs[self.n_int:]

    def _blk(self, A, a, b):
        s = {"i": slice(0, self.n_int), "b": slice(self.n_int, None)}
        return A[s[a], s[b]]

    @property
    def K_int(self):
        return self._blk(self.K, "i", "i").tocsc()

    @property
    def K_ib(self):
        return self._blk(self.K, "i", "b")

    @property
    def K_bi(self):
        return self._blk(self.K, "b", "i")

    @property
    def K_bb(self):
        return self._blk(self.K, "b", "b")

    def block(self, A, a, b):
        return self._blk(A, a, b)

    def pencil(self, z=0.0, weight=1.0):
        """weight*K - z*Mass in local ordering."""
        T = self.K * weight if weight != 1.0 else self.K.copy()
        if z != 0:
            T = T - z * self.Mass
        return T.tocsr()

    @property
    def gamma_length(self) -> float:
        return float(self.B_gamma.sum())


def assemble_region(mesh: CellMesh, region: str, tau) -> RegionForms:
    tau = check_tau(tau)
    tag = REGION_TAGS[region]
    mask = mesh.region_tag == tag
    K, M = assemble_global(mesh, tau, mask)
    gamma = mesh.gamma_dofs
    touched = np.unique(mesh.dof[mesh.triangles[mask]])
    interior = np.setdiff1d(touched, gamma, assume_unique=True)
    dofs = np.concatenate([interior, gamma])
    K = K[dofs][:, dofs].tocsr()
    M = M[dofs][:, dofs].tocsr()
    _, area, g = element_geometry(mesh, mask)
    tris = mesh.triangles[mask]
    nf = np.zeros((mesh.n_dofs, 2))
    np.add.at(nf, mesh.dof[tris], g * area[:, None, None])
    return RegionForms(region, tau, mesh, dofs, len(interior), K, M,
                       boundary_mass(mesh), float(area.sum()), nf[gamma])


@dataclass(frozen=True)
class FibreOperator:
    mesh: CellMesh
    tau: np.ndarray
    eps: float
    K: sp.csr_matrix
    Mass: sp.csr_matrix
    soft: RegionForms
    stiff: RegionForms

    def pencil(self, z):
        return (self.K - z * self.Mass).tocsc()


def assemble_fibre(mesh: CellMesh, tau, eps, soft=None, stiff=None) -> FibreOperator:
    tau = check_tau(tau)
    eps = check_eps(eps)
    soft = soft if soft is not None else assemble_region(mesh, "soft", tau)
    stiff = stiff if stiff is not None else assemble_region(mesh, "stiff", tau)
    n = mesh.n_dofs
    Ks, Ms = _embed(soft, n)
    Kt, Mt = _embed(stiff, n)
    K = (Ks + Kt * eps ** -2).tocsr()
    K = ((K + K.conj().T) * 0.5).tocsr()
    return FibreOperator(mesh, tau, eps, K, (Ms + Mt).tocsr(), soft, stiff)


def _embed(forms: RegionForms, n: int):
    P = sp.csr_matrix((np.ones(len(forms.dofs)), (forms.dofs, np.arange(len(forms.dofs)))),
                      shape=(n, len(forms.dofs)))
    return P @ forms.K @ P.T, P @ forms.Mass @ P.T


def embedding(forms: RegionForms, n: int) -> sp.csr_matrix:
    """Global x local 0/1 matrix placing region vectors on the periodic dofs."""
    return sp.csr_matrix((np.ones(len(forms.dofs)), (forms.dofs, np.arange(len(forms.dofs)))),
                         shape=(n, len(forms.dofs)))


@dataclass(frozen=True)
class EigenData:
    lam: np.ndarray
    phi: np.ndarray     # (n_int, J), Mass-orthonormal
    means: np.ndarray   # integral of phi_j over the region
    tau: np.ndarray

    @property
    def J(self) -> int:
        return len(self.lam)


def _fix_phase(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)
    ph = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(ph) / ph)[None, :]


def generalized_eigs(A, B, k=None, sigma=-1.0, upper=None, seed=0):
    """Lowest eigenpairs of the Hermitian pencil (A, B).

    Either the ``k`` lowest or all below ``upper``.  Dense for small sizes,
    otherwise ARPACK shift-invert about ``sigma`` with a seeded start vector.
    """
    n = A.shape[0]
    if n <= DENSE_EIG_LIMIT or (k is not None and k >= n - 1):
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
        Bd = B.toarray() if sp.issparse(B) else np.asarray(B)
        w, v = sla.eigh(Ad, Bd)
        if k is not None:
            w, v = w[:k], v[:, :k]
        if upper is not None:
            keep = w <= upper
            w, v = w[keep], v[:, keep]
        return w, v
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n) if np.iscomplexobj(A.data) \
        else rng.standard_normal(n)
    kk = k if k is not None else 12
    A = A.tocsc()
    B = B.tocsc()
    lu = spla.splu((A - sigma * B).tocsc())
    dtype = np.result_type(A.dtype, B.dtype, float)
    op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=dtype)
    while True:
        kk = min(kk, n - 2)
        try:
            w, v = spla.eigsh(A, k=kk, M=B, sigma=sigma, OPinv=op, v0=v0.astype(dtype),
                              tol=0, maxiter=20 * n)
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"eigensolver did not converge: {exc}") from exc
        order = np.argsort(w)
        w, v = w[order].real, v[:, order]
        if k is not None or w[-1] > upper or kk >= n - 2:
            break
        kk = int(kk * 1.6) + 4
    if upper is not None:
        keep = w <= upper
        w, v = w[keep], v[:, keep]
    # B-orthonormalize (ARPACK returns B-orthogonal vectors up to round-off)
    G = v.conj().T @ (B @ v)
    L = np.linalg.cholesky(0.5 * (G + G.conj().T))
    v = v @ np.linalg.inv(L).conj().T
    return w, v


def dirichlet_eigenpairs(forms: RegionForms, J=None, upper=None, seed=0) -> EigenData:
    """Eigenpairs of the region problem with Dirichlet data on the interface.

    ``J=None`` with ``upper=None`` returns all modes.
    """
    A = forms.K_int
    B = forms.block(forms.Mass, "i", "i").tocsc()
    n = forms.n_int
    if J is not None and not 1 <= J <= n:
        raise ValueError(f"J must lie in [1, {n}]")
    if J is None and upper is None:
        J = n
    w, v = generalized_eigs(A, B, k=J, upper=upper, seed=seed)
    res = A @ v - (B @ v) * w[None, :]
    scale = np.linalg.norm(A @ v, axis=0) + np.abs(w) * np.linalg.norm(B @ v, axis=0)
    rel = np.linalg.norm(res, axis=0) / scale
    if rel.size and rel.max() > 1e-10:
        raise SolverError(f"eigenpair residual {rel.max():.2e} above tolerance")
    v = _fix_phase(v) if v.size else v
    ones = np.ones(len(forms.dofs))
    b = (forms.Mass @ ones)[:n]
    means = b @ v
    return EigenData(w, v, means, forms.tau)
