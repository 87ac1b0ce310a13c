"""Direct fibre spectra, resolvent distances, rate fits and band comparison.

The homogenised space is C^(n_int + 1) with the pencil mass as inner
product.  Its embedding E into the global P1 space places (u, beta) as the
soft field with trace (beta / n) psi and the stiff field (beta / n) Psi, Psi
being the stiff lift of psi.  E is a Mass isometry, so Theta = E^+ (the
Mass adjoint) is a partial isometry with Theta Theta^* = I.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import FibreOperator, embedding, generalized_eigs
from .boundary import RegionSolver
from .effective import Dispersion, HomFibreOperator, bands_from_roots
from .errors import ConvergenceError, ModelMismatchError, ResonanceError

FLOOR_TOL = 0.10
R2_MIN = 0.95
WINDOW_PAD = 1e-9   # round-off allowance at the window edges


@dataclass(frozen=True)
class ThetaEmbedding:
    tau: np.ndarray
    model: str
    E: sp.csr_matrix       # global dofs x (n_int + 1)
    eta: np.ndarray        # global field of the beta coordinate, unit Mass norm
    Mass: sp.csr_matrix    # global mass
    M_hom: sp.csr_matrix

    def __post_init__(self):
        object.__setattr__(self, "_lu", spla.splu(self.M_hom.astype(complex).tocsc()))

    def apply(self, f):
        """Theta f = M_hom^-1 E^H Mass f."""
        return self._lu.solve(np.asarray(self.E.conj().T @ (self.Mass @ f), dtype=complex))

    def adjoint(self, xi):
        return self.E @ xi

    def isometry_defect(self) -> float:
        """max |E^H Mass E - M_hom| relative to max |M_hom|; zero iff Theta Theta^* = I."""
        G = (self.E.conj().T @ self.Mass @ self.E - self.M_hom).tocsr()
        return float(abs(G).max() / abs(self.M_hom).max()) if G.nnz else 0.0

    def projection_defect(self, rng=None, samples=3) -> float:
        """Theta^* Theta must be a Mass-orthogonal projection."""
        rng = rng or np.random.default_rng(0)
        n = self.E.shape[0]
        worst = 0.0
        for _ in range(samples):
            x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            Px = self.adjoint(self.apply(x))
            PPx = self.adjoint(self.apply(Px))
            idem = np.linalg.norm(PPx - Px) / np.linalg.norm(Px)
            Py = self.adjoint(self.apply(y))
            a = np.vdot(y, self.Mass @ Px)
            b = np.vdot(Py, self.Mass @ x)
            sym = abs(a - b) / (abs(a) + abs(b))
            worst = max(worst, idem, sym)
        return float(worst)


def theta_embedding(fibre: FibreOperator, hom: HomFibreOperator) -> ThetaEmbedding:
    if hom.soft.mesh is not fibre.mesh or not np.array_equal(hom.tau, fibre.tau):
        raise ModelMismatchError("fibre and homogenised operator disagree on mesh or tau")
    soft, stiff = fibre.soft, fibre.stiff
    n = fibre.mesh.n_dofs
    ni = soft.n_int
    beta = np.zeros(n, dtype=complex)
    beta[soft.gamma_dofs] = hom.psi / hom.norm
    Psi = hom.stiff_field
    if Psi is None:
        Psi = np.full(len(stiff.dofs), hom.psi[0], dtype=complex)
    beta[stiff.int_dofs] = Psi[:stiff.n_int] / hom.norm
    P = embedding(soft, n)[:, :ni]
    E = sp.hstack([P, sp.csr_matrix(beta[:, None])]).tocsr()
    return ThetaEmbedding(fibre.tau, hom.model, E, beta, fibre.Mass, hom.M)


@dataclass(frozen=True)
class DirectSpectrum:
    values: np.ndarray
    vectors: np.ndarray
    tau: np.ndarray
    eps: float


def direct_spectrum(fibre: FibreOperator, window, seed=0) -> DirectSpectrum:
    lo, hi = map(float, window)
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ValueError("window must be a bounded interval")
    w, v = generalized_eigs(fibre.K, fibre.Mass, upper=hi, sigma=lo - 1.0, seed=seed)
    keep = w >= lo - WINDOW_PAD * (1 + abs(lo))
    return DirectSpectrum(np.maximum(w[keep], lo), v[:, keep], fibre.tau, fibre.eps)


class _Kernel:
    """G(z) = (K - z Mass)^-1 - E (K_hom - z M_hom)^-1 E^H, with both factorizations."""

    def __init__(self, fibre, hom, theta, z):
        self.E = theta.E
        self.EH = theta.E.conj().T.tocsr()
        self.direct = spla.splu(fibre.pencil(z))
        self.hom = spla.splu((hom.K - complex(z) * hom.M).tocsc())

    def apply(self, g, trans="N"):
        g = np.asarray(g, dtype=complex)
        return self.direct.solve(g, trans=trans) - self.E @ self.hom.solve(self.EH @ g, trans=trans)


def _check_real_z(fibre, hom, z, margin=0.1):
    if abs(complex(z).imag) >= 0.5:
        return
    x = complex(z).real
    for A, B in ((fibre.K, fibre.Mass), (hom.K, hom.M)):
        w, _ = generalized_eigs(A, B, k=2, sigma=x)
        if np.min(np.abs(w - x)) < margin:
            raise ResonanceError(f"z = {z} within {margin} of the spectrum")


def resolvent_distance(fibre: FibreOperator, hom: HomFibreOperator, theta: ThetaEmbedding, z,
                       tol=1e-8, seed=0, unitary=None) -> float:
    """Mass-weighted operator norm of R_direct(z) - Theta^* R_hom(z) Theta.

    D = G Mass with G as in ``_Kernel``; D^* D = G^H Mass G Mass, whose top
    eigenvalue comes from Lanczos on the Hermitian pencil
    (Mass G^H Mass G Mass, Mass).  ``unitary`` optionally composes Theta with
    a Mass-unitary map of the global space (invariance checks).
    """
    _check_real_z(fibre, hom, z)
    ker = _Kernel(fibre, hom, theta, z)
    Mass = fibre.Mass
    n = Mass.shape[0]
    U, UH = unitary if unitary is not None else (None, None)

    def d(x):
        y = Mass @ x
        if U is None:
            return ker.apply(y)
        # D_U = R - U^* Theta^* R_hom Theta U
        direct = ker.direct.solve(y)
        inner = ker.E @ ker.hom.solve(ker.EH @ (Mass @ U(x)))
        return direct - UH(inner)

    def dh(x):
        y = Mass @ x
        if U is None:
            return ker.apply(y, trans="H")
        direct = ker.direct.solve(y, trans="H")
        inner = ker.E @ ker.hom.solve(ker.EH @ (Mass @ U(x)), trans="H")
        return direct - UH(inner)

    op = spla.LinearOperator((n, n), matvec=lambda x: Mass @ dh(d(x)), dtype=complex)
    mlu = spla.splu(Mass.tocsc())
    Minv = spla.LinearOperator((n, n), dtype=complex,
                               matvec=lambda x: mlu.solve(x.real) + 1j * mlu.solve(x.imag))
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    try:
        w = spla.eigsh(op, k=1, M=Mass.astype(complex), Minv=Minv, which="LM", v0=v0, tol=tol,
                       return_eigenvectors=False, maxiter=5000)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(f"Lanczos stalled: {exc}") from exc
    return float(math.sqrt(max(w[0].real, 0.0)))


def complement_reflection(theta: ThetaEmbedding, seed=0):
    """Mass-unitary Householder reflection fixing the range of Theta^*.

    Returns (U, U^*) as callables; U is self-adjoint so both coincide.
    """
    rng = np.random.default_rng(seed)
    n = theta.E.shape[0]
    r = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    w = r - theta.adjoint(theta.apply(r))
    Mw = theta.Mass @ w
    s = np.vdot(w, Mw).real

    def U(x):
        return x - (2.0 / s) * w * np.vdot(Mw, x)

    return U, U


# ---------------------------------------------------------------------------
# rates

def loglog_fit(eps, dist):
    """Least-squares slope of log(dist) against log(eps), with R^2."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.maximum(np.asarray(dist, dtype=float), 1e-300))
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 1.0
    return float(coef[0]), r2


@dataclass
class ConvergenceReport:
    model: str
    variant: str
    taus: np.ndarray          # (n_tau, 2)
    eps: np.ndarray
    zs: tuple
    distances: np.ndarray     # (n_tau, n_z, n_eps)
    h: float
    slopes: np.ndarray = None
    r2: np.ndarray = None
    sup_slopes: np.ndarray = None
    sup_r2: np.ndarray = None
    floor: dict = field(default_factory=dict)   # (tau index, z index) -> ratio
    flags: list = field(default_factory=list)

    def __post_init__(self):
        nt, nz, _ = self.distances.shape
        self.slopes = np.zeros((nt, nz))
        self.r2 = np.zeros((nt, nz))
        for i in range(nt):
            for j in range(nz):
                self.slopes[i, j], self.r2[i, j] = loglog_fit(self.eps, self.distances[i, j])
        sup = self.distances.max(axis=0)
        fits = [loglog_fit(self.eps, sup[j]) for j in range(nz)]
        self.sup_slopes = np.array([f[0] for f in fits])
        self.sup_r2 = np.array([f[1] for f in fits])
        if np.any(self.distances < 0):
            raise ValueError("negative distance")
        for i, j in zip(*np.nonzero(self.r2 < R2_MIN)):
            self.flags.append(f"low R^2 {self.r2[i, j]:.3f} at tau {tuple(self.taus[i])}, z {self.zs[j]}")

    @property
    def floor_ok(self) -> bool:
        return bool(self.floor) and all(r < FLOOR_TOL for r in self.floor.values())

    def rows(self):
        out = []
        for i, t in enumerate(self.taus):
            for j, z in enumerate(self.zs):
                fr = self.floor.get((i, j), float("nan"))
                for k, e in enumerate(self.eps):
                    out.append((self.model, float(t[0]), float(t[1]), complex(z).real,
                                complex(z).imag, float(e), float(self.distances[i, j, k]),
                                float(self.slopes[i, j]), fr))
        return out


CONVERGENCE_COLUMNS = ("model", "tau1", "tau2", "re_z", "im_z", "eps", "distance", "slope",
                       "floor_ratio")


def _distance(problem, tau, eps, z, variant, seed):
    fib = problem.fibre(tau, eps)
    hom = problem.hom(tau, eps, variant)
    return resolvent_distance(fib, hom, theta_embedding(fib, hom), z, seed=seed)


def convergence_study(problem, eps_list, taus, zs=(1 + 1j,), variant=None, fine=None,
                      floor_taus=None, seed=0) -> ConvergenceReport:
    """Distances over (tau, z, eps) with log-log slopes and the two-mesh floor gate.

    The gate compares distances at the smallest eps on ``problem`` and on
    ``fine`` (default: one uniform refinement).  ``floor_taus`` lists tau
    indices to gate; by default the tau attaining the sup for each z.
    """
    eps = np.sort(np.asarray(eps_list, dtype=float))[::-1]
    if len(eps) < 3:
        raise ValueError("need at least three eps values")
    ratios = eps[:-1] / eps[1:]
    if not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise ValueError("eps values must be geometrically spaced")
    if variant is None:
        variant = "exact" if problem.model == "II" else "asymptotic"
    taus = np.asarray(taus, dtype=float).reshape(-1, 2)
    zs = tuple(complex(z) for z in zs)
    D = np.zeros((len(taus), len(zs), len(eps)))
    for i, t in enumerate(taus):
        for j, z in enumerate(zs):
            for k, e in enumerate(eps):
                D[i, j, k] = _distance(problem, t, e, z, variant, seed)
    rep = ConvergenceReport(problem.model, variant, taus, eps, zs, D, problem.mesh.h)
    if fine is False:
        rep.flags.append("floor gate skipped")
        return rep
    fine = fine if fine is not None else problem.refined()
    if floor_taus is None:
        pairs = {(int(np.argmax(D[:, j, -1])), j) for j in range(len(zs))}
    else:
        pairs = {(i, j) for i in floor_taus for j in range(len(zs))}
    for i, j in sorted(pairs):
        d_fine = _distance(fine, taus[i], eps[-1], zs[j], variant, seed)
        rep.floor[(i, j)] = abs(D[i, j, -1] - d_fine) / d_fine
    if not rep.floor_ok:
        rep.flags.append("floor flagged")
    return rep


# ---------------------------------------------------------------------------
# spectra

def _interval_union(intervals, window):
    lo, hi = window
    iv = sorted((max(a, lo), min(b, hi)) for a, b in intervals if b >= lo and a <= hi)
    out = []
    for a, b in iv:
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [tuple(x) for x in out]


def _dist_to_union(x, iv):
    a = np.array([v[0] for v in iv])
    b = np.array([v[1] for v in iv])
    g = np.maximum(np.maximum(a[None, :] - x[:, None], x[:, None] - b[None, :]), 0.0)
    return g.min(axis=1)


def _directed(A, B):
    """sup over the interval union A of the distance to the interval union B."""
    cand = [v for iv in A for v in iv]
    for (_, b0), (a1, _) in zip(B[:-1], B[1:]):
        m = 0.5 * (b0 + a1)   # farthest point of a gap of B
        cand += [m for lo, hi in A if lo <= m <= hi]
    return float(_dist_to_union(np.array(cand), B).max())


def hausdorff(A, B):
    """(A -> B, B -> A, symmetric) Hausdorff distances between finite unions of
    closed intervals; points are degenerate intervals."""
    A = [tuple(map(float, v)) if np.ndim(v) else (float(v), float(v)) for v in A]
    B = [tuple(map(float, v)) if np.ndim(v) else (float(v), float(v)) for v in B]
    if not A or not B:
        return 0.0, 0.0, 0.0
    A, B = sorted(A), sorted(B)
    ab, ba = _directed(A, B), _directed(B, A)
    return ab, ba, max(ab, ba)


@dataclass(frozen=True)
class BandComparison:
    window: tuple
    eps: tuple
    one_sided_direct: tuple   # sup over the direct bands of the distance to the limiting bands
    one_sided_bands: tuple    # sup over the limiting bands of the distance to the direct bands
    symmetric: tuple
    empty: tuple              # per eps: True when either side had nothing in the window

    def monotone(self) -> bool:
        order = np.argsort(self.eps)[::-1]
        d = np.asarray(self.symmetric)[order]
        return bool(np.all(np.diff(d) < 0))


def band_compare(direct: dict, bands, window) -> BandComparison:
    """Hausdorff distances between direct and limiting spectra per eps.

    ``direct`` maps eps to per-tau eigenvalue lists on the grid of ``bands``
    (a BandStructure, or a dict eps -> BandStructure).  The direct values are
    joined into bands by the same tau-continuity rule as the limiting ones,
    so both sides carry the same tau-sampling error.
    """
    eps_keys = sorted(direct, reverse=True)
    rows = []
    for e in eps_keys:
        bs = bands[e] if isinstance(bands, dict) else bands
        if tuple(bs.window) != tuple(window):
            raise ValueError("band structure and direct spectra use different windows")
        if len(direct[e]) != len(bs.taus):
            raise ValueError("direct spectra and bands use different tau grids")
        db = bands_from_roots(bs.taus, [np.asarray(v, dtype=float) for v in direct[e]], window)
        iv_d = _interval_union([(b[1], b[2]) for b in db.bands], window)
        iv = _interval_union([(b[1], b[2]) for b in bs.bands], window)
        empty = not iv_d or not iv
        rows.append(hausdorff(iv_d, iv) + (empty,))
    cols = list(zip(*rows))
    return BandComparison(tuple(window), tuple(eps_keys), cols[0], cols[1], cols[2], cols[3])


# ---------------------------------------------------------------------------
# block identities of the homogenised resolvent

def constrained_soft_solve(hom: HomFibreOperator, z, g_soft):
    """Generalized resolvent through the soft Dirichlet solve, the lift and K(z).

    With the trace constrained to (beta / n) psi, eliminating the interior
    leaves the scalar equation (K(z) - z) beta = (psi^H r_Gamma) / n where r
    is the load minus the Dirichlet part.
    """
    z = complex(z)
    soft = hom.soft
    n = soft.n_int
    y = soft.Mass @ np.asarray(g_soft, dtype=complex)
    solver = RegionSolver(soft, z, 1.0, check=False)
    w = solver.solve(y[:n])
    r = np.vdot(hom.psi, y[n:] - solver.T_bi @ w) / hom.norm
    K = Dispersion(hom)._value(z)
    beta = r / (K - z)
    u = np.concatenate([w, np.zeros(soft.n_gamma)]) + (beta / hom.norm) * solver.lift(hom.psi)
    return u, beta


def block_identity_errors(hom: HomFibreOperator, z, g_soft) -> dict:
    """Relative errors of the soft-soft and beta-soft blocks against the two routes."""
    u, beta = hom.resolvent(z)(g_soft)
    u2, beta2 = constrained_soft_solve(hom, z, g_soft)
    Mass = hom.soft.Mass
    soft_err = math.sqrt(abs(np.vdot(u - u2, Mass @ (u - u2)))) / \
        math.sqrt(abs(np.vdot(u2, Mass @ u2)))
    # beta is recovered from the trace of R_hom g minus the Dirichlet resolvent (zero trace)
    tr = u[hom.soft.n_int:]
    beta_tr = hom.norm * np.vdot(hom.psi, tr) / np.vdot(hom.psi, hom.psi)
    return {"generalized_resolvent": float(soft_err),
            "beta_block": float(abs(beta - beta2) / abs(beta2)),
            "strauss": float(abs(beta - beta_tr) / abs(beta))}
