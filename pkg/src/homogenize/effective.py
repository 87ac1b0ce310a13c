"""Homogenised fibre pencil, dispersion functions and the Zhikov function.

The homogenised fibre acts on pairs (u, beta) with u a soft-phase field whose
interface trace is constrained to (beta / n) psi.  Coordinates are the soft
interior dofs and beta; n is the stiff Mass norm of the lift of psi.  Its
Schur complement onto beta is K(tau, z) - z with

    K(tau, z) = -(psi^H M_soft(z) psi + eps^-2 m) / n^2,

m being the stiff Steklov coefficient kept by the model (mu_* tau.tau for
the asymptotic Model I, mu_tau for the exact variant, 0 for Model II).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .assembly import RegionForms, check_eps, generalized_eigs
from .errors import ModelMismatchError, MultiplierSingularError, PoleError
from .steklov import SteklovData

POLE_RTOL = 1e-6
ROOT_XTOL = 1e-12


@dataclass(frozen=True)
class HomFibreOperator:
    model: str
    variant: str
    tau: np.ndarray
    eps: float
    soft: RegionForms
    psi: np.ndarray
    norm: float          # n, the stiff lift norm
    m: float             # stiff Steklov coefficient (unweighted)
    K: sp.csr_matrix
    M: sp.csr_matrix
    stiff_field: np.ndarray | None = None  # stiff lift of psi; None means the constant

    @property
    def size(self) -> int:
        return self.K.shape[0]

    @property
    def stiff_term(self) -> float:
        return 0.0 if self.m == 0.0 else self.eps ** -2 * self.m

    def expand(self, xi):
        """Coordinates -> (soft field in local ordering, beta)."""
        n = self.soft.n_int
        u = np.concatenate([xi[:n], xi[n] / self.norm * self.psi])
        return u, xi[n]

    def load(self, g_soft, g_beta):
        y = self.soft.Mass @ np.asarray(g_soft, dtype=complex)
        n = self.soft.n_int
        return np.concatenate([y[:n], [np.vdot(self.psi, y[n:]) / self.norm + g_beta]])

    def resolvent(self, z) -> "HomResolvent":
        return HomResolvent(self, z)

    def eigenvalues(self, lower, upper, seed=0):
        w, v = generalized_eigs(self.K, self.M, upper=upper, sigma=lower - 1.0, seed=seed)
        keep = w >= lower
        return w[keep], v[:, keep]

    def hermitian_defect(self) -> float:
        d = abs(self.K - self.K.conj().T).max() + abs(self.M - self.M.conj().T).max()
        return float(d)


class HomResolvent:
    def __init__(self, hom: HomFibreOperator, z):
        self.hom = hom
        self.z = complex(z)
        self.lu = spla.splu((hom.K - self.z * hom.M).tocsc())

    def __call__(self, g_soft, g_beta=0.0):
        xi = self.lu.solve(self.hom.load(g_soft, g_beta))
        return self.hom.expand(xi)


def _pencil(soft: RegionForms, psi, norm, stiff_term):
    n = soft.n_int
    blocks = []
    for A, extra, shift in ((soft.K, -stiff_term, 0.0), (soft.Mass, 0.0, 1.0)):
        A = A.tocsr()
        Aii = A[:n, :n]
        col = (A[:n, n:] @ psi) / norm
        corner = (np.vdot(psi, A[n:, n:] @ psi) + extra) / norm ** 2 + shift
        P = sp.bmat([[Aii, sp.csr_matrix(col[:, None])],
                     [sp.csr_matrix(col.conj()[None, :]), sp.csr_matrix([[corner]])]]).tocsr()
        P = ((P + P.conj().T) * 0.5).tocsr()
        blocks.append(P)
    return blocks


def assemble_hom_fibre(soft: RegionForms, coupling, eps, model: str,
                       variant: str | None = None, stiff_area=None) -> HomFibreOperator:
    """Build the homogenised pencil.

    Model I: ``coupling`` is mu_* (asymptotic variant with the constant psi_0)
    or SteklovData at tau (exact variant).  Model II: ``coupling`` is the
    SteklovData at tau; the default variant drops the Steklov term so that
    the operator does not depend on eps, ``variant='exact'`` keeps it.
    """
    if soft.region != "soft":
        raise ModelMismatchError("homogenised pencil is built on the soft forms")
    eps = check_eps(eps)
    tau = soft.tau
    if model == "I" and not isinstance(coupling, SteklovData):
        mu_star = np.asarray(coupling, dtype=float)
        if mu_star.shape != (2, 2):
            raise ModelMismatchError("Model I needs the 2x2 effective tensor")
        if stiff_area is None:
            stiff_area = 1.0 - soft.area
        glen = soft.gamma_length
        psi = np.ones(soft.n_gamma) / math.sqrt(glen)
        norm = math.sqrt(stiff_area / glen)
        m = float(tau @ mu_star @ tau)
        variant = "asymptotic"
        field_ = None
    elif isinstance(coupling, SteklovData):
        if not np.allclose(coupling.tau, tau, atol=0, rtol=0):
            raise ModelMismatchError("Steklov data and soft forms at different tau")
        psi, norm, field_ = coupling.psi, coupling.lift_norm, coupling.Psi
        if model == "I":
            variant = "exact"
            m = coupling.mu
        elif model == "II":
            variant = variant or "asymptotic"
            m = coupling.mu if variant == "exact" else 0.0
        else:
            raise ModelMismatchError(f"unknown model {model!r}")
    else:
        raise ModelMismatchError("Model II needs Steklov data psi_tau")
    stiff_term = 0.0 if m == 0.0 else eps ** -2 * m
    K, M = _pencil(soft, psi, norm, stiff_term)
    return HomFibreOperator(model, variant, tau, eps, soft, psi, norm, m, K, M, field_)


# ---------------------------------------------------------------------------
# dispersion

@dataclass
class Dispersion:
    """K(tau, .) for one homogenised fibre, with its interface-coupled poles."""

    hom: HomFibreOperator
    poles: np.ndarray = field(default_factory=lambda: np.zeros(0))
    decoupled: np.ndarray = field(default_factory=lambda: np.zeros(0))
    evaluations: int = 0

    def _solve(self, z):
        soft = self.hom.soft
        n = soft.n_int
        T = soft.pencil(z).tocsr()
        x = spla.splu(T[:n, :n].tocsc()).solve(np.asarray(T[:n, n:] @ self.hom.psi, dtype=complex))
        return T, x

    def __call__(self, z) -> complex:
        z = complex(z)
        self._check_pole(z)
        return self._value(z)

    def _value(self, z) -> complex:
        h = self.hom
        n = h.soft.n_int
        T, x = self._solve(z)
        psi = h.psi
        sq = np.vdot(psi, T[n:, n:] @ psi) - np.vdot(psi, T[n:, :n] @ x)
        self.evaluations += 1
        return (sq - h.stiff_term) / h.norm ** 2

    def real(self, z: float) -> float:
        return float(self(z).real)

    def derivative(self, z: float) -> float:
        """dK/dz on the real axis: -|L_z psi|_Mass^2 / n^2."""
        h = self.hom
        _, x = self._solve(complex(z))
        L = np.concatenate([-x, h.psi])
        return float(-np.vdot(L, h.soft.Mass @ L).real / h.norm ** 2)

    def _check_pole(self, z):
        if self.poles.size:
            d = np.min(np.abs(self.poles - z) / np.maximum(np.abs(self.poles), 1.0))
            if d < POLE_RTOL * 1e-3:
                raise PoleError(f"z = {z} sits on a pole of K")

    def roots(self, lower, upper):
        """Solutions of K(z) = z in [lower, upper] plus decoupled Dirichlet eigenvalues."""
        f = lambda x: float(self._value(complex(x)).real) - x
        poles = np.sort(self.poles[(self.poles > lower) & (self.poles < upper)])
        edges = np.concatenate([[lower], poles, [upper]])
        found = []
        for k in range(len(edges) - 1):
            a, b = edges[k], edges[k + 1]
            da = 1e-10 * (1 + abs(a)) if k > 0 else 0.0
            db = 1e-10 * (1 + abs(b)) if k < len(edges) - 2 else 0.0
            if b - a <= da + db:
                continue
            fa, fb = f(a + da), f(b - db)
            if fa > 0 > fb:
                found.append(brentq(f, a + da, b - db, xtol=ROOT_XTOL * (1 + abs(b)), rtol=1e-15))
            elif fa > 0 and fb >= 0 and k < len(edges) - 2:
                found.append(b)  # root within db of the pole on its left
            elif fa <= 0 and k > 0:
                found.append(a)  # root within da of the pole on its right
        dec = self.decoupled[(self.decoupled >= lower) & (self.decoupled <= upper)]
        return np.sort(np.concatenate([np.array(found, dtype=float), dec]))


def coupled_poles(hom: HomFibreOperator, upper, lower=None, rtol=1e-14, cluster_rtol=1e-9, seed=0):
    """Soft Dirichlet eigenvalues below ``upper`` split into coupled poles and decoupled ones."""
    soft = hom.soft
    n = soft.n_int
    A = soft.K_int
    B = soft.block(soft.Mass, "i", "i").tocsc()
    lam, phi = generalized_eigs(A, B, upper=upper, seed=seed)
    if lam.size == 0:
        return lam, lam
    res = []
    for j, l in enumerate(lam):
        T = soft.pencil(l).tocsr()
        res.append(abs(np.vdot(phi[:, j], T[:n, n:] @ hom.psi)) ** 2)
    res = np.array(res)
    scale = max(res.max(), 1e-300)
    poles, dec = [], []
    i = 0
    while i < len(lam):
        j = i + 1
        while j < len(lam) and lam[j] - lam[j - 1] <= cluster_rtol * (1 + lam[j]):
            j += 1
        weight = res[i:j].sum()
        centre = float(np.mean(lam[i:j]))
        if weight > rtol * scale:
            poles.append(centre)
            dec += [centre] * (j - i - 1)
        else:
            dec += list(lam[i:j])
        i = j
    return np.array(poles), np.array(dec)


def dispersion_for(hom: HomFibreOperator, upper, seed=0) -> Dispersion:
    poles, dec = coupled_poles(hom, upper, seed=seed)
    return Dispersion(hom, poles, dec)


def soft_harmonic_data(hom: HomFibreOperator):
    """psi^H Lambda_soft psi, the soft lift Psi~ and (Mass Psi~) restricted to the interior."""
    soft = hom.soft
    n = soft.n_int
    K = soft.K.tocsr()
    x = spla.splu(K[:n, :n].tocsc()).solve(np.asarray(K[:n, n:] @ hom.psi, dtype=complex))
    lift = np.concatenate([-x, hom.psi])
    lam_q = -(np.vdot(hom.psi, K[n:, n:] @ hom.psi) - np.vdot(hom.psi, K[n:, :n] @ x))
    y = soft.Mass @ lift
    return float(lam_q.real), lift, y[:n], float(np.vdot(lift, y).real)


@dataclass(frozen=True)
class SeriesDispersion:
    """Eigen-series form of K: exact when all soft Dirichlet modes are kept."""

    hom: HomFibreOperator
    lam: np.ndarray
    c2: np.ndarray        # |<Psi~, phi_j>|^2
    lam_q: float          # psi^H Lambda_soft psi
    lift_sq: float        # |Psi~|^2_Mass
    total_c2: float       # sum over all modes, computed without eigenvectors

    def __call__(self, z):
        z = complex(z)
        d = np.min(np.abs(self.lam - z) / np.maximum(self.lam, 1.0)) if self.lam.size else 1.0
        if d < POLE_RTOL:
            raise PoleError(f"z = {z} within {POLE_RTOL} of a pole")
        q = self.lam_q + z * self.lift_sq + z * z * np.sum(self.c2 / (self.lam - z))
        return -(q + self.hom.stiff_term) / self.hom.norm ** 2

    def tail_bound(self, z) -> float:
        z = complex(z)
        tail = max(self.total_c2 - float(self.c2.sum()), 0.0)
        if tail == 0.0:
            return 0.0
        lJ = self.lam[-1]
        if lJ <= z.real:
            return math.inf
        return abs(z) ** 2 * tail / (abs(lJ - z) * self.hom.norm ** 2)


def series_dispersion(hom: HomFibreOperator, eigen) -> SeriesDispersion:
    lam_q, _, mlift, lift_sq = soft_harmonic_data(hom)
    c2 = np.abs(eigen.phi.conj().T @ mlift) ** 2
    soft = hom.soft
    Mii = soft.block(soft.Mass, "i", "i").tocsc()
    lu = spla.splu(Mii)
    sol = lu.solve(np.ascontiguousarray(mlift.real)) + 1j * lu.solve(np.ascontiguousarray(mlift.imag))
    total = float(np.vdot(mlift, sol).real)
    return SeriesDispersion(hom, eigen.lam, c2, lam_q, lift_sq, total)


def dispersion_K(hom: HomFibreOperator, z, eigen=None):
    """K(tau, z): eigen-series when ``eigen`` is given, otherwise the DN quadratic form."""
    if eigen is not None:
        return series_dispersion(hom, eigen)(z)
    return Dispersion(hom)(z)


# ---------------------------------------------------------------------------
# Zhikov function

@dataclass(frozen=True)
class ZhikovFunction:
    lam: np.ndarray
    weights: np.ndarray     # |integral of phi_j over Q_soft|^2
    stiff_area: float
    gamma_length: float
    tail_weight: float      # total weight not carried by the kept modes
    weight_rtol: float = 1e-12

    @property
    def J(self) -> int:
        return len(self.lam)

    @property
    def poles(self) -> np.ndarray:
        w = self.weights
        return self.lam[w > self.weight_rtol * max(w.max(), 1e-300)]

    def __call__(self, z):
        z = complex(z)
        p = self.poles
        if p.size and np.min(np.abs(p - z) / p) < POLE_RTOL:
            raise PoleError(f"z = {z} within {POLE_RTOL} of a pole")
        s = np.sum(self.weights / (self.lam - z))
        val = z / self.stiff_area * (1.0 + z * s)
        return val.real if z.imag == 0 else val

    def tail_bound(self, z) -> float:
        z = complex(z)
        if self.tail_weight <= 0:
            return 0.0
        lJ = self.lam[-1]
        if lJ <= z.real:
            return math.inf
        return abs(z) ** 2 * self.tail_weight / (self.stiff_area * abs(lJ - z))

    def a_hom(self, mu_star) -> np.ndarray:
        return -(self.gamma_length / self.stiff_area) * np.asarray(mu_star)

    def k_tilde(self, t, z, mu_star) -> complex:
        t = np.asarray(t, dtype=float)
        return complex(z) - (self.gamma_length / self.stiff_area) * float(t @ mu_star @ t) - self(z)


def zhikov_B(soft0: RegionForms, J=80, stiff_area=None, seed=0) -> ZhikovFunction:
    """Zhikov function from the soft Dirichlet modes at tau = 0 (Model I)."""
    from .assembly import dirichlet_eigenpairs
    J = min(J, soft0.n_int)
    eig = dirichlet_eigenpairs(soft0, J, seed=seed)
    n = soft0.n_int
    b = (soft0.Mass @ np.ones(len(soft0.dofs)))[:n]
    w = np.abs(eig.means) ** 2
    Mii = soft0.block(soft0.Mass, "i", "i").tocsc()
    total = float(b @ spla.splu(Mii).solve(b))
    if stiff_area is None:
        stiff_area = 1.0 - soft0.area
    tail = max(total - float(w.sum()), 0.0) if J < n else 0.0
    return ZhikovFunction(eig.lam, w, stiff_area, soft0.gamma_length, tail)


def wholespace_apply(F, t_grid, z, mu_star, zhikov: ZhikovFunction, min_dist=1e-8):
    """Multiply a source spectrum by (A_hom t.t - B(z))^-1 pointwise."""
    t = np.asarray(t_grid, dtype=float)
    A = zhikov.a_hom(mu_star)
    tt = np.einsum("...i,ij,...j->...", t, A, t)
    denom = tt - zhikov(z)
    if np.min(np.abs(denom)) < min_dist:
        raise MultiplierSingularError("multiplier denominator vanishes on the grid")
    return np.asarray(F) / denom


# ---------------------------------------------------------------------------
# bands

MERGE_RTOL = 1e-9


@dataclass(frozen=True)
class BandStructure:
    window: tuple
    taus: np.ndarray               # (n_tau, 2)
    roots: tuple                   # per tau, ascending
    bands: tuple                   # (index, lower, upper, tau_at_lower, tau_at_upper)

    @property
    def intervals(self):
        """Union of band intervals, merged, clipped to the window.

        Bands closer than root-finder precision are merged so that no
        spurious gap of width ~1e-13 is reported.
        """
        iv = sorted((b[1], b[2]) for b in self.bands)
        merged = []
        for lo, hi in iv:
            if merged and lo <= merged[-1][1] + MERGE_RTOL * (1 + abs(merged[-1][1])):
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return [tuple(x) for x in merged]

    @property
    def gaps(self):
        lo, hi = self.window
        out, cur = [], lo
        for a, b in self.intervals:
            if a > cur:
                out.append((cur, a))
            cur = max(cur, b)
        if cur < hi:
            out.append((cur, hi))
        return out


def bands_from_roots(taus, roots, window) -> BandStructure:
    taus = np.asarray(taus, dtype=float)
    depth = max((len(r) for r in roots), default=0)
    bands = []
    for k in range(depth):
        vals = [(r[k], i) for i, r in enumerate(roots) if len(r) > k]
        lo = min(vals)
        hi = max(vals)
        bands.append((k, float(lo[0]), float(hi[0]), tuple(taus[lo[1]]), tuple(taus[hi[1]])))
    return BandStructure(tuple(window), taus, tuple(np.asarray(r) for r in roots), tuple(bands))


def limiting_spectrum(homs, window, seed=0, method="roots") -> BandStructure:
    """Roots of K(tau, z) = z in the window for each homogenised fibre.

    ``method='pencil'`` takes the eigenvalues of the homogenised pencil
    instead of bracketing K(z) = z; the two agree to root-finder precision
    and the eigensolve is several times cheaper.
    """
    if method not in ("roots", "pencil"):
        raise ValueError(f"unknown method {method!r}")
    lo, hi = window
    pad = 1e-9 * (1 + abs(lo))
    roots, taus = [], []
    for hom in homs:
        if method == "pencil":
            r, _ = hom.eigenvalues(lo - 1.0, hi, seed=seed)
        else:
            disp = dispersion_for(hom, hi * 1.05 + 1.0, seed=seed)
            r = disp.roots(lo - 1e3 * pad, hi)
        roots.append(np.maximum(r[(r >= lo - pad) & (r <= hi)], lo))
        taus.append(hom.tau)
    return bands_from_roots(taus, roots, window)
