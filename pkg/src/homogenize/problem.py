"""Per-cell cache of forms, Steklov data and the effective tensor."""

from __future__ import annotations

import numpy as np

from .assembly import assemble_fibre, assemble_region, check_tau
from .effective import assemble_hom_fibre, zhikov_B
from .mesh import CellGeometry, CellMesh, build_cell
from .steklov import effective_tensor, steklov_solve


class CellProblem:
    """Lazily computed data for one mesh; keys are tau tuples."""

    def __init__(self, mesh: CellMesh, stencil_step: float = 0.1):
        self.mesh = mesh
        self.model = mesh.geometry.model
        self.stencil_step = stencil_step
        self._forms = {}
        self._steklov = {}
        self._tensor = None
        self._zhikov = {}

    @classmethod
    def build(cls, model="I", h=0.02, center=(0.5, 0.5), radius=0.25, **kw):
        return cls(build_cell(CellGeometry(model, tuple(center), radius), h), **kw)

    @staticmethod
    def key(tau):
        return tuple(float(x) for x in check_tau(tau))

    def forms(self, tau):
        k = self.key(tau)
        if k not in self._forms:
            self._forms[k] = (assemble_region(self.mesh, "soft", k),
                              assemble_region(self.mesh, "stiff", k))
        return self._forms[k]

    def steklov(self, tau):
        k = self.key(tau)
        if k not in self._steklov:
            self._steklov[k] = steklov_solve(self.forms(k)[1])
        return self._steklov[k]

    @property
    def tensor(self):
        if self._tensor is None:
            self._tensor = effective_tensor(self.mesh, self.model, self.stencil_step,
                                            mu_fn=lambda t: self.steklov(t).mu)
        return self._tensor

    def zhikov(self, J=80):
        if J not in self._zhikov:
            self._zhikov[J] = zhikov_B(self.forms((0.0, 0.0))[0], J)
        return self._zhikov[J]

    def fibre(self, tau, eps):
        soft, stiff = self.forms(tau)
        return assemble_fibre(self.mesh, tau, eps, soft, stiff)

    def hom(self, tau, eps, variant=None):
        """Homogenised fibre; ``variant`` is 'asymptotic' (default) or 'exact'."""
        soft, _ = self.forms(tau)
        if self.model == "I" and variant != "exact":
            return assemble_hom_fibre(soft, self.tensor.mu_star, eps, "I")
        return assemble_hom_fibre(soft, self.steklov(tau), eps, self.model, variant=variant)

    def refined(self) -> "CellProblem":
        from .mesh import refine
        return CellProblem(refine(self.mesh), self.stencil_step)


def tau_grid(n: int) -> np.ndarray:
    """Cell-centred n x n grid over [-pi, pi)^2 (contains 0 for odd n)."""
    k = -np.pi + (np.arange(n) + 0.5) * 2 * np.pi / n
    a, b = np.meshgrid(k, k, indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=1)


def conjugate_classes(taus, atol=1e-12) -> np.ndarray:
    """Index of the representative of each tau under tau -> -tau.

    Fibres at tau and -tau are complex conjugates of each other, so their
    spectra coincide; sweeps compute one member of each pair.
    """
    taus = np.asarray(taus, dtype=float)
    rep = np.arange(len(taus))
    for i, t in enumerate(taus):
        hit = np.nonzero(np.all(np.abs(taus[:i] + t) <= atol, axis=1))[0]
        if hit.size:
            rep[i] = rep[hit[0]]
    return rep


def over_grid(fn, taus, symmetric=True):
    """[fn(tau) for tau in taus], evaluating one member per conjugate pair."""
    rep = conjugate_classes(taus) if symmetric else np.arange(len(taus))
    cache = {}
    for i in np.unique(rep):
        cache[int(i)] = fn(np.asarray(taus[i]))
    return [cache[int(r)] for r in rep]
