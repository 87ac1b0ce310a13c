"""Exact discrete identities, each returned as a relative residual with its tolerance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import FibreOperator
from .boundary import (KreinResolvent, RegionSolver, direct_solve, m_total_monolithic,
                       relative_mass_error)

TOLERANCES = {
    "krein": 1e-9,
    "additivity": 1e-12,
    "difference": 1e-9,
    "herglotz": 1e-10,
    "scaling": 1e-12,
}


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tol: float
    tau: tuple
    eps: float
    z: complex

    @property
    def passed(self) -> bool:
        if self.name == "herglotz":
            return self.value >= -self.tol
        return self.value <= self.tol


def _rel(A, B):
    return float(np.linalg.norm(A - B) / max(np.linalg.norm(B), 1e-300))


class SolverCache:
    """Region solvers keyed by (region, z, weight) so each factorization is done once."""

    def __init__(self, fibre: FibreOperator):
        self.fibre = fibre
        self._store = {}

    def __call__(self, region, z, weighted=True):
        forms = self.fibre.soft if region == "soft" else self.fibre.stiff
        w = self.fibre.eps ** -2 if (region == "stiff" and weighted) else 1.0
        key = (region, complex(z), w)
        if key not in self._store:
            self._store[key] = RegionSolver(forms, z, w)
        return self._store[key]

    def m_total(self, z):
        return self("soft", z).dtn() + self("stiff", z).dtn()

    def gram(self, region, z, zeta):
        a = self(region, np.conj(complex(z))).lift_matrix()
        b = self(region, zeta).lift_matrix()
        forms = self.fibre.soft if region == "soft" else self.fibre.stiff
        return a.conj().T @ (forms.Mass @ b)


def krein_residual(fibre: FibreOperator, z, f) -> float:
    u = KreinResolvent(fibre, z)(f)
    return relative_mass_error(fibre.Mass, u, direct_solve(fibre, z, f))


def additivity_residual(fibre: FibreOperator, z, cache=None) -> float:
    cache = cache or SolverCache(fibre)
    return _rel(cache.m_total(z), m_total_monolithic(fibre, z))


def difference_residual(fibre: FibreOperator, z, zeta, cache=None) -> float:
    """M(z) - M(zeta) = (z - zeta) S*_{conj z} S_zeta, summed over both regions."""
    cache = cache or SolverCache(fibre)
    Mz = cache.m_total(z)
    lhs = Mz - cache.m_total(zeta)
    rhs = (complex(z) - complex(zeta)) * (cache.gram("soft", z, zeta)
                                          + cache.gram("stiff", z, zeta))
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(Mz))


def herglotz_margin(fibre: FibreOperator, z, cache=None) -> float:
    """lambda_min(Im M(z)) / |M(z)|; non-negative for Im z > 0."""
    cache = cache or SolverCache(fibre)
    M = cache.m_total(z)
    im = (M - M.conj().T) / 2j
    return float(np.linalg.eigvalsh(im).min() / np.linalg.norm(M, 2))


def scaling_residual(fibre: FibreOperator, z, cache=None) -> float:
    cache = cache or SolverCache(fibre)
    weighted = cache("stiff", z).dtn()
    scaled = fibre.eps ** -2 * cache("stiff", fibre.eps ** 2 * complex(z), weighted=False).dtn()
    return _rel(weighted, scaled)


def identity_suite(fibre: FibreOperator, zs=(1 + 1j, -1 + 0.5j), herglotz_z=1 + 2j,
                   difference_pair=(1 + 1j, 2 - 1j), seed=0) -> list:
    rng = np.random.default_rng(seed)
    n = fibre.mesh.n_dofs
    f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    tau = tuple(float(x) for x in fibre.tau)
    cache = SolverCache(fibre)
    out = []
    for z in zs:
        z = complex(z)
        out.append(Check("krein", krein_residual(fibre, z, f), TOLERANCES["krein"], tau,
                         fibre.eps, z))
        out.append(Check("additivity", additivity_residual(fibre, z, cache),
                         TOLERANCES["additivity"], tau, fibre.eps, z))
        out.append(Check("scaling", scaling_residual(fibre, z, cache), TOLERANCES["scaling"], tau,
                         fibre.eps, z))
    z, zeta = difference_pair
    out.append(Check("difference", difference_residual(fibre, z, zeta, cache),
                     TOLERANCES["difference"], tau, fibre.eps, complex(z)))
    out.append(Check("herglotz", herglotz_margin(fibre, herglotz_z, cache), TOLERANCES["herglotz"],
                     tau, fibre.eps, complex(herglotz_z)))
    return out
