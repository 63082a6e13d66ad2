"""Eigenfunction correlators of finite boxes.

For a finite symmetric matrix the correlator is the spectral sum
Q(x, y) = sum_j |psi_j(x)| |psi_j(y)|.  ``correlator_integral`` evaluates the
same quantity through the singular integral of |G_E(x, y)|^(1 - eps).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import _kernels
from .green import green_column
from .stats import DecayFit, decay_fit

__all__ = [
    "EigenSystem",
    "eigensystem",
    "correlator_spectral",
    "correlator_integral",
    "CorrelatorField",
    "correlator_field",
]

EIG_ABSTOL = 1e-12
EIG_RELTOL = 1e-12
INVERSE_ITERATIONS = 3
# clusters wider than this are orthogonalized; 1e-3 * ||H|| keeps the
# computed vectors orthonormal to ~1e-13 even for close eigenvalues
CLUSTER_RTOL = 1e-3
INTEGRAL_MARGIN = 5.0
POLE_RADIUS_CAP = 0.1


@dataclass(frozen=True)
class EigenSystem:
    lo: int
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)  # columns

    @property
    def size(self):
        return self.eigenvalues.size

    def row(self, site):
        i = site - self.lo
        if not 0 <= i < self.size:
            raise ValueError(f"site {site} outside the window")
        return self.eigenvectors[i]


@functools.lru_cache(maxsize=64)
def _start_vector(n):
    v = np.random.default_rng(0x5EED + n).standard_normal(n)
    v.setflags(write=False)
    return v


def eigensystem(op):
    """Sturm bisection for the eigenvalues, inverse iteration for the vectors."""
    lam = _kernels.bisect_eigenvalues(op.diagonal, EIG_ABSTOL, EIG_RELTOL)
    cluster_tol = max(1e-8, CLUSTER_RTOL * op.norm_bound())
    vecs = _kernels.inverse_iteration(
        op.diagonal, lam, _start_vector(op.size).copy(), cluster_tol, INVERSE_ITERATIONS
    )
    # Rayleigh quotients of the computed vectors are accurate to O(residual^2)
    d = op.diagonal
    rq = np.einsum("ij,ij->j", vecs * d[:, None], vecs) + 2.0 * np.einsum(
        "ij,ij->j", vecs[:-1], vecs[1:]
    )
    order = np.argsort(rq, kind="stable")
    return EigenSystem(op.lo, rq[order], np.ascontiguousarray(vecs[:, order]))


def correlator_spectral(es, x, y):
    return float(np.sum(np.abs(es.row(x)) * np.abs(es.row(y))))


def _pole_radii(lam):
    gaps = np.diff(lam)
    r = np.full(lam.size, POLE_RADIUS_CAP)
    if lam.size > 1:
        r[:-1] = np.minimum(r[:-1], gaps / 2)
        r[1:] = np.minimum(r[1:], gaps / 2)
    return r


def correlator_integral(op, x, y, epsilon):
    """(eps/2) * integral of |G_E(x, y)|^(1 - eps) over the spectrum widened by 5 on each side.

    Within min(half gap, 0.1) of each eigenvalue the integrand is replaced by
    its pole part |psi(x) psi(y)| / |E - lambda|, integrated exactly; the
    rest is integrated by adaptive quadrature.
    """
    if not 0 < epsilon <= 0.1:
        raise ValueError(f"epsilon must lie in (0, 0.1], got {epsilon}")
    es = eigensystem(op)
    lam = es.eigenvalues
    c = np.abs(es.row(x) * es.row(y))
    r = _pole_radii(lam)
    local = math.fsum(
        float(cj) ** (1 - epsilon) * float(rj) ** epsilon for cj, rj in zip(c, r) if cj > 0
    )

    iy = op.index(y)

    def integrand(E):
        return abs(green_column(op, E, x)[iy]) ** (1 - epsilon)

    edges = [lam[0] - INTEGRAL_MARGIN]
    for lj, rj in zip(lam, r):
        edges.extend([lj - rj, lj + rj])
    edges.append(lam[-1] + INTEGRAL_MARGIN)
    pieces = []
    for a, b in zip(edges[0::2], edges[1::2]):
        if b - a > 1e-12:
            val, _ = integrate.quad(integrand, a, b, limit=200, epsabs=1e-10, epsrel=1e-8)
            pieces.append(val)
    return local + 0.5 * epsilon * math.fsum(pieces)


@dataclass
class CorrelatorField:
    x0: int
    sites: np.ndarray
    values: np.ndarray
    L: int
    fit: DecayFit | None = None

    def at(self, y):
        return float(self.values[y - self.sites[0]])


def correlator_field(op, x0=0, fit=True):
    """Q(x0, y) for every y of the box, with a decay fit on the right flank.

    The fit uses y - x0 in [L/4, 3L/4], L the half-width of the box.
    """
    es = eigensystem(op)
    values = _kernels.correlator_row(es.eigenvectors, op.index(x0))
    sites = np.arange(op.lo, op.hi + 1)
    L = (op.size - 1) // 2
    result = CorrelatorField(x0, sites, values, L)
    if fit:
        d = sites - x0
        sel = (d >= L / 4) & (d <= 3 * L / 4)
        if np.count_nonzero(sel) >= 4:
            result.fit = decay_fit(d[sel], values[sel])
    return result
