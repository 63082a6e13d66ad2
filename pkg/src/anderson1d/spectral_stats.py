"""Integrated density of states and the quantities built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cocycle import gamma_inf
from .correlator import EIG_ABSTOL, EIG_RELTOL
from .disorder import sample_realization
from .parallel import pmap
from .stats import linear_fit

__all__ = [
    "eigen_count",
    "IDSTable",
    "ids_estimate",
    "HolderFit",
    "holder_modulus",
    "ThoulessResult",
    "thouless",
    "LogMinusIntegral",
    "log_minus_integral",
    "DivergenceReport",
    "acs_divergence_check",
    "EXCLUSION_TOL",
]

EXCLUSION_TOL = 1e-12
EXCLUSION_WARN_FRACTION = 1e-3


def eigen_count(op, E):
    """Number of eigenvalues of ``op`` strictly below ``E`` (Sturm count)."""
    return int(_kernels.sturm_count(op.diagonal, float(E)))


@dataclass
class IDSTable:
    energies: np.ndarray
    kappa: np.ndarray
    n_sites: int
    replicas: int
    eigenvalues: np.ndarray = field(repr=False)  # pooled, ascending

    @property
    def total(self):
        return self.eigenvalues.size

    def kappa_at(self, E):
        """Empirical IDS at arbitrary energies from the pooled eigenvalues."""
        return np.searchsorted(self.eigenvalues, E, side="left") / self.total

    def mass_within(self, E, r):
        """Fraction of eigenvalues with |E - lambda| <= r."""
        ev = self.eigenvalues
        hi = np.searchsorted(ev, E + r, side="right")
        lo = np.searchsorted(ev, E - r, side="left")
        return (hi - lo) / self.total

    def to_csv_rows(self):
        return [(float(e), float(k)) for e, k in zip(self.energies, self.kappa)]


def _replica_ids(spec, E_grid, n_sites, k):
    r = sample_realization(spec, 0, n_sites - 1, k)
    counts = _kernels.sturm_counts(r.values, E_grid)
    eigs = _kernels.bisect_eigenvalues(r.values, EIG_ABSTOL, EIG_RELTOL)
    return counts, eigs


def ids_estimate(spec, E_grid, n_sites, replicas, threads=1):
    """kappa(E) = sum of Sturm counts / (replicas * n_sites) on ``E_grid``.

    Each replica is an independent Dirichlet box on sites 0..n_sites-1.
    The pooled eigenvalues are kept for evaluations off the grid.
    """
    if n_sites < 100:
        raise ValueError("n_sites must be at least 100")
    if replicas < 1:
        raise ValueError("need at least one replica")
    E_grid = np.sort(np.asarray(E_grid, dtype=float))
    parts = pmap(lambda k: _replica_ids(spec, E_grid, n_sites, k), range(replicas), threads)
    counts = np.sum([c for c, _ in parts], axis=0)
    eigs = np.sort(np.concatenate([e for _, e in parts]))
    kappa = counts / (replicas * n_sites)
    return IDSTable(E_grid, kappa, n_sites, replicas, eigs)


@dataclass
class HolderFit:
    alpha: float
    r_squared: float
    scales: np.ndarray
    increments: np.ndarray


def holder_modulus(table, scales):
    """Fit sup_E |kappa(E + s) - kappa(E)| ~ C s^alpha over the given scales.

    The sup runs over the energies of the table.
    """
    scales = np.asarray(scales, dtype=float)
    if scales.size < 2 or np.any(scales <= 0):
        raise ValueError("need at least two positive scales")
    E = table.energies
    inc = np.array([np.max(table.kappa_at(E + s) - table.kappa_at(E)) for s in scales])
    if np.any(inc <= 0):
        raise ValueError("a scale is below the sample resolution (zero increment)")
    slope, _, r2, _ = linear_fit(np.log(scales), np.log(inc))
    return HolderFit(slope, r2, scales, inc)


@dataclass(frozen=True)
class ThoulessResult:
    energy: float
    value: float
    excluded: int
    total: int
    warning: str | None = None

    def __float__(self):
        return self.value


def thouless(source, E):
    """Mean of log|E - lambda| over a pooled eigenvalue sample.

    ``source`` is an :class:`IDSTable` or an array of eigenvalues.  Terms with
    |E - lambda| < 1e-12 are dropped and counted.
    """
    eigs = source.eigenvalues if isinstance(source, IDSTable) else np.asarray(source, float)
    if eigs.size == 0:
        raise ValueError("empty eigenvalue sample")
    dist = np.abs(E - eigs)
    keep = dist >= EXCLUSION_TOL
    excluded = int(eigs.size - np.count_nonzero(keep))
    logs = np.log(dist[keep])
    value = math.fsum(logs) / max(1, logs.size)
    warning = None
    if excluded > EXCLUSION_WARN_FRACTION * eigs.size:
        warning = f"ill-conditioned energy: {excluded} of {eigs.size} terms excluded"
    return ThoulessResult(float(E), value, excluded, int(eigs.size), warning)


@dataclass(frozen=True)
class LogMinusIntegral:
    value: float
    tail_bound: float
    t_max: float
    points: int


def log_minus_integral(table, E, t_max=10.0, points_per_unit=50):
    """Integral over t in [0, t_max] of kappa{E' : |E - E'| <= e^-t}.

    Trapezoid rule in t, i.e. on a log-spaced grid of radii.  The integrand
    is nonincreasing; ``tail_bound`` is its value at t_max, which bounds the
    rest of the integral when the mass near E shrinks at least like e^-t.
    """
    if t_max < 5:
        raise ValueError("t_max must be at least 5")
    n = int(math.ceil(points_per_unit * t_max)) + 1
    t = np.linspace(0.0, t_max, n)
    f = table.mass_within(E, np.exp(-t))
    h = t[1] - t[0]
    value = h * (math.fsum(f) - 0.5 * (f[0] + f[-1]))
    return LogMinusIntegral(value, float(f[-1]), float(t_max), n)


@dataclass
class DivergenceReport:
    a_list: np.ndarray
    gamma_inf: np.ndarray
    gamma_inf_stderr: np.ndarray
    minimizers: np.ndarray
    positive_part: np.ndarray
    gamma_slope: float
    gamma_slope_stderr: float
    positive_slope: float
    K_hat: float


def _positive_part(table, E):
    d = np.abs(E - table.eigenvalues)
    d = d[d > 1.0]
    return math.fsum(np.log(d)) / table.total


def acs_divergence_check(
    spec,
    a_list,
    steps=100_000,
    replicas=8,
    grid_step=0.05,
    n_sites=500,
    ids_replicas=20,
    threads=1,
):
    """gamma_inf(a) and the log+ Thouless integral against log a.

    The log+ part is evaluated at the minimizing energy of gamma.  K_hat is
    the smallest K with gamma_inf(a) >= log a - K across the sweep.
    """
    a_arr = np.asarray(a_list, dtype=float)
    if a_arr.size < 3 or a_arr.max() < 4 * a_arr.min() or a_arr.min() <= 0:
        raise ValueError("need at least 3 positive couplings spanning a factor of 4")
    g, se, emin, pos = [], [], [], []
    for a in a_arr:
        sa = spec.with_coupling(a)
        est = gamma_inf(sa, grid_step, steps, replicas, threads)
        table = ids_estimate(sa, [est.energy], n_sites, ids_replicas, threads)
        g.append(est.gamma_hat)
        se.append(est.stderr)
        emin.append(est.energy)
        pos.append(_positive_part(table, est.energy))
    log_a = np.log(a_arr)
    slope, _, _, slope_se = linear_fit(log_a, g)
    pslope = linear_fit(log_a, pos)[0]
    return DivergenceReport(
        a_arr,
        np.array(g),
        np.array(se),
        np.array(emin),
        np.array(pos),
        slope,
        slope_se,
        pslope,
        float(np.max(log_a - np.array(g))),
    )
