"""Transfer-matrix cocycle and Lyapunov exponents."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .disorder import sample_realization, spectrum_hull
from .parallel import pmap
from .stats import mean_and_stderr

__all__ = [
    "LyapunovEstimate",
    "transfer_matrix",
    "transfer_step",
    "free_lyapunov",
    "lyapunov",
    "lyapunov_curve",
    "gamma_inf",
    "energy_grid",
]


@dataclass(frozen=True)
class LyapunovEstimate:
    energy: float
    gamma_hat: float
    stderr: float
    steps: int
    replicas: int


def transfer_matrix(E, v):
    """One-step transfer matrix of H psi = E psi at a site with potential v."""
    return np.array([[E - v, -1.0], [1.0, 0.0]])


def transfer_step(E, v, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (2,) or not np.any(u):
        raise ValueError("transfer_step needs a nonzero 2-vector")
    return np.array([(E - v) * u[0] - u[1], u[0]])


def free_lyapunov(E):
    """Exponent of the free Laplacian: 0 in [-2, 2], arccosh(|E|/2) outside."""
    E = abs(float(E))
    if E <= 2.0:
        return 0.0
    return math.log(E / 2.0 + math.sqrt(E * E / 4.0 - 1.0))


def burn_in(steps):
    return min(1000, steps // 10)


def _replica_chains(spec, energies, steps, replica):
    r = sample_realization(spec, 0, steps - 1, replica)
    return _kernels.lyapunov_chains(r.values, energies, burn_in(steps))


def lyapunov_curve(spec, energies, steps=100_000, replicas=8, threads=1):
    """Lyapunov estimates at several energies on shared disorder samples.

    Every energy sees the same realizations, so the curve is smooth in E and
    differences between energies carry little sampling noise.
    """
    if steps < 1000:
        raise ValueError(f"need at least 1000 steps, got {steps}")
    if replicas < 1:
        raise ValueError("need at least one replica")
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    per_replica = pmap(
        lambda k: _replica_chains(spec, energies, steps, k), range(replicas), threads
    )
    table = np.array(per_replica)  # (replicas, energies)
    out = []
    for j, E in enumerate(energies):
        mean, se = mean_and_stderr(table[:, j])
        out.append(LyapunovEstimate(float(E), mean, se, steps, replicas))
    return out


def lyapunov(spec, E, steps=100_000, replicas=8, threads=1):
    return lyapunov_curve(spec, [E], steps, replicas, threads)[0]


def energy_grid(spec, step):
    """Grid over the spectrum hull; both edges of every band are included."""
    if not step > 0:
        raise ValueError("grid step must be positive")
    pts = []
    for lo, hi in spectrum_hull(spec):
        n = max(1, int(math.ceil((hi - lo) / step - 1e-9)))
        pts.append(np.linspace(lo, hi, n + 1))
    return np.unique(np.concatenate(pts))


def gamma_inf(spec, grid_step=0.05, steps=100_000, replicas=8, threads=1):
    """Minimum of the Lyapunov exponent over the spectrum hull.

    A coarse scan at ``grid_step`` is followed by one pass at ``grid_step/10``
    around the coarse minimizer.  Returns the refined minimum estimate.
    """
    coarse = energy_grid(spec, grid_step)
    curve = lyapunov_curve(spec, coarse, steps, replicas, threads)
    best = min(curve, key=lambda est: est.gamma_hat)
    hull = spectrum_hull(spec)
    fine = np.linspace(best.energy - grid_step, best.energy + grid_step, 21)
    fine = np.array([E for E in fine if any(lo <= E <= hi for lo, hi in hull)])
    refined = lyapunov_curve(spec, fine, steps, replicas, threads)
    return min(refined + [best], key=lambda est: est.gamma_hat)
