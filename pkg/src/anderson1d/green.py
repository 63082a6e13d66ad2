"""Finite-volume Green functions, resonance tests and decay checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cocycle import lyapunov_curve
from .disorder import build_hamiltonian, sample_realization
from .parallel import pmap
from .stats import linear_fit

__all__ = [
    "SingularEnergyError",
    "PIVOT_RTOL",
    "green_column",
    "green_entry",
    "free_green_closed_form",
    "free_green_lower_prefactor",
    "free_decay_rate",
    "resonance_test",
    "resonance_mask",
    "ResonanceReport",
    "resonance_scan",
    "gamma_for_scan",
    "ResonanceTrend",
    "resonance_trend",
    "geometric_resolvent_check",
    "CombesThomasFit",
    "combes_thomas_check",
]

PIVOT_RTOL = 1e-12


class SingularEnergyError(ArithmeticError):
    """The spectral parameter is numerically an eigenvalue of the box."""

    def __init__(self, energy, pivot_index, pivot):
        super().__init__(
            f"energy {energy!r} is numerically an eigenvalue "
            f"(pivot {pivot:.3g} at index {pivot_index})"
        )
        self.energy = energy
        self.pivot_index = pivot_index
        self.pivot = pivot


def green_column(op, E, x):
    """The column (H - E)^{-1} e_x over the whole window of ``op``."""
    shifted = op.diagonal - E
    scale = float(np.max(np.abs(shifted))) + 2.0
    g, pmin, imin = _kernels.green_column(shifted, op.index(x))
    if not pmin > PIVOT_RTOL * scale:
        raise SingularEnergyError(E, int(imin), float(pmin))
    return g


def green_entry(op, E, x, y):
    """(H - E)^{-1}(x, y) for the Dirichlet box ``op``."""
    return float(green_column(op, E, x)[op.index(y)])


def free_decay_rate(delta):
    """xi = arccosh(1 + delta/2), the decay rate of the free resolvent."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return math.acosh(1.0 + delta / 2.0)


def free_green_closed_form(delta, x):
    """|(T - 2 - delta)^{-1}(0, x)| on the whole line, T the free Laplacian.

    The magnitude is alpha * exp(-xi |x|) with alpha = 1 / (2 sinh xi); the
    Green function itself is negative.
    """
    xi = free_decay_rate(delta)
    alpha = 1.0 / (2.0 + delta - 2.0 * math.exp(-xi))
    return alpha * math.exp(-xi * abs(x))


def free_green_lower_prefactor(delta):
    """The prefactor 1 / (2 + 2 e^{-xi} + delta).

    It undercuts the exact prefactor, so ``prefactor * exp(-xi |x|)`` is a
    lower bound on :func:`free_green_closed_form`.
    """
    xi = free_decay_rate(delta)
    return 1.0 / (2.0 + 2.0 * math.exp(-xi) + delta)


# -- resonances -------------------------------------------------------------


def _log_threshold(gamma_E, tau, N):
    return -(gamma_E - tau) * N


def resonance_test(r, tau, E, N, x, gamma_E):
    """True when site ``x`` is (tau, E, N)-resonant for the realization ``r``.

    ``gamma_E`` is the Lyapunov exponent at ``E``.  A box in which ``E`` is
    numerically an eigenvalue counts as resonant.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if x - N < r.lo or x + N > r.hi:
        raise ValueError(f"box [{x - N}, {x + N}] not inside window [{r.lo}, {r.hi}]")
    centers = np.array([x - r.lo], dtype=np.int64)
    mask = _kernels.resonant_mask(
        r.values, float(E), int(N), centers, _log_threshold(gamma_E, tau, N), PIVOT_RTOL
    )
    return bool(mask[0])


def resonance_mask(r, tau, E, N, sites, gamma_E):
    sites = np.asarray(sites, dtype=np.int64)
    if sites.min() - N < r.lo or sites.max() + N > r.hi:
        raise ValueError("resonance boxes leave the realization window")
    return _kernels.resonant_mask(
        r.values, float(E), int(N), sites - r.lo, _log_threshold(gamma_E, tau, N), PIVOT_RTOL
    )


@dataclass
class ResonanceReport:
    tau: float
    N: int
    E_grid: np.ndarray
    scan_window: tuple
    replicas: int
    flagged: int
    probability: float
    flagged_replica: int | None = None
    resonant_sites: dict = field(default_factory=dict)
    max_pair_diameter: int = 0
    flagged_replicas: list = field(default_factory=list)


def _replica_resonances(spec, tau, N, E_grid, gammas, window, replica):
    lo, hi = window
    r = sample_realization(spec, lo - N, hi + N, replica)
    sites = np.arange(lo, hi + 1)
    per_E = {}
    diam = 0
    for E, g in zip(E_grid, gammas):
        mask = resonance_mask(r, tau, E, N, sites, g)
        res = sites[mask]
        if res.size:
            per_E[float(E)] = res
            diam = max(diam, int(res[-1] - res[0]))
    return diam, per_E


def gamma_for_scan(spec, E_grid, steps=100_000, replicas=4, threads=1):
    """Lyapunov exponents on ``E_grid`` from an independent seed stream."""
    offset_spec = spec.with_seed((spec.seed + 0x9E3779B97F4A7C15) % 2**64)
    return np.array(
        [e.gamma_hat for e in lyapunov_curve(offset_spec, E_grid, steps, replicas, threads)]
    )


def resonance_scan(
    spec,
    tau,
    N,
    E_grid,
    scan_window=None,
    replicas=100,
    gammas=None,
    threads=1,
):
    """Frequency of two resonant sites further apart than 2N at a common energy.

    For each replica the event is: some E in ``E_grid`` has resonant sites in
    ``scan_window`` (default [-N^2, N^2]) whose diameter exceeds 2N.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    E_grid = np.asarray(E_grid, dtype=float)
    window = scan_window if scan_window is not None else (-N * N, N * N)
    if gammas is None:
        gammas = gamma_for_scan(spec, E_grid, threads=threads)
    results = pmap(
        lambda k: _replica_resonances(spec, tau, N, E_grid, gammas, window, k),
        range(replicas),
        threads,
    )
    flagged = [k for k, (diam, _) in enumerate(results) if diam > 2 * N]
    report = ResonanceReport(
        tau=tau,
        N=N,
        E_grid=E_grid,
        scan_window=tuple(window),
        replicas=replicas,
        flagged=len(flagged),
        probability=len(flagged) / replicas,
        flagged_replicas=flagged,
    )
    pick = flagged[0] if flagged else 0
    report.flagged_replica = flagged[0] if flagged else None
    report.max_pair_diameter, report.resonant_sites = results[pick]
    return report


# -- identities and bounds --------------------------------------------------


def geometric_resolvent_check(r, E, N, L, y):
    """Relative residual of the one-step geometric resolvent identity.

    With hopping +1 the identity reads
    G_L(0, y) = -G_N(0, N) G_L(N+1, y) - G_N(0, -N) G_L(-N-1, y)
    for y outside [-N, N]; the residual is scaled by the largest term.
    """
    if not 0 < N < L or not N < abs(y) <= L:
        raise ValueError("need 0 < N < L and N < |y| <= L")
    box_L = build_hamiltonian(r.sub(-L, L))
    box_N = build_hamiltonian(r.sub(-N, N))
    gL_y = green_column(box_L, E, y)  # column y of the symmetric inverse
    gN_0 = green_column(box_N, E, 0)
    t0 = gL_y[box_L.index(0)]
    t1 = gN_0[box_N.index(N)] * gL_y[box_L.index(N + 1)]
    t2 = gN_0[box_N.index(-N)] * gL_y[box_L.index(-N - 1)]
    scale = max(abs(t0), abs(t1), abs(t2))
    return abs(t0 + t1 + t2) / scale if scale > 0 else 0.0


@dataclass
class CombesThomasFit:
    decay_constant: float  # c1: |G| <~ (C1/delta) exp(-c1 sqrt(delta) |x|)
    prefactor: float  # C1
    per_delta: list  # (delta, slope/sqrt(delta), r_squared)
    min_r_squared: float
    is_exponential: bool
    all_finite: bool


def _ct_replica(spec, R_shift, deltas, xs, L, replica):
    r = sample_realization(spec, -L, L, replica)
    op = build_hamiltonian(r, shift=-(2.0 + R_shift))
    out = np.empty((len(deltas), len(xs)))
    for i, delta in enumerate(deltas):
        g = green_column(op, delta, 0)
        out[i] = np.abs(g[[op.index(x) for x in xs]])
    return out


def combes_thomas_check(spec, R_shift=None, delta_grid=(0.01, 0.03, 0.1), x_grid=None,
                        replicas=10, L=200, threads=1):
    """Exponential decay of |G_delta[H - (2 + R)](0, x)| in sqrt(delta) |x|.

    ``R_shift`` defaults to the coupled support radius, which puts the whole
    spectrum of the shifted operator at or below 0.
    """
    R = spec.coupled_radius if R_shift is None else float(R_shift)
    xs = np.asarray(x_grid if x_grid is not None else np.arange(5, 61, 5), dtype=int)
    deltas = np.asarray(delta_grid, dtype=float)
    tables = pmap(lambda k: _ct_replica(spec, R, deltas, xs, L, k), range(replicas), threads)
    G = np.array(tables)  # (replicas, deltas, xs)
    finite = bool(np.all(np.isfinite(G)) and np.all(G > 0))
    per_delta = []
    for i, delta in enumerate(deltas):
        logs = np.log(G[:, i, :]).mean(axis=0)
        slope, _, r2, _ = linear_fit(xs, logs)
        per_delta.append((float(delta), -slope / math.sqrt(delta), r2))
    c1 = min(c for _, c, _ in per_delta)
    C1 = float(np.max(deltas[None, :, None] * G
                      * np.exp(c1 * np.sqrt(deltas)[None, :, None] * np.abs(xs)[None, None, :])))
    min_r2 = min(r2 for _, _, r2 in per_delta)
    return CombesThomasFit(c1, C1, per_delta, min_r2, min_r2 >= 0.95, finite)


@dataclass
class ResonanceTrend:
    tau: float
    N: np.ndarray
    probability: np.ndarray
    flagged: np.ndarray
    replicas: int
    log_slope: float  # d log p / dN, from (flagged + 1/2) / (replicas + 1)
    reports: list = field(default_factory=list, repr=False)


def resonance_trend(spec, tau, N_list, E_grid, replicas=100, gammas=None, threads=1):
    """Far-pair resonance frequency as a function of N.

    The log-slope uses (flagged + 1/2) / (replicas + 1) so that an empty
    count does not send the fit to minus infinity.
    """
    E_grid = np.asarray(E_grid, dtype=float)
    if gammas is None:
        gammas = gamma_for_scan(spec, E_grid, threads=threads)
    reports = [resonance_scan(spec, tau, N, E_grid, replicas=replicas, gammas=gammas,
                              threads=threads) for N in N_list]
    N = np.asarray(N_list, dtype=int)
    flagged = np.array([r.flagged for r in reports])
    smoothed = (flagged + 0.5) / (replicas + 1.0)
    slope = linear_fit(N, np.log(smoothed))[0] if N.size >= 2 else float("nan")
    return ResonanceTrend(tau, N, flagged / replicas, flagged, replicas, slope, reports)
