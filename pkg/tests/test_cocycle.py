import math

import numpy as np
import pytest

from anderson1d.cocycle import (
    energy_grid,
    free_lyapunov,
    gamma_inf,
    lyapunov,
    lyapunov_curve,
    transfer_matrix,
    transfer_step,
)
from anderson1d.disorder import Bernoulli, DisorderSpec, Uniform


def test_transfer_step_examples():
    assert list(transfer_step(0.0, 0.0, (1.0, 0.0))) == [0.0, 1.0]
    assert list(transfer_step(5.0, 1.0, (1.0, 1.0))) == [3.0, 1.0]
    with pytest.raises(ValueError):
        transfer_step(1.0, 0.0, (0.0, 0.0))


def test_transfer_determinant_is_one():
    rng = np.random.default_rng(1)
    for E, v in rng.uniform(-50, 50, size=(10_000, 2)):
        assert abs(np.linalg.det(transfer_matrix(E, v)) - 1.0) <= 1e-14 * max(1.0, abs(E - v))


def test_free_lyapunov_values():
    assert free_lyapunov(1.0) == 0.0
    assert math.isclose(free_lyapunov(3.0), 0.9624236501192069, rel_tol=1e-14)
    assert free_lyapunov(-3.0) == free_lyapunov(3.0)
    assert math.isclose(free_lyapunov(3.0), math.acosh(1.5), rel_tol=1e-14)


def test_free_lyapunov_matches_estimator(free_spec):
    E = np.linspace(-4, 4, 17)
    for est in lyapunov_curve(free_spec, E, steps=20_000, replicas=2):
        tol = max(3 * est.stderr, 5e-3) if est.stderr == est.stderr else 5e-3
        assert abs(est.gamma_hat - free_lyapunov(est.energy)) <= tol
    assert abs(lyapunov(free_spec, 0.0, 10_000, 2).gamma_hat) <= 2e-2


def test_estimator_is_reproducible_and_thread_independent(bernoulli8):
    a = lyapunov_curve(bernoulli8, [0.3, 7.0], 5000, 4, threads=1)
    b = lyapunov_curve(bernoulli8, [0.3, 7.0], 5000, 4, threads=3)
    assert a == b


def test_too_few_steps():
    with pytest.raises(ValueError):
        lyapunov(DisorderSpec(Bernoulli(0.5), 1.0), 0.0, steps=999)


def test_energy_grid_includes_band_edges():
    grid = energy_grid(DisorderSpec(Bernoulli(0.5), 8.0), 0.05)
    for edge in (-2.0, 2.0, 6.0, 10.0):
        assert np.any(np.isclose(grid, edge, atol=1e-12))
    assert not np.any((grid > 2.0 + 1e-12) & (grid < 6.0 - 1e-12))


def test_gamma_inf_free_is_zero(free_spec):
    est = gamma_inf(free_spec, 0.1, 5000, 2)
    assert abs(est.gamma_hat) < 1e-2


def test_gamma_inf_is_a_minimum(bernoulli8):
    est = gamma_inf(bernoulli8, 0.25, 5000, 2)
    grid = energy_grid(bernoulli8, 0.25)
    curve = lyapunov_curve(bernoulli8, grid, 5000, 2)
    assert est.gamma_hat <= min(c.gamma_hat for c in curve)


def test_evenness_for_symmetric_potential():
    spec = DisorderSpec(Uniform(-1.0, 1.0), 1.0, 2)
    for E in (0.5, 1.3, 2.4):
        p, m = lyapunov_curve(spec, [E, -E], 50_000, 8)
        assert abs(p.gamma_hat - m.gamma_hat) <= 3 * math.hypot(p.stderr, m.stderr) + 1e-3


def test_gamma_inf_grows_with_coupling():
    spec = DisorderSpec(Bernoulli(0.5), 1.0, 3)
    vals = [gamma_inf(spec.with_coupling(a), 0.05, 20_000, 4) for a in (4, 8, 16, 32)]
    for lo, hi in zip(vals, vals[1:]):
        assert hi.gamma_hat - lo.gamma_hat > math.hypot(lo.stderr, hi.stderr)
