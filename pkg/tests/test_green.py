import math

import numpy as np
import pytest
from scipy import linalg

from anderson1d.disorder import (
    Bernoulli,
    DisorderSpec,
    Realization,
    Uniform,
    build_hamiltonian,
    sample_realization,
)
from anderson1d.green import (
    SingularEnergyError,
    combes_thomas_check,
    free_decay_rate,
    free_green_closed_form,
    free_green_lower_prefactor,
    geometric_resolvent_check,
    green_column,
    green_entry,
    resonance_mask,
    resonance_scan,
    resonance_test,
)


def test_one_site():
    op = build_hamiltonian(Realization(0, 0, [1.7]))
    assert green_entry(op, 0.2, 0, 0) == pytest.approx(1 / 1.5, rel=1e-15)


def test_against_dense_solve():
    rng = np.random.default_rng(3)
    spec = DisorderSpec(Uniform(-1.0, 3.0), 2.0, 8)
    checked, k = 0, 0
    while checked < 100:
        k += 1
        n = int(rng.integers(1, 201))
        r = sample_realization(spec, -n, n, k)
        op = build_hamiltonian(r)
        H = op.dense()
        ev = np.linalg.eigvalsh(H)
        E = rng.uniform(ev.min() - 1, ev.max() + 1)
        if np.min(np.abs(ev - E)) < 0.01:
            continue
        x = int(rng.integers(-n, n + 1))
        ref = linalg.solve(H - E * np.eye(H.shape[0]), np.eye(H.shape[0])[op.index(x)])
        got = green_column(op, E, x)
        assert np.allclose(got, ref, rtol=1e-10, atol=1e-10 * np.max(np.abs(ref)))
        checked += 1


def test_symmetry(bernoulli8):
    r = sample_realization(bernoulli8, -40, 40, 2)
    op = build_hamiltonian(r)
    for x, y in [(0, 7), (-13, 22), (40, -40)]:
        a, b = green_entry(op, 0.37, x, y), green_entry(op, 0.37, y, x)
        assert abs(a - b) <= 1e-10 * abs(a)


def test_singular_energy_raises():
    op = build_hamiltonian(Realization(-2, 2, np.zeros(5)))
    with pytest.raises(SingularEnergyError) as info:
        green_entry(op, 1.0, 0, 1)
    assert info.value.pivot_index >= 0
    assert info.value.energy == 1.0


def test_free_closed_form_against_box(free_spec):
    r = sample_realization(free_spec, -200, 200)
    op = build_hamiltonian(r, shift=-2.0)
    for delta in (0.5, 1.0, 2.0, 3.0):
        g = green_column(op, delta, 0)
        for x in range(-20, 21):
            assert abs(abs(g[op.index(x)]) - free_green_closed_form(delta, x)) <= 1e-8
            assert g[op.index(x)] < 0


def test_free_closed_form_recurrence():
    for delta in (0.01, 0.3, 2.0):
        g = [-free_green_closed_form(delta, x) for x in range(0, 30)]
        for x in range(1, 29):
            assert abs(g[x + 1] + g[x - 1] - (2 + delta) * g[x]) <= 1e-12
        # unit source at the origin
        assert abs(2 * g[1] - (2 + delta) * g[0] - 1.0) <= 1e-12


def test_free_closed_form_shape():
    xi = free_decay_rate(2.0)
    assert xi == pytest.approx(1.3169578969248166, rel=1e-14)
    assert free_green_closed_form(2.0, 5) / free_green_closed_form(2.0, 4) == pytest.approx(
        math.exp(-xi), rel=1e-14
    )
    with pytest.raises(ValueError):
        free_green_closed_form(0.0, 1)


def test_lower_prefactor():
    assert free_green_lower_prefactor(2.0) == pytest.approx(0.22046, abs=5e-6)
    for delta in np.geomspace(1e-4, 10, 30):
        assert free_green_lower_prefactor(delta) < free_green_closed_form(delta, 0)


def test_decay_rate_lower_bound():
    for delta in np.linspace(0.001, 0.999, 200):
        assert free_decay_rate(delta) >= math.sqrt(delta) * (1 - delta / 8)


def test_geometric_resolvent_identity(uniform1):
    rng = np.random.default_rng(5)
    r = sample_realization(uniform1, -60, 60, 1)
    done = 0
    while done < 20:
        L = int(rng.integers(3, 60))
        N = int(rng.integers(1, L))
        y = int(rng.choice([-1, 1]) * rng.integers(N + 1, L + 1))
        E = float(rng.uniform(-2.5, 3.5))
        try:
            res = geometric_resolvent_check(r, E, N, L, y)
        except SingularEnergyError:
            continue
        assert res <= 1e-9
        done += 1


def test_geometric_resolvent_free_and_edge(free_spec):
    r = sample_realization(free_spec, -30, 30)
    assert geometric_resolvent_check(r, 0.31, 5, 30, 6) <= 1e-9
    assert geometric_resolvent_check(r, 2.9, 10, 25, -25) <= 1e-9


def test_resonance_free_outside_spectrum(free_spec):
    r = sample_realization(free_spec, -40, 40)
    g5 = math.acosh(2.5)
    assert g5 == pytest.approx(1.5668, abs=1e-4)
    assert not resonance_test(r, 0.5, 5.0, 20, 0, g5)
    assert not resonance_mask(r, g5, 5.0, 20, np.arange(-20, 21), g5).any()


def test_resonance_singular_box_is_resonant(free_spec):
    r = sample_realization(free_spec, -10, 10)
    # E = 0 is an eigenvalue of every odd free box
    assert resonance_test(r, 0.1, 0.0, 3, 0, 0.0)


def test_resonance_window_check(free_spec):
    r = sample_realization(free_spec, -10, 10)
    with pytest.raises(ValueError):
        resonance_test(r, 0.1, 0.5, 5, 7, 0.0)


def test_resonant_sets_shrink_with_tau(bernoulli8):
    r = sample_realization(bernoulli8, -60, 60, 0)
    sites = np.arange(-50, 51)
    for E, g in [(0.4, 0.9), (7.3, 1.1)]:
        prev = resonance_mask(r, 0.0, E, 8, sites, g)
        for tau in (0.2, 0.5, 1.0):
            cur = resonance_mask(r, tau, E, 8, sites, g)
            assert not np.any(cur & ~prev)
            prev = cur


def test_resonance_scan_free_is_replica_independent(free_spec):
    grid = np.array([-2.5, 2.7, 3.0])
    gam = np.array([math.acosh(1.25), math.acosh(1.35), math.acosh(1.5)])
    rep = resonance_scan(free_spec, 0.1, 4, grid, replicas=5, gammas=gam)
    assert rep.flagged in (0, 5)
    assert rep.scan_window == (-16, 16)


def test_resonance_report_consistency(bernoulli8):
    grid = np.linspace(-2, 2, 9)
    rep = resonance_scan(bernoulli8, 0.3, 4, grid, replicas=6, gammas=np.full(9, 0.6))
    diam = 0
    for sites in rep.resonant_sites.values():
        assert sites.min() >= -16 and sites.max() <= 16
        diam = max(diam, int(sites.max() - sites.min()))
    assert diam == rep.max_pair_diameter
    assert rep.probability == rep.flagged / rep.replicas


def test_combes_thomas_free(free_spec):
    fit = combes_thomas_check(free_spec, delta_grid=(0.01, 0.03, 0.1), replicas=2, L=300)
    assert fit.all_finite and fit.is_exponential
    for delta, c, _ in fit.per_delta:
        assert 0.9 <= c <= 1.1
        assert c == pytest.approx(free_decay_rate(delta) / math.sqrt(delta), rel=1e-6)


def test_combes_thomas_random(bernoulli8):
    fit = combes_thomas_check(bernoulli8, replicas=4, L=150)
    assert fit.all_finite and fit.min_r_squared >= 0.95
    assert fit.decay_constant > 0
    doubled = combes_thomas_check(bernoulli8, R_shift=2 * bernoulli8.coupled_radius,
                                  replicas=4, L=150)
    assert doubled.all_finite


def test_no_singular_errors_when_shifted(bernoulli8):
    R = bernoulli8.coupled_radius
    for k in range(1000):
        r = sample_realization(bernoulli8, -20, 20, k)
        op = build_hamiltonian(r, shift=-(2.0 + 2 * R))
        g = green_column(op, 1e-3, 0)
        assert g[op.index(0)] < 0
