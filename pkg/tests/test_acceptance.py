"""Acceptance criteria, each at its stated tolerance.

Every test prints one line ``CRITERION <n>: PASS|FAIL ...`` before asserting,
so the verdicts are visible in the test log whatever the outcome.
"""

import math
import os
import time

import numpy as np
import pytest

from anderson1d import _kernels, cli
from anderson1d.annealed import annealed_correlator, rare_event_bound, separation_experiment
from anderson1d.cocycle import energy_grid, free_lyapunov, gamma_inf, lyapunov, lyapunov_curve
from anderson1d.config import COMMANDS, ExperimentConfig
from anderson1d.correlator import correlator_integral, correlator_spectral, eigensystem
from anderson1d.disorder import (
    Bernoulli,
    Discrete,
    DisorderSpec,
    Uniform,
    build_hamiltonian,
    sample_realization,
)
from anderson1d.green import (
    SingularEnergyError,
    free_green_closed_form,
    gamma_for_scan,
    geometric_resolvent_check,
    green_entry,
    resonance_trend,
)
from anderson1d.spectral_stats import ids_estimate, log_minus_integral, thouless
from anderson1d.stats import linear_fit

pytestmark = pytest.mark.acceptance

FREE = DisorderSpec(Discrete((0.0,), (1.0,)), 0.0, 0)
BERNOULLI = DisorderSpec(Bernoulli(0.5), 1.0, 2024)
UNIFORM = DisorderSpec(Uniform(0.0, 1.0), 1.0, 2024)
A_SWEEP = (8.0, 16.0, 32.0, 64.0)
X_SWEEP = tuple(range(8, 25))


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail, started):
        line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} ({time.perf_counter() - started:.1f} s) {detail}"
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def test_criterion_1_free_oracles(verdict):
    t0 = time.perf_counter()
    errs = []
    for E in (2.5, -2.5, 3.0, -3.0, 4.0):
        est = lyapunov(FREE, E, steps=1_000_000, replicas=1)
        errs.append(abs(est.gamma_hat - free_lyapunov(E)))
    t_lyap = time.perf_counter() - t0
    op = build_hamiltonian(sample_realization(FREE, -200, 200), shift=-2.0)
    g_err = 0.0
    for delta in (0.1, 0.5, 2.0):
        for x in range(-20, 21):
            g_err = max(g_err, abs(abs(green_entry(op, delta, 0, x))
                                   - free_green_closed_form(delta, x)))
    ok = max(errs) <= 5e-3 and g_err <= 1e-8
    verdict(1, ok, f"max |lyapunov - free| = {max(errs):.2e} (<= 5e-3, {t_lyap:.2f} s); "
                   f"max |G - closed form| = {g_err:.2e} (<= 1e-8)", t0)
    assert ok


def test_criterion_2_exact_identities(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    det_err = 0.0
    for E, v in rng.uniform(-10, 10, size=(10_000, 2)):
        m = np.array([[E - v, -1.0], [1.0, 0.0]])
        det_err = max(det_err, abs(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0] - 1.0))
    spec = BERNOULLI.with_coupling(3.0)
    r = sample_realization(spec, -80, 80, 1)
    res, done = 0.0, 0
    while done < 20:
        L = int(rng.integers(3, 80))
        N = int(rng.integers(1, L))
        y = int(rng.choice([-1, 1]) * rng.integers(N + 1, L + 1))
        try:
            res = max(res, geometric_resolvent_check(r, float(rng.uniform(-2.5, 5.5)), N, L, y))
        except SingularEnergyError:
            continue
        done += 1
    orth = comp = qdiag = 0.0
    for k in range(20):
        op = build_hamiltonian(sample_realization(spec.with_coupling([0.5, 8.0, 64.0][k % 3]),
                                                  -40, 40, k))
        es = eigensystem(op)
        V = es.eigenvectors
        orth = max(orth, np.abs(V.T @ V - np.eye(op.size)).max())
        comp = max(comp, np.abs((V ** 2).sum(axis=1) - 1).max())
        qdiag = max(qdiag, max(abs(correlator_spectral(es, x, x) - 1) for x in range(-40, 41)))
    ok = det_err <= 1e-14 and res <= 1e-9 and orth <= 1e-10 and comp <= 1e-10 and qdiag <= 1e-10
    verdict(2, ok, f"det err {det_err:.1e}; resolvent residual {res:.1e}; "
                   f"orthonormality {orth:.1e}; completeness {comp:.1e}; |Q(x,x)-1| {qdiag:.1e}", t0)
    assert ok


def test_criterion_3_correlator_representation(verdict):
    t0 = time.perf_counter()
    spec = BERNOULLI.with_coupling(2.0)
    worst = 0.0
    for k in range(20):
        op = build_hamiltonian(sample_realization(spec, -10, 10, k))
        es = eigensystem(op)
        for y in (0, 3, 6):
            ref = correlator_spectral(es, 0, y)
            val = correlator_integral(op, 0, y, 1e-3)
            worst = max(worst, abs(val - ref) / ref)
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.05
    verdict(3, ok, f"max relative deviation {worst:.2e} (<= 5%), {elapsed:.1f} s (budget 10 s)", t0)
    assert ok


def test_criterion_4_thouless(verdict):
    t0 = time.perf_counter()
    spec = BERNOULLI.with_coupling(2.0)
    energies = [-1.5, -0.5, 0.7, 1.9, 3.1]
    table = ids_estimate(spec, energies, 2000, 200)
    ly = lyapunov_curve(spec, energies, 1_000_000, 8)
    diffs = [abs(thouless(table, E).value - est.gamma_hat) for E, est in zip(energies, ly)]
    ok = max(diffs) <= 0.05
    verdict(4, ok, "|thouless - lyapunov| = " + ", ".join(f"{d:.4f}" for d in diffs)
            + " (<= 0.05)", t0)
    assert ok


def _gamma_slope(spec):
    g = [gamma_inf(spec.with_coupling(a), 0.05, 100_000, 8) for a in A_SWEEP]
    slope, _, _, se = linear_fit(np.log(A_SWEEP), [e.gamma_hat for e in g])
    return slope, se, g


def test_criterion_5_gamma_inf_log_divergence(verdict):
    t0 = time.perf_counter()
    su, _, gu = _gamma_slope(UNIFORM)
    sb, _, gb = _gamma_slope(BERNOULLI)
    ok = 0.8 <= su <= 1.2 and 0.8 <= sb <= 1.2
    verdict(5, ok, f"slope uniform {su:.3f} (gamma_inf {[round(e.gamma_hat, 3) for e in gu]}); "
                   f"slope bernoulli {sb:.3f} (gamma_inf {[round(e.gamma_hat, 3) for e in gb]}); "
                   "target [0.8, 1.2] for both", t0)
    assert ok


@pytest.fixture(scope="module")
def bernoulli_separation():
    return separation_experiment(BERNOULLI, A_SWEEP, 2, X_SWEEP, 100, 200, 100_000, 8, 0.05)


def test_criterion_6_bounded_annealed_rate(verdict, bernoulli_separation):
    t0 = time.perf_counter()
    rep = bernoulli_separation
    spread = rep.relative_spread()
    top = rep.rows[-1]
    margin = math.hypot(top.gamma_inf_stderr, top.annealed_upper_stderr)
    ok_i = spread < 0.05
    ok_ii = top.gap > margin

    # (iii) soundness against direct Monte Carlo where it is feasible
    L, xs = 40, list(range(1, 13))
    worst = math.inf
    for a in (8.0, 64.0):
        spec = BERNOULLI.with_coupling(a)
        direct = annealed_correlator(spec, xs, L, 100_000)
        for x, m, se in zip(xs, direct.mean, direct.stderr):
            b = rare_event_bound(spec, 2, x, L, 200)
            lower = math.exp(b.event_log_prob) * b.conditional_Q_mean
            err = math.hypot(se, math.exp(b.event_log_prob) * b.conditional_Q_stderr)
            worst = min(worst, (m - lower + 3 * err) / max(m, 1e-300))
    ok_iii = worst >= 0
    table = "; ".join(f"a={r.a:g}: gamma_inf={r.gamma_inf:.3f}+-{r.gamma_inf_stderr:.3f}, "
                      f"upper={r.annealed_upper:.3f}+-{r.annealed_upper_stderr:.3f}"
                      for r in rep.rows)
    ok = ok_i and ok_ii and ok_iii
    verdict(6, ok, f"(i) spread {spread:.2e} < 5%: {ok_i}; (ii) gap at a=64 {top.gap:.3f} "
                   f"> {margin:.3f}: {ok_ii}; (iii) soundness holds: {ok_iii}. [{table}]", t0)
    assert ok


def test_criterion_7_eta_event_rate_ratio(verdict):
    t0 = time.perf_counter()
    a_list = tuple(math.exp(k) for k in (2, 4, 8))
    rep = separation_experiment(UNIFORM, a_list, 2, X_SWEEP, 100, 200, 100_000, 4, 0.05)
    up = [r.annealed_upper / math.log(r.a) for r in rep.rows]
    gi = [r.gamma_inf / math.log(r.a) for r in rep.rows]
    decreasing = all(b < a for a, b in zip(up, up[1:]))
    ok = decreasing and min(gi) >= 0.8
    verdict(7, ok, "upper/log a = " + ", ".join(f"{u:.4f}" for u in up)
            + f" (strictly decreasing: {decreasing}); gamma_inf/log a = "
            + ", ".join(f"{g:.3f}" for g in gi) + " (>= 0.8)", t0)
    assert ok


def test_criterion_8_log_minus_uniformity(verdict):
    t0 = time.perf_counter()
    E = 1.2
    vals = []
    for a in (4.0, 8.0, 16.0, 32.0):
        table = ids_estimate(BERNOULLI.with_coupling(a), [E], 2000, 20)
        vals.append(log_minus_integral(table, E, 10.0).value)
    ratio = max(vals) / min(vals)
    trend = linear_fit(np.log([4, 8, 16, 32]), vals)[0]
    ok = ratio <= 1.5
    verdict(8, ok, f"values at E={E}: " + ", ".join(f"{v:.4f}" for v in vals)
            + f"; max/min {ratio:.3f} (<= 1.5); slope vs log a {trend:+.4f}", t0)
    assert ok


def test_criterion_9_resonance_trend(verdict):
    t0 = time.perf_counter()
    spec = BERNOULLI.with_coupling(8.0)
    grid = energy_grid(spec, 0.02)
    gam = gamma_for_scan(spec, grid)
    tr = resonance_trend(spec, 1.5, (4, 6, 8, 10), grid, replicas=500, gammas=gam)
    half = 0.5 * float(gam.min())
    ref = resonance_trend(spec, half, (4, 6, 8, 10), grid, replicas=100, gammas=gam)
    ok = tr.log_slope < 0
    verdict(9, ok, f"tau=1.5: P = {[round(float(p), 3) for p in tr.probability]}, log-slope "
                   f"{tr.log_slope:.3f} (< 0); reference tau={half:.3f}: "
                   f"P = {[round(float(p), 3) for p in ref.probability]}", t0)
    assert ok


SMALL = {
    "lyapunov": {"energies": (-3.0, 0.5, 2.5, 7.0), "steps": 5000, "replicas": 4},
    "ids": {"grid_step": 0.25, "n_sites": 200, "replicas": 6},
    "thouless": {"energies": (0.5, 3.0), "n_sites": 200, "replicas": 6, "steps": 5000,
                 "lyapunov_replicas": 3},
    "correlator": {"L": 60, "x0": 3, "replica": 2},
    "annealed": {"x_list": (0, 2, 4, 6, 8, 10), "L": 20, "replicas": 40},
    "rare-event": {"K": 2, "x_list": (2, 3, 4, 5), "L": 20, "replicas": 20},
    "resonance": {"tau": 1.5, "N_list": (3, 4), "grid_step": 0.25, "replicas": 8},
    "separation": {"a_list": (4.0, 16.0), "K": 1, "x_list": (3, 4, 5, 6), "L": 20,
                   "replicas": 10, "gamma_steps": 5000, "gamma_replicas": 3, "grid_step": 0.25},
}


def test_criterion_10_reproducibility(verdict, tmp_path):
    t0 = time.perf_counter()
    identical = {}
    for command in COMMANDS:
        if command == "report":
            continue
        cfg = ExperimentConfig(command, BERNOULLI.with_coupling(8.0), dict(SMALL[command]))
        outputs = []
        for threads in (1, 2, 8):
            out = tmp_path / f"{command}-{threads}"
            cfg.threads, cfg.out = threads, str(out)
            assert cli.run(cfg) == 0
            outputs.append({n: (out / n).read_bytes() for n in sorted(os.listdir(out))})
        identical[command] = outputs[0] == outputs[1] == outputs[2]
    reports = []
    for threads in (1, 2, 8):
        out = tmp_path / f"report-{threads}"
        cfg = ExperimentConfig("report", params={"inputs": (str(tmp_path / "separation-1"),
                                                            str(tmp_path / "separation-8"))},
                               out=str(out), threads=threads)
        assert cli.run(cfg) == 0
        reports.append({n: (out / n).read_bytes() for n in sorted(os.listdir(out))})
    identical["report"] = reports[0] == reports[1] == reports[2]
    ok = all(identical.values())
    verdict(10, ok, "byte-identical across threads {1, 2, 8}: "
            + ", ".join(f"{k}={v}" for k, v in identical.items()), t0)
    assert ok
