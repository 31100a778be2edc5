"""One test per acceptance criterion, run at the stated tolerances.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (also echoed
in the terminal summary). Criteria that the implemented algorithm does not meet
are marked as strict expected failures; the analysis lives in the decisions
ledger and the README.
"""
import itertools
import time

import numpy as np
import pytest
from scipy.special import exp1

from conftest import VERDICTS
from factories import crandn, random_phases, random_precoders, random_stats
from rsris.channel import ChannelStatistics, PhaseConfiguration, effective_covariances, sample_batch, synthesize_covariances
from rsris.config import ExperimentPlan, OptimizerConfig, ScenarioConfig, Variant, db2lin
from rsris.eig import principal_eigenvector
from rsris.fp import (
    FpProblem,
    fp_objective,
    initial_precoders,
    precoder_system,
    tight_state,
    update_lambdas,
    update_precoders,
)
from rsris.harness import STREAM_COV, aggregate, cell_rng, run_cells
from rsris.rates import PrecoderSet, approx_sinrs, ergodic_sum_rate_mc
from rsris.stat_csi import (
    build_phase_quadratic,
    optimize,
    phase_fp_objective,
    project_unit_modulus,
    refresh_phase_auxiliaries,
)

pytestmark = pytest.mark.acceptance


def verdict(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    VERDICTS.append(line)
    return ok


def plateau_iteration(history, tol=1e-3, window=5):
    """First iteration after which ``window`` consecutive relative steps stay below ``tol``.

    A run that stops before showing such a window counts as plateaued at its
    last iteration, unless it ran into the iteration cap.
    """
    h = np.asarray(history)
    rel = np.abs(np.diff(h)) / np.maximum(h[:-1], 1e-12)
    for t in range(window - 1, rel.size):
        if np.all(rel[t - window + 1:t + 1] < tol):
            return t + 2
    return None if len(h) >= 100 else len(h)


@pytest.mark.xfail(strict=True, reason="one of 91 entries lands at 3.3 standard errors; multiplicity, see ledger")
def test_criterion_01_covariance_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    n = 200_000
    z_all = []
    for i in range(10):
        M, N = 2 + i % 3, 2 + (i * 5) % 7
        stats = random_stats(rng, M, 2, N)
        phi = random_phases(rng, N)
        C = effective_covariances(stats, phi)[0]
        h = sample_batch(stats, phi, n, rng)[3][:, 0, :]
        # one z-score per independent real quantity of the Hermitian matrix
        for a, b in itertools.combinations_with_replacement(range(M), 2):
            prod = h[:, a] * np.conj(h[:, b])
            parts = [(prod.real, C[a, b].real)] + ([(prod.imag, C[a, b].imag)] if a != b else [])
            for x, ref in parts:
                z_all.append((x.mean() - ref) / (x.std(ddof=1) / np.sqrt(n)))
    z = np.abs(np.array(z_all))
    elapsed = time.perf_counter() - t0
    ok = verdict(1, z.max() <= 3.0 and elapsed <= 60.0,
                 f"max |z| = {z.max():.2f} over {z.size} entries (mean |z| {z.mean():.2f}), {elapsed:.1f} s")
    assert ok


def test_criterion_02_fp_tightness():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(50):
        K, M = int(rng.integers(1, 5)), int(rng.integers(1, 7))
        C = np.stack([crandn(rng, M, M) for _ in range(K)])
        C = np.einsum("kab,kcb->kac", C, C.conj())
        P_t = float(10 ** rng.uniform(-1, 2))
        prob = FpProblem.from_covariances(C, P_t)
        P = random_precoders(rng, K, M, P_t=P_t)
        state = tight_state(prob, P)
        gp, gc = approx_sinrs(C, P)
        for k in range(K):
            target = np.log2(1 + gp).sum() + np.log2(1 + gc[k])
            worst = max(worst, abs(fp_objective(prob, P, state, k) / np.log(2) - target))
    assert verdict(2, worst <= 1e-9, f"max |error| = {worst:.2e} bits over 50 instances")


def test_criterion_03_precoder_stationarity():
    rng = np.random.default_rng(103)
    worst_res, worst_pow = 0.0, 0.0
    for _ in range(50):
        K, M = int(rng.integers(1, 5)), int(rng.integers(1, 7))
        C = np.stack([crandn(rng, M, M) for _ in range(K)])
        C = np.einsum("kab,kcb->kac", C, C.conj())
        P_t = float(10 ** rng.uniform(-1, 2))
        prob = FpProblem.from_covariances(C, P_t)
        state = tight_state(prob, random_precoders(rng, K, M, P_t=P_t))
        for k in range(K):
            system = precoder_system(prob, state, k)
            A, b = system.dense(), system.b.reshape(-1)
            v = system.solve().reshape(-1)
            # gradient of -v^H A v + 2 Re b^H v is 2 (b - A v)
            worst_res = max(worst_res, np.linalg.norm(A @ v - b) / np.linalg.norm(b))
        P_new, _, _ = update_precoders(prob, state)
        worst_pow = max(worst_pow, abs(P_new.power - P_t))
    ok = worst_res <= 1e-8 and worst_pow <= 1e-9
    assert verdict(3, ok, f"max residual/||b|| = {worst_res:.2e}, max power error = {worst_pow:.2e}")


def test_criterion_04_phase_quadratic_equivalence():
    rng = np.random.default_rng(104)
    worst = 0.0
    for i in range(20):
        N = 1 + i % 8
        K, M = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        stats = random_stats(rng, M, K, N)
        P = random_precoders(rng, K, M, P_t=float(10 ** rng.uniform(-1, 2)))
        phi = random_phases(rng, N)
        lam, lam_c = update_lambdas(FpProblem.from_covariances(effective_covariances(stats, phi), 1.0), P)
        aux = refresh_phase_auxiliaries(stats, phi, P, lam, lam_c)
        quad = build_phase_quadratic(stats, P, aux)
        probe = random_phases(rng, N)
        for k in range(K):
            worst = max(worst, abs(quad.value(probe.augmented, k) - phase_fp_objective(stats, probe, P, aux, k)))
    assert verdict(4, worst <= 1e-8, f"max |quadratic - direct| = {worst:.2e} over 20 instances")


def test_criterion_05_eigenvector_oracle():
    rng = np.random.default_rng(105)
    worst = 1.0
    for _ in range(20):
        A = crandn(rng, 41, 41)
        H = 0.5 * (A + A.conj().T)
        x, _ = principal_eigenvector(H)
        w, U = np.linalg.eigh(H)
        worst = min(worst, abs(np.vdot(U[:, -1], x)) / np.linalg.norm(x))
    assert verdict(5, worst >= 1 - 1e-8, f"min alignment = 1 - {1 - worst:.1e}")


DEFAULT = ScenarioConfig()


@pytest.mark.xfail(strict=True, reason="one of ten default-scenario runs plateaus after iteration 40; see ledger")
def test_criterion_06_monotone_core_and_plateau():
    worst_drop, plateaus = 0.0, []
    for c in range(10):
        stats = synthesize_covariances(DEFAULT, cell_rng(DEFAULT.seed, STREAM_COV, c))
        sol = optimize(stats, OptimizerConfig(P_t=db2lin(10.0), trace_enabled=True))
        worst_drop = max(worst_drop, max(e.core_before - e.core_after for e in sol.trace))
        plateaus.append(plateau_iteration(sol.rate_history))
    late = [p for p in plateaus if p is None or p > 40]
    ok = worst_drop <= 1e-9 and not late
    assert verdict(6, ok, f"max core decrease = {worst_drop:.1e}; plateau iterations {plateaus}")


@pytest.mark.xfail(strict=True, reason="the projected eigenvector falls below 95% of the grid optimum; see ledger")
def test_criterion_07_heuristic_phase_vs_grid():
    sc = ScenarioConfig(N=2)
    grid = np.exp(2j * np.pi * np.arange(64) / 64)
    G = np.array([[a, b, 1.0] for a, b in itertools.product(grid, grid)])
    ratios = []
    for c in range(20):
        stats = synthesize_covariances(sc, cell_rng(107, STREAM_COV, c))
        phi = PhaseConfiguration.random(2, cell_rng(107, 1, c))
        P_t = db2lin(10.0)
        prob = FpProblem.from_covariances(effective_covariances(stats, phi), P_t)
        P, _, _ = update_precoders(prob, tight_state(prob, initial_precoders(prob, P_t)))
        lam, lam_c = update_lambdas(prob, P)
        quad = build_phase_quadratic(stats, P, refresh_phase_auxiliaries(stats, phi, P, lam, lam_c))
        for k in range(stats.K):
            H = quad.B + quad.B_c[k]
            heur = quad.value(project_unit_modulus(principal_eigenvector(H)[0]), k)
            best = (np.einsum("gi,ij,gj->g", G.conj(), H, G).real + quad.t[k]).max()
            ratios.append(heur / best)
    r = np.array(ratios)
    ok = r.min() >= 0.95
    assert verdict(7, ok, f"min ratio = {r.min():.3f}, median {np.median(r):.3f}, "
                          f"{int((r < 0.95).sum())}/{r.size} (instance, user) pairs below 0.95")


def _pooled_gap(a, b):
    return (a.sum_rate_mean - b.sum_rate_mean) / np.hypot(a.sum_rate_stderr, b.sum_rate_stderr)


def test_criterion_08_variant_ordering():
    t0 = time.perf_counter()
    names = ["stat:rs:opt", "stat:rs:rand", "stat:nors:rand", "stat:rs:none"]
    plan = ExperimentPlan(scenario=DEFAULT, Pt_grid_dB=[10.0], n_cov_realizations=20, n_channel_realizations=200,
                          variants=[Variant.parse(v) for v in names])
    cells, failures = run_cells(plan)
    rows = {r.variant: r for r in aggregate(plan, cells)}
    opt, rand, nrand, none = (rows[Variant.parse(v).label] for v in names)
    gaps = [_pooled_gap(opt, rand), _pooled_gap(rand, nrand), _pooled_gap(rand, none)]
    elapsed = time.perf_counter() - t0
    ok = not failures and min(gaps) >= 2.0 and elapsed <= 600
    means = ", ".join(f"{v}={rows[Variant.parse(v).label].sum_rate_mean:.2f}" for v in names)
    assert verdict(8, ok, f"{means}; gaps (opt-rand, rand-noRS rand, rand-noRIS) = "
                          f"{', '.join(f'{g:.1f}' for g in gaps)} se; {elapsed:.0f} s")


@pytest.mark.xfail(strict=True, reason="the imperfect-CSI RS design saturates as well; see ledger")
def test_criterion_09_imperfect_csi_saturation():
    plan = ExperimentPlan(scenario=DEFAULT, Pt_grid_dB=[20.0, 30.0], n_cov_realizations=20, n_channel_realizations=200,
                          n_imp_channel_realizations=3, error_variance=1.0,
                          variants=[Variant.parse("imp:nors:opt"), Variant.parse("imp:rs:opt")])
    cells, failures = run_cells(plan)
    rows = {(r.variant, r.Pt_dB): r.sum_rate_mean for r in aggregate(plan, cells)}
    nors = rows[("Imp CSI noRS + OptRIS", 30.0)] - rows[("Imp CSI noRS + OptRIS", 20.0)]
    rs = rows[("Imp CSI RS + OptRIS", 30.0)] - rows[("Imp CSI RS + OptRIS", 20.0)]
    ok = not failures and nors < 0.5 and rs > 2.0
    assert verdict(9, ok, f"20->30 dB increase: noRS {nors:+.2f} bpcu (need < 0.5), RS {rs:+.2f} bpcu (need > 2)")


def test_criterion_10_single_user_mc_oracle():
    # one antenna, one user, unit-variance Rayleigh channel, no RIS
    stats = ChannelStatistics(
        C_d=np.ones((1, 1, 1)), C_r=np.zeros((1, 0, 0)), T_bar=np.zeros((0, 1)),
        R_RIS=np.zeros((0, 0)), R_Tx=np.ones((1, 1)), delta=0.0,
    )
    details, ok = [], True
    for i, P_dB in enumerate((0.0, 10.0, 20.0)):
        rho = db2lin(P_dB)
        exact = np.exp(1 / rho) * exp1(1 / rho) / np.log(2)
        P = PrecoderSet.from_parts([0.0], [[np.sqrt(rho)]])
        rep = ergodic_sum_rate_mc(stats, PhaseConfiguration.ones(0), P, 100_000, np.random.default_rng([110, i]))
        z = (rep.sum_rate - exact) / rep.stderr
        ok &= abs(z) <= 3
        details.append(f"{P_dB:g} dB: {rep.sum_rate:.4f} vs {exact:.4f} (z={z:+.2f})")
    assert verdict(10, ok, "; ".join(details))
