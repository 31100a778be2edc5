"""Joint precoder / RIS phase design from second-order channel statistics.

One BCD sweep refreshes the FP auxiliaries from the current effective
covariances, solves the rescaled precoder subproblem for every candidate
common user, and then updates the RIS phases via the principal eigenvector
of a Hermitian quadratic form in ``[phi; 1]``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .channel import ChannelStatistics, PhaseConfiguration, effective_covariances
from .config import OptimizerConfig
from .eig import principal_eigenvector
from .fp import (
    FpProblem,
    FpState,
    initial_precoders,
    tight_state,
    tight_value,
    update_precoders,
)
from .rates import PrecoderSet, RateReport, approx_sum_rate

PROJECTION_FLOOR = 1e-12


@dataclass
class PhaseAuxiliaries:
    """Decomposed-numerator auxiliaries for the phase step.

    Arrays indexed by user first. ``x1/x2/x3`` and ``beta1/2/3`` belong to the
    private stream of each user, the ``c``-suffixed ones to the common stream
    as seen by each user.
    """

    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    l: np.ndarray
    x1c: np.ndarray
    x2c: np.ndarray
    x3c: np.ndarray
    l_c: float
    f: float
    beta1: np.ndarray
    beta2: np.ndarray
    beta3: np.ndarray
    beta1c: np.ndarray
    beta2c: np.ndarray
    beta3c: np.ndarray
    a: np.ndarray
    a_c: np.ndarray
    d: np.ndarray
    d_c: np.ndarray
    lam: np.ndarray
    lam_c: np.ndarray


@dataclass(frozen=True)
class PhaseQuadratic:
    B: np.ndarray  # (N+1, N+1)
    B_c: np.ndarray  # (K, N+1, N+1)
    t: np.ndarray  # (K,)

    def value(self, phi_bar: np.ndarray, k: int) -> float:
        H = self.B + self.B_c[k]
        return float(np.real(np.vdot(phi_bar, H @ phi_bar)) + self.t[k])


def _numerator_parts(stats: ChannelStatistics, phi: np.ndarray, p: np.ndarray, k: int):
    """The three pieces whose squared norms add up to ``p^H C_k p``."""
    x1 = stats.C_d_sqrt[k] @ p
    if stats.N == 0:
        empty = np.zeros(0, dtype=complex)
        return x1, empty, empty, 0.0
    x2 = stats.C_r_sqrt[k] @ (phi.conj() * (stats.T_bar @ p))
    l = stats.delta * float(np.real(np.vdot(p, stats.R_Tx @ p)))
    x3 = np.sqrt(l) * (stats.X_sqrt[k] @ phi)
    return x1, x2, x3, l


def refresh_phase_auxiliaries(
    stats: ChannelStatistics, phi: PhaseConfiguration, P: PrecoderSet, lam, lam_c
) -> PhaseAuxiliaries:
    K, N = stats.K, stats.N
    ph = phi.phi
    C = effective_covariances(stats, phi)
    quad = np.einsum("jm,kmn,jn->kj", P.P.conj(), C, P.P).real
    d_priv = quad[:, 1:].sum(axis=1) + 1.0
    d_common = d_priv + quad[:, 0]

    parts = [_numerator_parts(stats, ph, P.p[k], k) for k in range(K)]
    parts_c = [_numerator_parts(stats, ph, P.p_c, k) for k in range(K)]
    x1 = np.array([pt[0] for pt in parts]).reshape(K, -1)
    x2 = np.array([pt[1] for pt in parts]).reshape(K, N)
    x3 = np.array([pt[2] for pt in parts]).reshape(K, N)
    l = np.array([pt[3] for pt in parts])
    x1c = np.array([pt[0] for pt in parts_c]).reshape(K, -1)
    x2c = np.array([pt[1] for pt in parts_c]).reshape(K, N)
    x3c = np.array([pt[2] for pt in parts_c]).reshape(K, N)
    l_c = parts_c[0][3]
    f = float(np.real(np.einsum("jm,mn,jn->", P.p.conj(), stats.R_Tx, P.p)))

    sp = (np.sqrt(1.0 + lam) / d_priv)[:, None]
    sc = (np.sqrt(1.0 + lam_c) / d_common)[:, None]
    beta1, beta2, beta3 = sp * x1, sp * x2, sp * x3
    beta1c, beta2c, beta3c = sc * x1c, sc * x2c, sc * x3c
    a = sum(np.sum(np.abs(b) ** 2, axis=1) for b in (beta1, beta2, beta3))
    a_c = sum(np.sum(np.abs(b) ** 2, axis=1) for b in (beta1c, beta2c, beta3c))
    if N:
        d = np.einsum("kab,kb->ka", stats.C_r_sqrt, beta2)
        d_c = np.einsum("kab,kb->ka", stats.C_r_sqrt, beta2c)
    else:
        d = d_c = np.zeros((K, 0), dtype=complex)
    return PhaseAuxiliaries(
        x1=x1, x2=x2, x3=x3, l=l, x1c=x1c, x2c=x2c, x3c=x3c, l_c=l_c, f=f,
        beta1=beta1, beta2=beta2, beta3=beta3, beta1c=beta1c, beta2c=beta2c, beta3c=beta3c,
        a=a, a_c=a_c, d=d, d_c=d_c, lam=np.asarray(lam), lam_c=np.asarray(lam_c),
    )


def build_phase_quadratic(stats: ChannelStatistics, P: PrecoderSet, aux: PhaseAuxiliaries) -> PhaseQuadratic:
    """Write the FP objective as ``phi_bar^H (B + B_c[k]) phi_bar + t[k]``.

    ``B = [[-R, g], [g^H, 0]]`` collects the private streams and
    ``B_c[k]`` the common stream decoded by user ``k``; ``t[k]`` holds
    everything that does not depend on the phases.
    """
    K, N, delta = stats.K, stats.N, stats.delta
    lam, lam_c = aux.lam, aux.lam_c
    Cr_T = np.transpose(stats.C_r, (0, 2, 1))
    u = P.p @ stats.T_bar.T  # rows T_bar p_j, (K, N)
    u_c = stats.T_bar @ P.p_c
    U = u.T @ u.conj()  # sum_j u_j u_j^H
    U_c = np.outer(u_c, u_c.conj())

    g = np.zeros(N, dtype=complex)
    R = np.zeros((N, N), dtype=complex)
    for j in range(K):
        g += np.sqrt(1.0 + lam[j]) * (
            u[j] * aux.d[j].conj() + np.sqrt(aux.l[j]) * (stats.X_sqrt[j] @ aux.beta3[j])
        )
        R += aux.a[j] * (U * Cr_T[j]) + delta * aux.f * aux.a[j] * stats.X[j]

    B = np.zeros((N + 1, N + 1), dtype=complex)
    B[:N, :N] = -R
    B[:N, N] = g
    B[N, :N] = g.conj()

    f_c = aux.f + float(np.real(np.vdot(P.p_c, stats.R_Tx @ P.p_c)))
    B_c = np.zeros((K, N + 1, N + 1), dtype=complex)
    for k in range(K):
        g_c = np.sqrt(1.0 + lam_c[k]) * (
            u_c * aux.d_c[k].conj() + np.sqrt(aux.l_c) * (stats.X_sqrt[k] @ aux.beta3c[k])
        )
        R_c = aux.a_c[k] * ((U + U_c) * Cr_T[k]) + delta * f_c * aux.a_c[k] * stats.X[k]
        B_c[k, :N, :N] = -R_c
        B_c[k, :N, N] = g_c
        B_c[k, N, :N] = g_c.conj()

    # phase-independent remainder
    direct = np.einsum("jm,kmn,jn->kj", P.P.conj(), stats.C_d, P.P).real  # p_j^H C_d,k p_j
    t_priv = np.sum(
        np.log1p(lam)
        - lam
        + 2.0 * np.sqrt(1.0 + lam) * np.real(np.sum(aux.beta1.conj() * aux.x1, axis=1))
        - aux.a * (direct[:, 1:].sum(axis=1) + 1.0)
    )
    t_common = (
        np.log1p(lam_c)
        - lam_c
        + 2.0 * np.sqrt(1.0 + lam_c) * np.real(np.sum(aux.beta1c.conj() * aux.x1c, axis=1))
        - aux.a_c * (direct.sum(axis=1) + 1.0)
    )
    return PhaseQuadratic(B=B, B_c=B_c, t=t_priv + t_common)


def phase_fp_objective(
    stats: ChannelStatistics, phi: PhaseConfiguration, P: PrecoderSet, aux: PhaseAuxiliaries, k: int
) -> float:
    """FP objective with split numerators, evaluated directly at ``phi``.

    Covariances are rebuilt from ``phi``; the beta auxiliaries stay fixed.
    Used to cross-check :func:`build_phase_quadratic`.
    """
    ph = phi.phi
    C = effective_covariances(stats, phi)
    quad = np.einsum("jm,kmn,jn->kj", P.P.conj(), C, P.P).real
    lam, lam_c = aux.lam, aux.lam_c
    total = 0.0
    for j in range(stats.K):
        x1, x2, x3, _ = _numerator_parts(stats, ph, P.p[j], j)
        cross = np.vdot(aux.beta1[j], x1) + np.vdot(aux.beta2[j], x2) + np.vdot(aux.beta3[j], x3)
        total += (
            np.log1p(lam[j]) - lam[j] + 2.0 * np.sqrt(1.0 + lam[j]) * cross.real
            - aux.a[j] * (quad[j, 1:].sum() + 1.0)
        )
    x1, x2, x3, _ = _numerator_parts(stats, ph, P.p_c, k)
    cross = np.vdot(aux.beta1c[k], x1) + np.vdot(aux.beta2c[k], x2) + np.vdot(aux.beta3c[k], x3)
    total += (
        np.log1p(lam_c[k]) - lam_c[k] + 2.0 * np.sqrt(1.0 + lam_c[k]) * cross.real
        - aux.a_c[k] * (quad[k].sum() + 1.0)
    )
    return float(total)


def project_unit_modulus(x: np.ndarray) -> np.ndarray:
    """Rotate so the last entry is positive real, then map every entry onto the unit circle."""
    x = np.asarray(x, dtype=complex)
    last = x[-1]
    if abs(last) > PROJECTION_FLOOR:
        x = x * (np.conj(last) / abs(last))
    mag = np.abs(x)
    out = np.ones_like(x)
    ok = mag >= PROJECTION_FLOOR
    out[ok] = x[ok] / mag[ok]
    out[-1] = 1.0
    return out


def update_phases(
    quad: PhaseQuadratic,
    users=None,
    tol: float = 1e-9,
    max_pi_iters: int = 200_000,
    x0: Optional[np.ndarray] = None,
):
    """Projected principal eigenvector for every candidate user; keep the minimiser.

    Returns ``(PhaseConfiguration, k_opt, values)``.
    """
    K = quad.B_c.shape[0]
    users = range(K) if users is None else users
    best = None
    values = np.full(K, np.inf)
    for k in users:
        H = quad.B + quad.B_c[k]
        x, _ = principal_eigenvector(H, tol=tol, max_pi_iters=max_pi_iters, x0=x0)
        phi_bar = project_unit_modulus(x)
        values[k] = quad.value(phi_bar, k)
        if best is None or values[k] < values[best[0]]:
            best = (k, phi_bar)
    k_opt, phi_bar = best
    return PhaseConfiguration(phi_bar[:-1]), k_opt, values


# --- BCD driver ------------------------------------------------------------


@dataclass
class TraceEntry:
    iteration: int
    fp_objective: float
    sum_rate_bits: float
    k_opt_precoder: int
    k_opt_phase: int
    power_residual: float
    core_before: float = float("nan")
    core_after: float = float("nan")


TRACE_COLUMNS = ["iteration", "fp_objective", "sum_rate_bits", "k_opt_precoder", "k_opt_phase", "power_residual"]


def write_trace(trace: List[TraceEntry], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for e in trace:
            w.writerow([
                e.iteration, f"{e.fp_objective:.12g}", f"{e.sum_rate_bits:.12g}",
                e.k_opt_precoder, e.k_opt_phase, f"{e.power_residual:.3e}",
            ])


@dataclass
class Solution:
    P: PrecoderSet
    phi: PhaseConfiguration
    rate: RateReport
    trace: List[TraceEntry] = field(default_factory=list)
    iterations_used: int = 0
    common_user: int = 0
    # sum-rate after every iteration, kept even when trace_enabled is off
    rate_history: List[float] = field(default_factory=list)


def bcd(
    build_problem: Callable[[PhaseConfiguration], FpProblem],
    build_quadratic: Optional[Callable[[PrecoderSet, PhaseConfiguration, FpState], PhaseQuadratic]],
    rate_of: Callable[[PrecoderSet, PhaseConfiguration], RateReport],
    cfg: OptimizerConfig,
    P0: PrecoderSet,
    phi0: PhaseConfiguration,
) -> Solution:
    """Generic alternating loop shared by the statistical and imperfect-CSI designs.

    The phase projection is a heuristic and can make the sequence cycle, so
    the returned solution is the best iterate seen, not necessarily the last.
    """
    P, phi = P0, phi0
    prev = rate_of(P, phi).sum_rate
    best = (prev, P, phi)
    trace: List[TraceEntry] = []
    history: List[float] = []
    do_phase = cfg.phase_update_enabled and phi.N > 0 and build_quadratic is not None
    it = 0
    for it in range(1, cfg.max_iters + 1):
        prob = build_problem(phi)
        state = tight_state(prob, P)
        P_new, k_p, _ = update_precoders(prob, state)
        core_before = tight_value(prob, P, k_p)
        core_after = tight_value(prob, P_new, k_p)
        P = P_new
        fp_val = core_after
        k_phi = -1
        if do_phase:
            quad = build_quadratic(P, phi, state)
            users = range(prob.K) if prob.rs else [0]
            phi, k_phi, _ = update_phases(
                quad, users=users, tol=cfg.pi_tol, max_pi_iters=cfg.pi_max_iters, x0=phi.augmented
            )
        rate = rate_of(P, phi).sum_rate
        history.append(rate)
        if rate > best[0]:
            best = (rate, P, phi)
        if cfg.trace_enabled:
            trace.append(TraceEntry(
                iteration=it, fp_objective=fp_val, sum_rate_bits=rate, k_opt_precoder=k_p,
                k_opt_phase=k_phi, power_residual=abs(P.power - cfg.P_t),
                core_before=core_before, core_after=core_after,
            ))
        converged = abs(rate - prev) / max(prev, 1e-12) < cfg.rel_tol
        prev = rate
        if converged:
            break
    _, P, phi = best
    report = rate_of(P, phi)
    return Solution(
        P=P, phi=phi, rate=report, trace=trace, iterations_used=it,
        common_user=report.common_user, rate_history=history,
    )


def optimize(
    stats: ChannelStatistics,
    cfg: OptimizerConfig,
    P0: Optional[PrecoderSet] = None,
    phi0: Optional[PhaseConfiguration] = None,
) -> Solution:
    """Maximise the covariance-based RSMA sum rate over precoders and RIS phases."""
    phi0 = PhaseConfiguration.ones(stats.N) if phi0 is None else phi0
    if P0 is None:
        P0 = initial_precoders(effective_covariances(stats, phi0), cfg.P_t, cfg.rs_enabled)

    def build_problem(phi):
        return FpProblem.from_covariances(effective_covariances(stats, phi), cfg.P_t, cfg.rs_enabled)

    def build_quadratic(P, phi, state):
        # lambdas carried over from this iteration's auxiliary step
        aux = refresh_phase_auxiliaries(stats, phi, P, state.lam, state.lam_c)
        return build_phase_quadratic(stats, P, aux)

    def rate_of(P, phi):
        return approx_sum_rate(effective_covariances(stats, phi), P)

    return bcd(build_problem, build_quadratic, rate_of, cfg, P0, phi0)
