"""Per-coherence-interval benchmark design from noisy channel estimates.

The estimate of user ``k`` is kept in affine form ``h_hat_k(phi) = a_k + G_k phi``
so the phase step can rebuild it for any candidate phase vector. Plugging
``F_k = h_hat_k`` and ``Q_k = h_hat_k h_hat_k^H + C_err,k`` into the shared FP
core gives the imperfect-CSI SINR expressions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelRealization, PhaseConfiguration, _complex_normal, psd_sqrt
from .config import OptimizerConfig
from .fp import FpProblem, FpState, fp_objective, initial_precoders, update_betas
from .rates import EstimationModel, PrecoderSet, imperfect_sum_rate
from .stat_csi import PhaseQuadratic, Solution, bcd


@dataclass(frozen=True)
class AffineEstimate:
    """``h_hat[k](phi) = base[k] + cascade[k] @ phi`` with a fixed error covariance."""

    base: np.ndarray  # (K, M)
    cascade: np.ndarray  # (K, M, N)
    C_err: np.ndarray  # (K, M, M)

    @property
    def K(self) -> int:
        return self.base.shape[0]

    @property
    def N(self) -> int:
        return self.cascade.shape[2]

    def at(self, phi: PhaseConfiguration) -> EstimationModel:
        h_hat = self.base + self.cascade @ phi.phi if self.N else self.base.copy()
        return EstimationModel(h_hat=h_hat, C_err=self.C_err)

    def stacked(self) -> np.ndarray:
        """``[G_k, a_k]`` so that ``h_hat_k = stacked[k] @ [phi; 1]``; shape (K, M, N+1)."""
        return np.concatenate([self.cascade, self.base[:, :, None]], axis=2)


def ls_estimate(h_true: np.ndarray, C_err: np.ndarray, rng: np.random.Generator) -> EstimationModel:
    """Add an independent ``CN(0, C_err[k])`` error to every user's channel."""
    h_true = np.asarray(h_true, dtype=complex)
    C_err = np.asarray(C_err, dtype=complex)
    z = _complex_normal(rng, h_true.shape)
    n = np.einsum("kab,kb->ka", np.stack([psd_sqrt(C) for C in C_err]), z)
    return EstimationModel(h_hat=h_true + n, C_err=C_err)


def fixed_error_estimate(
    realization: ChannelRealization, phi: PhaseConfiguration, C_err: np.ndarray, rng: np.random.Generator
) -> AffineEstimate:
    """Effective-channel error drawn once at ``phi`` and held fixed while the phases move."""
    G = realization.cascade()
    est = ls_estimate(realization.h_eff, C_err, rng)
    n = est.h_hat - realization.h_eff
    return AffineEstimate(base=realization.h_d + n, cascade=G, C_err=np.asarray(C_err, dtype=complex))


def cascaded_ls_estimate(
    realization: ChannelRealization, error_variance: float, rng: np.random.Generator
) -> AffineEstimate:
    """Estimate ``h_d`` and the ``N`` cascaded vectors separately.

    The total error variance is split equally over the ``N + 1`` vectors, so
    for any unit-modulus ``phi`` the effective error covariance is
    ``error_variance * I``.
    """
    K, M = realization.h_d.shape
    G = realization.cascade()
    N = G.shape[2]
    per = error_variance / (N + 1)
    n_d = np.sqrt(per) * _complex_normal(rng, (K, M))
    n_G = np.sqrt(per) * _complex_normal(rng, (K, M, N))
    C_err = np.broadcast_to(error_variance * np.eye(M), (K, M, M)).astype(complex)
    return AffineEstimate(base=realization.h_d + n_d, cascade=G + n_G, C_err=C_err)


@dataclass(frozen=True)
class ImperfectScenario:
    h_true: ChannelRealization
    estimate: AffineEstimate
    cfg: OptimizerConfig


def _herm(Z: np.ndarray) -> np.ndarray:
    return 0.5 * (Z + Z.conj().T)


def build_imperfect_quadratic(est: AffineEstimate, P: PrecoderSet, lam, lam_c, beta, beta_c) -> PhaseQuadratic:
    """Phase quadratic of the imperfect-CSI FP objective.

    With ``h_hat_k = Hbar_k phi_bar`` every term is a Hermitian form in
    ``phi_bar`` (linear terms are homogenised through the trailing 1); the
    corner entry is moved into ``t`` so ``B`` keeps the ``[[-R, g], [g^H, 0]]``
    layout.
    """
    K, N = est.K, est.N
    Hbar = est.stacked()  # (K, M, N+1)
    W = np.einsum("kmn,jm->kjn", Hbar.conj(), P.P)  # W[k, j] = Hbar_k^H p_j, (K, K+1, N+1)
    E = np.einsum("jm,kmn,jn->kj", P.P.conj(), est.C_err, P.P).real  # p_j^H C_err,k p_j
    e_last = np.zeros(N + 1)
    e_last[-1] = 1.0

    B = np.zeros((N + 1, N + 1), dtype=complex)
    t_priv = 0.0
    for j in range(K):
        b = complex(beta[j, 0])
        lin = 2.0 * np.sqrt(1.0 + lam[j]) * _herm(np.outer(np.conj(b) * W[j, j + 1], e_last))
        sq = np.abs(b) ** 2 * (W[j, 1:].T @ W[j, 1:].conj())
        B += lin - sq
        t_priv += np.log1p(lam[j]) - lam[j] - np.abs(b) ** 2 * (E[j, 1:].sum() + 1.0)

    B_c = np.zeros((K, N + 1, N + 1), dtype=complex)
    t = np.zeros(K)
    for k in range(K):
        b = complex(beta_c[k, 0])
        lin = 2.0 * np.sqrt(1.0 + lam_c[k]) * _herm(np.outer(np.conj(b) * W[k, 0], e_last))
        sq = np.abs(b) ** 2 * (W[k].T @ W[k].conj())
        B_c[k] = lin - sq
        t[k] = t_priv + np.log1p(lam_c[k]) - lam_c[k] - np.abs(b) ** 2 * (E[k].sum() + 1.0)

    # |phi_bar_{N+1}|^2 = 1, so the corner entries are constants
    t = t + B[N, N].real + B_c[:, N, N].real
    B[N, N] = 0.0
    B_c[:, N, N] = 0.0
    return PhaseQuadratic(B=B, B_c=B_c, t=t)


def imperfect_fp_objective(
    est: AffineEstimate, phi: PhaseConfiguration, P: PrecoderSet, state: FpState, k: int, rs: bool = True
) -> float:
    """Direct evaluation of the imperfect-CSI FP objective at ``phi`` (auxiliaries fixed)."""
    model = est.at(phi)
    # P_t only enters the precoder subproblem, not the objective itself
    prob = FpProblem.from_estimates(model.h_hat, model.C_err, P_t=1.0, rs=rs)
    return fp_objective(prob, P, state, k)


def optimize_imperfect(
    scenario: ImperfectScenario,
    P0: Optional[PrecoderSet] = None,
    phi0: Optional[PhaseConfiguration] = None,
) -> Solution:
    """Maximise the estimate-based sum-rate approximation for one coherence interval."""
    est, cfg = scenario.estimate, scenario.cfg
    phi0 = PhaseConfiguration.ones(est.N) if phi0 is None else phi0

    def build_problem(phi):
        model = est.at(phi)
        return FpProblem.from_estimates(model.h_hat, model.C_err, cfg.P_t, cfg.rs_enabled)

    if P0 is None:
        P0 = initial_precoders(build_problem(phi0), cfg.P_t, cfg.rs_enabled)

    def build_quadratic(P, phi, state):
        # betas follow the new precoders; lambdas come from this iteration's auxiliary step
        beta, beta_c = update_betas(build_problem(phi), P, state.lam, state.lam_c)
        return build_imperfect_quadratic(est, P, state.lam, state.lam_c, beta, beta_c)

    def rate_of(P, phi):
        return imperfect_sum_rate(est.at(phi), P)

    return bcd(build_problem, build_quadratic, rate_of, cfg, P0, phi0)
