"""SINR and rate expressions of the RSMA downlink.

Noise variance is fixed to one, so ``P_t`` doubles as the transmit SNR.
Reported rates are in bits per channel use.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelStatistics, PhaseConfiguration, sample_batch

POWER_SLACK = 1e-9


@dataclass(frozen=True)
class PrecoderSet:
    """Common precoder in row 0, private precoders in rows 1..K; shape (K+1, M).

    The stacked vector ``v`` is the row-major flattening, i.e. ``[p_c; p_1; ...; p_K]``,
    which matches the selection matrices ``D_c = [I, 0, ...]`` and ``D_i``
    picking block ``i``.
    """

    P: np.ndarray

    def __post_init__(self):
        P = np.array(self.P, dtype=complex)
        if P.ndim != 2 or P.shape[0] < 2:
            raise ValueError(f"precoder matrix must be (K+1, M), got {P.shape}")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @classmethod
    def from_parts(cls, p_c, p) -> "PrecoderSet":
        return cls(np.vstack([np.asarray(p_c)[None, :], np.asarray(p)]))

    @classmethod
    def from_vector(cls, v, K: int, M: int) -> "PrecoderSet":
        return cls(np.asarray(v).reshape(K + 1, M))

    @property
    def p_c(self) -> np.ndarray:
        return self.P[0]

    @property
    def p(self) -> np.ndarray:
        return self.P[1:]

    @property
    def v(self) -> np.ndarray:
        return self.P.reshape(-1)

    @property
    def K(self) -> int:
        return self.P.shape[0] - 1

    @property
    def M(self) -> int:
        return self.P.shape[1]

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.P) ** 2))

    def check_power(self, P_t: float) -> None:
        if self.power > P_t + POWER_SLACK:
            raise ValueError(f"total power {self.power} exceeds budget {P_t}")


@dataclass(frozen=True)
class RateReport:
    private_rate: np.ndarray
    common_rate_candidate: np.ndarray
    common_user: int
    sum_rate: float
    stderr: Optional[float] = None

    @property
    def common_rate(self) -> float:
        return float(self.common_rate_candidate[self.common_user])


def _report(private, common, stderr=None) -> RateReport:
    private = np.maximum(np.asarray(private, dtype=float), 0.0)
    common = np.maximum(np.asarray(common, dtype=float), 0.0)
    k = int(np.argmin(common))
    return RateReport(
        private_rate=private,
        common_rate_candidate=common,
        common_user=k,
        sum_rate=float(private.sum() + common[k]),
        stderr=stderr,
    )


def quad_forms(C: np.ndarray, P: PrecoderSet) -> np.ndarray:
    """``Q[k, j] = p_j^H C_k p_j`` for j = 0 (common) .. K; shape (K, K+1)."""
    return np.einsum("jm,kmn,jn->kj", P.P.conj(), C, P.P).real


def _sinrs_from_gains(G: np.ndarray, E: Optional[np.ndarray] = None):
    """SINRs from signal gains ``G[..., k, j]`` and optional error terms ``E``.

    Column 0 is the common stream. ``E`` enters every denominator as in the
    imperfect-CSI expressions; for the private stream the sum of ``E`` runs
    over all private streams, for the common stream it also includes column 0.
    """
    K = G.shape[-2]
    idx = np.arange(K)
    own = G[..., idx, idx + 1]
    priv_total = G[..., 1:].sum(axis=-1)
    noise = 1.0
    if E is not None:
        noise = 1.0 + E[..., 1:].sum(axis=-1)
    gamma_p = own / (priv_total - own + noise)
    common_noise = noise if E is None else noise + E[..., 0]
    gamma_c = G[..., 0] / (priv_total + common_noise)
    return gamma_p, gamma_c


def approx_sinrs(C: np.ndarray, P: PrecoderSet):
    """Covariance-based SINR approximations ``(gamma_p, gamma_c)``."""
    Q = quad_forms(np.asarray(C), P)
    K = Q.shape[0]
    idx = np.arange(K)
    own = Q[idx, idx + 1]
    mask = np.ones((K, K), dtype=bool)
    mask[idx, idx] = False
    interference = np.where(mask, Q[:, 1:], 0.0).sum(axis=1)
    gamma_p = own / (interference + 1.0)
    gamma_c = Q[:, 0] / (Q[:, 1:].sum(axis=1) + 1.0)
    return np.maximum(gamma_p, 0.0), np.maximum(gamma_c, 0.0)


def approx_sum_rate(C: np.ndarray, P: PrecoderSet) -> RateReport:
    gp, gc = approx_sinrs(C, P)
    return _report(np.log2(1.0 + gp), np.log2(1.0 + gc))


def channel_gains(h: np.ndarray, P: PrecoderSet) -> np.ndarray:
    """``|h_k^H p_j|^2`` with leading batch axes kept; last axes (K, K+1)."""
    return np.abs(np.einsum("...km,jm->...kj", np.asarray(h).conj(), P.P)) ** 2


def instantaneous_sinrs(h_eff: np.ndarray, P: PrecoderSet):
    """Per-realization SINRs for channels ``h_eff`` of shape (..., K, M)."""
    return _sinrs_from_gains(channel_gains(h_eff, P))


def instantaneous_sum_rate(h_eff: np.ndarray, P: PrecoderSet) -> RateReport:
    gp, gc = instantaneous_sinrs(h_eff, P)
    return _report(np.log2(1.0 + gp), np.log2(1.0 + gc))


@dataclass(frozen=True)
class EstimationModel:
    h_hat: np.ndarray  # (K, M)
    C_err: np.ndarray  # (K, M, M)

    def __post_init__(self):
        object.__setattr__(self, "h_hat", np.array(self.h_hat, dtype=complex))
        object.__setattr__(self, "C_err", np.array(self.C_err, dtype=complex))


def imperfect_sinrs(est: EstimationModel, P: PrecoderSet):
    """SINR approximations that treat the estimation error as extra noise."""
    G = channel_gains(est.h_hat, P)
    E = quad_forms(est.C_err, P)
    return _sinrs_from_gains(G, E)


def imperfect_sum_rate(est: EstimationModel, P: PrecoderSet) -> RateReport:
    gp, gc = imperfect_sinrs(est, P)
    return _report(np.log2(1.0 + gp), np.log2(1.0 + gc))


def ergodic_sum_rate_mc(
    stats: ChannelStatistics,
    phi: PhaseConfiguration,
    P: PrecoderSet,
    n_samples: int,
    rng: np.random.Generator,
    batch_size: int = 8192,
) -> RateReport:
    """Monte Carlo estimate of the ergodic RSMA sum rate.

    The common-rate term is the minimum over users of per-user sample means.
    The reported standard error is that of the per-draw series
    ``sum_i R_p,i + R_c,k*`` with ``k*`` the selected common user.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    priv_parts, common_parts = [], []
    done = 0
    while done < n_samples:
        n = min(batch_size, n_samples - done)
        *_, h_eff = sample_batch(stats, phi, n, rng)
        gp, gc = instantaneous_sinrs(h_eff, P)
        priv_parts.append(np.log2(1.0 + gp))
        common_parts.append(np.log2(1.0 + gc))
        done += n
    priv = np.concatenate(priv_parts)  # (n, K)
    common = np.concatenate(common_parts)
    report = _report(priv.mean(axis=0), common.mean(axis=0))
    series = priv.sum(axis=1) + common[:, report.common_user]
    stderr = float(series.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    return RateReport(
        private_rate=report.private_rate,
        common_rate_candidate=report.common_rate_candidate,
        common_user=report.common_user,
        sum_rate=report.sum_rate,
        stderr=stderr,
    )
