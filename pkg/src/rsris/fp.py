"""Quadratic-transform FP machinery shared by both optimizers.

Each user ``k`` is described by a signal factor ``F[k]`` (M x r) and an
interference matrix ``Q[k]`` (M x M). The useful power of stream ``p`` at
user ``k`` is ``||F[k]^H p||^2`` and every denominator is built from
``p_j^H Q[k] p_j`` plus unit noise:

* statistical CSI: ``F[k] = C_k^{1/2}`` and ``Q[k] = C_k``;
* imperfect CSI: ``F[k] = h_hat[k]`` and ``Q[k] = h_hat h_hat^H + C_err[k]``.

Objective values are in nats.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import psd_sqrt
from .rates import PrecoderSet


class DegenerateStateError(RuntimeError):
    """All linear terms vanished; the precoder solve has no direction to follow."""


@dataclass(frozen=True)
class FpProblem:
    F: np.ndarray  # (K, M, r)
    Q: np.ndarray  # (K, M, M)
    P_t: float
    rs: bool = True

    @property
    def K(self) -> int:
        return self.Q.shape[0]

    @property
    def M(self) -> int:
        return self.Q.shape[1]

    @classmethod
    def from_covariances(cls, C: np.ndarray, P_t: float, rs: bool = True) -> "FpProblem":
        C = np.asarray(C, dtype=complex)
        F = np.stack([psd_sqrt(Ck) for Ck in C])
        return cls(F=F, Q=C, P_t=P_t, rs=rs)

    @classmethod
    def from_estimates(cls, h_hat: np.ndarray, C_err: np.ndarray, P_t: float, rs: bool = True) -> "FpProblem":
        h_hat = np.asarray(h_hat, dtype=complex)
        Q = np.einsum("km,kn->kmn", h_hat, h_hat.conj()) + np.asarray(C_err, dtype=complex)
        return cls(F=h_hat[:, :, None], Q=Q, P_t=P_t, rs=rs)


@dataclass
class FpState:
    lam: np.ndarray  # (K,)
    lam_c: np.ndarray  # (K,)
    beta: Optional[np.ndarray] = None  # (K, r)
    beta_c: Optional[np.ndarray] = None  # (K, r)


def _signal(prob: FpProblem, P: PrecoderSet):
    """``F[k]^H p_k`` (private, own user) and ``F[k]^H p_c``; shapes (K, r)."""
    Fh = prob.F.conj().transpose(0, 2, 1)
    priv = np.einsum("krm,km->kr", Fh, P.p)
    common = np.einsum("krm,m->kr", Fh, P.p_c)
    return priv, common


def _denominators(prob: FpProblem, P: PrecoderSet):
    """Private ``sum_j p_j^H Q_k p_j + 1`` and common (adds ``p_c^H Q_k p_c``)."""
    quad = np.einsum("jm,kmn,jn->kj", P.P.conj(), prob.Q, P.P).real
    d_priv = quad[:, 1:].sum(axis=1) + 1.0
    return d_priv, d_priv + quad[:, 0]


def sinrs(prob: FpProblem, P: PrecoderSet):
    s_priv, s_common = _signal(prob, P)
    S_p = np.sum(np.abs(s_priv) ** 2, axis=1)
    S_c = np.sum(np.abs(s_common) ** 2, axis=1)
    d_priv, d_common = _denominators(prob, P)
    gamma_p = S_p / np.maximum(d_priv - S_p, 1.0)
    gamma_c = S_c / np.maximum(d_common - S_c, 1.0)
    if not prob.rs:
        gamma_c = np.zeros_like(gamma_c)
    return gamma_p, gamma_c


def update_lambdas(prob: FpProblem, P: PrecoderSet):
    """``lambda_i = gamma_p,i`` and ``lambda_c,k = gamma_c,k``."""
    return sinrs(prob, P)


def update_betas(prob: FpProblem, P: PrecoderSet, lam, lam_c):
    """Closed-form maximisers of the objective over the beta auxiliaries.

    The private denominator leaves the common stream out; the common one
    keeps it.
    """
    s_priv, s_common = _signal(prob, P)
    d_priv, d_common = _denominators(prob, P)
    beta = np.sqrt(1.0 + lam)[:, None] * s_priv / d_priv[:, None]
    beta_c = np.sqrt(1.0 + lam_c)[:, None] * s_common / d_common[:, None]
    if not prob.rs:
        beta_c = np.zeros_like(beta_c)
    return beta, beta_c


def tight_state(prob: FpProblem, P: PrecoderSet) -> FpState:
    lam, lam_c = update_lambdas(prob, P)
    beta, beta_c = update_betas(prob, P, lam, lam_c)
    return FpState(lam=lam, lam_c=lam_c, beta=beta, beta_c=beta_c)


def fp_objective(prob: FpProblem, P: PrecoderSet, state: FpState, k: int) -> float:
    """Reformulated objective: private terms of all users plus common terms of user ``k``."""
    s_priv, s_common = _signal(prob, P)
    d_priv, d_common = _denominators(prob, P)
    lam, beta = state.lam, state.beta
    val = np.sum(
        np.log1p(lam)
        - lam
        + 2.0 * np.sqrt(1.0 + lam) * np.real(np.sum(beta.conj() * s_priv, axis=1))
        - np.sum(np.abs(beta) ** 2, axis=1) * d_priv
    )
    if prob.rs:
        lc, bc = state.lam_c[k], state.beta_c[k]
        val += (
            np.log1p(lc)
            - lc
            + 2.0 * np.sqrt(1.0 + lc) * np.real(np.vdot(bc, s_common[k]))
            - np.sum(np.abs(bc) ** 2) * d_common[k]
        )
    return float(val)


def tight_value(prob: FpProblem, P: PrecoderSet, k: int) -> float:
    """``sum_i ln(1+gamma_p,i) + ln(1+gamma_c,k)``: the FP objective at its tight auxiliaries."""
    gp, gc = sinrs(prob, P)
    return float(np.sum(np.log1p(gp)) + (np.log1p(gc[k]) if prob.rs else 0.0))


@dataclass(frozen=True)
class PrecoderSystem:
    """Block-diagonal ``A_k`` (one common block, K identical private blocks) and ``b_k``."""

    A_common: Optional[np.ndarray]  # (M, M); None when RS is off
    A_private: np.ndarray  # (M, M)
    b: np.ndarray  # (K+1, M), row 0 common
    u: float

    def dense(self) -> np.ndarray:
        K = self.b.shape[0] - 1
        M = self.A_private.shape[0]
        A = np.zeros(((K + 1) * M, (K + 1) * M), dtype=complex)
        if self.A_common is not None:
            A[:M, :M] = self.A_common
        for i in range(1, K + 1):
            A[i * M : (i + 1) * M, i * M : (i + 1) * M] = self.A_private
        return A

    def solve(self) -> np.ndarray:
        """``A_k^{-1} b_k`` as a (K+1, M) array; the common row is 0 without RS."""
        v = np.zeros_like(self.b)
        v[1:] = np.linalg.solve(self.A_private, self.b[1:].T).T
        if self.A_common is not None:
            v[0] = np.linalg.solve(self.A_common, self.b[0])
        return v

    def value(self, V: np.ndarray) -> float:
        """``-v^H A v + 2 Re{b^H v} + u``."""
        quad = np.real(np.vdot(V[1:], V[1:] @ self.A_private.T))
        if self.A_common is not None:
            quad += np.real(np.vdot(V[0], self.A_common @ V[0]))
        return float(-quad + 2.0 * np.real(np.vdot(self.b, V)) + self.u)


def precoder_system(prob: FpProblem, state: FpState, k: int) -> PrecoderSystem:
    """Assemble ``A_k`` and ``b_k`` of the rescaled precoder subproblem for common user ``k``.

    ``sum_j D_j^H Q D_j`` puts ``Q`` on every private block, so all private
    blocks of ``A_k`` coincide and ``A_k`` is block diagonal.
    """
    K, M = prob.K, prob.M
    eye = np.eye(M)
    w = np.sum(np.abs(state.beta) ** 2, axis=1)  # ||beta_i||^2
    A_private = np.einsum("i,imn->mn", w, prob.Q) + w.sum() / prob.P_t * eye
    b = np.zeros((K + 1, M), dtype=complex)
    b[1:] = np.sqrt(1.0 + state.lam)[:, None] * np.einsum("imr,ir->im", prob.F, state.beta)
    if not prob.rs:
        return PrecoderSystem(A_common=None, A_private=A_private, b=b, u=0.0)
    wc = float(np.sum(np.abs(state.beta_c[k]) ** 2))
    A_private = A_private + wc * (prob.Q[k] + eye / prob.P_t)
    A_common = wc * prob.Q[k] + (w.sum() + wc) / prob.P_t * eye
    b[0] = np.sqrt(1.0 + state.lam_c[k]) * prob.F[k] @ state.beta_c[k]
    u = float(np.log1p(state.lam_c[k]) - state.lam_c[k])
    return PrecoderSystem(A_common=A_common, A_private=A_private, b=b, u=u)


def update_precoders(prob: FpProblem, state: FpState):
    """Solve every per-user subproblem, rescale to full power, keep the minimising user.

    Returns ``(PrecoderSet, k_opt, values)`` where ``values[k]`` is the
    subproblem objective at the rescaled solution for common user ``k``.
    """
    K = prob.K
    users = range(K) if prob.rs else range(1)
    best = None
    values = np.full(K, np.inf)
    for k in users:
        sys_k = precoder_system(prob, state, k)
        if not np.any(sys_k.b):
            continue
        V = sys_k.solve()
        V *= np.sqrt(prob.P_t) / np.linalg.norm(V)
        values[k] = sys_k.value(V)
        if best is None or values[k] < values[best[0]]:
            best = (k, V)
    if best is None:
        raise DegenerateStateError("all b_k vanish; reinitialise the precoders")
    if not prob.rs:
        values[:] = values[0]
    return PrecoderSet(best[1]), best[0], values


def initial_precoders(prob_or_C, P_t: float, rs: bool = True) -> PrecoderSet:
    """Matched filters to the dominant eigenvectors with an equal power split.

    The common precoder follows the dominant eigenvector of ``sum_k Q_k``.
    """
    Q = prob_or_C.Q if isinstance(prob_or_C, FpProblem) else np.asarray(prob_or_C)
    K, M, _ = Q.shape
    n_streams = K + 1 if rs else K
    scale = np.sqrt(P_t / n_streams)
    P = np.zeros((K + 1, M), dtype=complex)
    for k in range(K):
        _, U = np.linalg.eigh(Q[k])
        P[k + 1] = scale * U[:, -1]
    if rs:
        _, U = np.linalg.eigh(Q.sum(axis=0))
        P[0] = scale * U[:, -1]
    return PrecoderSet(P)
