"""Second-order channel model of the RIS-aided MISO downlink.

The direct link ``h_d[k]`` and the RIS-user link ``r[k]`` are zero-mean
complex Gaussian; the BS-RIS link follows a Kronecker model with a
deterministic LoS mean::

    T = T_bar + sqrt(delta) * R_RIS^{1/2} W R_Tx^{1/2}

and the effective channel is ``h[k] = h_d[k] + T^H Phi r[k]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import ScenarioConfig

PSD_REL_TOL = 1e-10
HERMITIAN_TOL = 1e-10
SQRT_CLIP_REL = 1e-12
UNIT_MODULUS_TOL = 1e-12


class InvalidStatisticsError(ValueError):
    """Raised when a statistics object violates a structural invariant."""


@dataclass(frozen=True)
class SystemDims:
    M: int
    K: int
    N: int

    def __post_init__(self):
        if self.M < 1 or self.K < 1 or self.N < 0:
            raise ValueError(f"invalid dimensions M={self.M}, K={self.K}, N={self.N}")


def psd_sqrt(C: np.ndarray) -> np.ndarray:
    """Hermitian PSD square root; eigenvalues below 1e-12*trace are clipped to 0."""
    C = np.asarray(C, dtype=complex)
    if C.size == 0:
        return C.copy()
    Ch = 0.5 * (C + C.conj().T)
    w, U = np.linalg.eigh(Ch)
    floor = SQRT_CLIP_REL * max(abs(np.trace(Ch).real), 0.0)
    w = np.where(w > floor, w, 0.0)
    return (U * np.sqrt(w)) @ U.conj().T


def hermitian_defect(A: np.ndarray) -> float:
    """Largest entrywise asymmetry ``max |A - A^H|``."""
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(A - A.conj().T)))


def psd_defect(A: np.ndarray) -> float:
    """How far the smallest eigenvalue sits below ``-1e-10 * trace`` (0 if PSD)."""
    A = np.asarray(A, dtype=complex)
    if A.size == 0:
        return 0.0
    w = np.linalg.eigvalsh(0.5 * (A + A.conj().T))
    floor = -PSD_REL_TOL * max(abs(np.trace(A).real), 1.0)
    return float(max(floor - w[0], 0.0))


@dataclass(frozen=True)
class ChannelStatistics:
    """All second-order quantities the statistical-CSI design needs.

    ``C_d`` has shape (K, M, M), ``C_r`` (K, N, N), ``T_bar`` (N, M),
    ``R_RIS`` (N, N) and ``R_Tx`` (M, M).
    """

    C_d: np.ndarray
    C_r: np.ndarray
    T_bar: np.ndarray
    R_RIS: np.ndarray
    R_Tx: np.ndarray
    delta: float
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("C_d", "C_r", "T_bar", "R_RIS", "R_Tx"):
            arr = np.array(getattr(self, name), dtype=complex)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def dims(self) -> SystemDims:
        K, M, _ = self.C_d.shape
        return SystemDims(M=M, K=K, N=self.T_bar.shape[0])

    @property
    def M(self) -> int:
        return self.C_d.shape[1]

    @property
    def K(self) -> int:
        return self.C_d.shape[0]

    @property
    def N(self) -> int:
        return self.T_bar.shape[0]

    def _cached(self, key, fn):
        if key not in self._cache:
            val = fn()
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            self._cache[key] = val
        return self._cache[key]

    @property
    def C_d_sqrt(self) -> np.ndarray:
        return self._cached("C_d_sqrt", lambda: np.stack([psd_sqrt(C) for C in self.C_d]))

    @property
    def C_r_sqrt(self) -> np.ndarray:
        return self._cached(
            "C_r_sqrt",
            lambda: np.stack([psd_sqrt(C) for C in self.C_r]) if self.N else self.C_r.copy(),
        )

    @property
    def R_RIS_sqrt(self) -> np.ndarray:
        return self._cached("R_RIS_sqrt", lambda: psd_sqrt(self.R_RIS))

    @property
    def R_Tx_sqrt(self) -> np.ndarray:
        return self._cached("R_Tx_sqrt", lambda: psd_sqrt(self.R_Tx))

    @property
    def X(self) -> np.ndarray:
        """``X[k] = R_RIS ⊙ C_r[k]^T``, shape (K, N, N)."""
        return self._cached("X", lambda: self.R_RIS[None, :, :] * np.transpose(self.C_r, (0, 2, 1)))

    @property
    def X_sqrt(self) -> np.ndarray:
        return self._cached(
            "X_sqrt", lambda: np.stack([psd_sqrt(X) for X in self.X]) if self.N else self.X.copy()
        )

    def validate(self) -> None:
        """Raise :class:`InvalidStatisticsError` naming the first offending matrix."""
        K, M, N = self.K, self.M, self.N
        shapes = {
            "C_d": (self.C_d.shape, (K, M, M)),
            "C_r": (self.C_r.shape, (K, N, N)),
            "T_bar": (self.T_bar.shape, (N, M)),
            "R_RIS": (self.R_RIS.shape, (N, N)),
            "R_Tx": (self.R_Tx.shape, (M, M)),
        }
        for name, (got, want) in shapes.items():
            if got != want:
                raise InvalidStatisticsError(f"{name}: shape {got} inconsistent with expected {want}")
        if not 0.0 <= self.delta <= 1.0:
            raise InvalidStatisticsError(f"delta={self.delta} outside [0, 1]")
        named = [(f"C_d[{k}]", self.C_d[k]) for k in range(K)]
        named += [(f"C_r[{k}]", self.C_r[k]) for k in range(K)]
        named += [("R_RIS", self.R_RIS), ("R_Tx", self.R_Tx)]
        for name, A in named:
            if not np.all(np.isfinite(A)):
                raise InvalidStatisticsError(f"{name}: non-finite entries")
            scale = max(float(np.max(np.abs(A))) if A.size else 0.0, 1.0)
            asym = hermitian_defect(A)
            if asym > HERMITIAN_TOL * scale:
                raise InvalidStatisticsError(f"{name}: not Hermitian, max asymmetry {asym:.3e}")
            neg = psd_defect(A)
            if neg > 0:
                raise InvalidStatisticsError(f"{name}: not PSD, eigenvalue deficit {neg:.3e}")
        if not np.all(np.isfinite(self.T_bar)):
            raise InvalidStatisticsError("T_bar: non-finite entries")

    def without_ris(self) -> "ChannelStatistics":
        """Same direct links with the RIS removed (N = 0)."""
        M, K = self.M, self.K
        return ChannelStatistics(
            C_d=self.C_d,
            C_r=np.zeros((K, 0, 0)),
            T_bar=np.zeros((0, M)),
            R_RIS=np.zeros((0, 0)),
            R_Tx=self.R_Tx,
            delta=self.delta,
        )


@dataclass(frozen=True)
class PhaseConfiguration:
    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=complex).reshape(-1)
        if phi.size and np.max(np.abs(np.abs(phi) - 1.0)) > UNIT_MODULUS_TOL:
            raise ValueError("phase shifts must have unit modulus")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def N(self) -> int:
        return self.phi.size

    @property
    def augmented(self) -> np.ndarray:
        """``[phi; 1]``."""
        return np.append(self.phi, 1.0 + 0j)

    @classmethod
    def ones(cls, N: int) -> "PhaseConfiguration":
        return cls(np.ones(N, dtype=complex))

    @classmethod
    def random(cls, N: int, rng: np.random.Generator) -> "PhaseConfiguration":
        return cls(np.exp(2j * np.pi * rng.random(N)))


@dataclass(frozen=True)
class ChannelRealization:
    h_d: np.ndarray  # (K, M)
    r: np.ndarray  # (K, N)
    T: np.ndarray  # (N, M)
    h_eff: np.ndarray  # (K, M)

    def cascade(self) -> np.ndarray:
        """Per-user cascaded matrices ``G[k] = T^H diag(r[k])`` so that h = h_d + G phi."""
        return np.einsum("nm,kn->kmn", self.T.conj(), self.r)


# --- covariance synthesis -------------------------------------------------


def steering_vector(n: int, theta: float) -> np.ndarray:
    """Unit-norm half-wavelength ULA response at angle ``theta`` (radians)."""
    return np.exp(1j * np.pi * np.arange(n) * np.sin(theta)) / np.sqrt(n)


def laplacian_weights(spread: float, n_points: int = 1001):
    """Quadrature nodes/weights of a Laplacian angular density with std ``spread``.

    The density is truncated to +-min(10*spread, pi) and renormalised so the
    weights sum to one exactly.
    """
    if spread <= 0:
        return np.zeros(1), np.ones(1)
    half = min(10.0 * spread, np.pi)
    x, w = np.polynomial.legendre.leggauss(n_points // 2)
    # integrate each side separately; the density has a kink at 0
    x_pos = 0.5 * half * (x + 1.0)
    w_pos = 0.5 * half * w
    b = spread / np.sqrt(2.0)
    dens = np.exp(-x_pos / b) / (2.0 * b)
    nodes = np.concatenate([-x_pos[::-1], x_pos])
    weights = np.concatenate([(w_pos * dens)[::-1], w_pos * dens])
    return nodes, weights / weights.sum()


def laplacian_covariance(n: int, angles: Sequence[float], spreads, powers) -> np.ndarray:
    """Sum over paths of ``power * E[a(theta + d) a(theta + d)^H]``.

    Angles and spreads in radians. ``trace`` of the result equals ``sum(powers)``
    since the steering vectors have unit norm.
    """
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    spreads = np.broadcast_to(np.asarray(spreads, dtype=float), angles.shape)
    powers = np.broadcast_to(np.asarray(powers, dtype=float), angles.shape)
    if np.any(powers <= 0):
        raise ValueError("path powers must be positive")
    C = np.zeros((n, n), dtype=complex)
    m = np.arange(n)
    for theta, spread, rho in zip(angles, spreads, powers):
        nodes, weights = laplacian_weights(spread)
        A = np.exp(1j * np.pi * np.outer(np.sin(theta + nodes), m)) / np.sqrt(n)  # (Q, n)
        C += rho * (A.T * weights) @ A.conj()
    return 0.5 * (C + C.conj().T)


def synthesize_covariances(scenario: ScenarioConfig, rng: np.random.Generator) -> ChannelStatistics:
    """Build a statistics object from a parametric Laplacian-spread ULA scenario.

    Per-user nominal angles and path powers are jittered uniformly within the
    ranges configured on ``scenario`` so repeated calls with different random
    streams emulate different user positions.
    """
    sc = scenario
    if not 0.0 <= sc.delta <= 1.0:
        raise ValueError(f"delta={sc.delta} outside [0, 1]")
    M, K, N = sc.M, sc.K, sc.N
    deg = np.pi / 180.0

    def user_paths(base, k):
        angles = np.asarray(base[k], dtype=float)
        jitter = rng.uniform(-sc.angle_jitter_deg, sc.angle_jitter_deg, angles.shape)
        return (angles + jitter) * deg

    def user_powers(k):
        p = np.asarray(sc.path_powers[k], dtype=float)
        if np.any(p <= 0):
            raise ValueError(f"user {k}: path powers must be positive")
        jitter_db = rng.uniform(-sc.power_jitter_db, sc.power_jitter_db, p.shape)
        return p * 10.0 ** (jitter_db / 10.0)

    spread = sc.angular_spread_deg * deg
    C_d = np.zeros((K, M, M), dtype=complex)
    C_r = np.zeros((K, N, N), dtype=complex)
    for k in range(K):
        pw = user_powers(k)
        pw = pw / pw.sum()
        C_d[k] = sc.direct_gain[k] * M * laplacian_covariance(M, user_paths(sc.user_angles_bs_deg, k), spread, pw)
        if N:
            C_r[k] = sc.ris_gain[k] * N * laplacian_covariance(
                N, user_paths(sc.user_angles_ris_deg, k), sc.ris_angular_spread_deg * deg, pw
            )

    aod = sc.bs_ris_aod_deg * deg
    aoa = sc.bs_ris_aoa_deg * deg
    R_Tx = M * laplacian_covariance(M, [aod], sc.bs_ris_spread_deg * deg, [1.0])
    if N:
        R_RIS = sc.bs_ris_gain * N * laplacian_covariance(N, [aoa], sc.bs_ris_spread_deg * deg, [1.0])
        T_prime = np.sqrt(sc.bs_ris_gain * N * M) * np.outer(steering_vector(N, aoa), steering_vector(M, aod).conj())
        T_bar = np.sqrt(1.0 - sc.delta) * T_prime
    else:
        R_RIS = np.zeros((0, 0))
        T_bar = np.zeros((0, M))
    return ChannelStatistics(C_d=C_d, C_r=C_r, T_bar=T_bar, R_RIS=R_RIS, R_Tx=R_Tx, delta=sc.delta)


# --- effective covariance and sampling -----------------------------------


def effective_covariance(stats: ChannelStatistics, phi: PhaseConfiguration, k: int) -> np.ndarray:
    """``C_k = C_d + T_bar^H Phi C_r Phi^H T_bar + delta (phi^H X_k phi) R_Tx``."""
    if phi.N != stats.N:
        raise ValueError(f"phase vector length {phi.N} does not match N={stats.N}")
    C = np.array(stats.C_d[k])
    if stats.N:
        u = phi.phi.conj()[:, None] * stats.T_bar  # Phi^H T_bar
        C = C + u.conj().T @ stats.C_r[k] @ u
        C = C + stats.delta * np.real(phi.phi.conj() @ stats.X[k] @ phi.phi) * stats.R_Tx
    return 0.5 * (C + C.conj().T)


def effective_covariances(stats: ChannelStatistics, phi: PhaseConfiguration) -> np.ndarray:
    """All users' effective covariances stacked, shape (K, M, M)."""
    return np.stack([effective_covariance(stats, phi, k) for k in range(stats.K)])


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    # real and imaginary parts each carry half the variance
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_batch(stats: ChannelStatistics, phi: PhaseConfiguration, n: int, rng: np.random.Generator):
    """Draw ``n`` independent realizations as stacked arrays.

    Returns ``(h_d, r, T, h_eff)`` with shapes (n, K, M), (n, K, N), (n, N, M)
    and (n, K, M).
    """
    K, M, N = stats.K, stats.M, stats.N
    h_d = _complex_normal(rng, (n, K, M))
    h_d = np.einsum("kab,nkb->nka", stats.C_d_sqrt, h_d)
    r = _complex_normal(rng, (n, K, N))
    if N:
        r = np.einsum("kab,nkb->nka", stats.C_r_sqrt, r)
    W = _complex_normal(rng, (n, N, M))
    T = np.broadcast_to(stats.T_bar, (n, N, M)).copy()
    if N and stats.delta > 0:
        T += np.sqrt(stats.delta) * stats.R_RIS_sqrt @ W @ stats.R_Tx_sqrt
    # h_eff = h_d + T^H Phi r
    h_eff = h_d + np.einsum("nsm,nks->nkm", T.conj(), phi.phi[None, None, :] * r)
    return h_d, r, T, h_eff


def sample_channels(
    stats: ChannelStatistics, phi: PhaseConfiguration, rng: np.random.Generator
) -> ChannelRealization:
    h_d, r, T, h_eff = sample_batch(stats, phi, 1, rng)
    return ChannelRealization(h_d=h_d[0], r=r[0], T=T[0], h_eff=h_eff[0])


def realization_from_parts(h_d, r, T, phi: Optional[PhaseConfiguration] = None) -> ChannelRealization:
    h_d = np.asarray(h_d, dtype=complex)
    r = np.asarray(r, dtype=complex)
    T = np.asarray(T, dtype=complex)
    phi_v = np.ones(T.shape[0], dtype=complex) if phi is None else phi.phi
    h_eff = h_d + (T.conj().T @ (phi_v[:, None] * r.T)).T
    return ChannelRealization(h_d=h_d, r=r, T=T, h_eff=h_eff)
