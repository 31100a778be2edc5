"""Dominant eigenvector of a Hermitian matrix by shifted power iteration."""
from __future__ import annotations

from typing import Optional

import numpy as np


class PowerIterationError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"power iteration did not converge after {iterations} steps (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


def gershgorin_shift(H: np.ndarray) -> float:
    """Smallest ``s >= 0`` making every Gershgorin disc of ``H + sI`` non-negative."""
    radii = np.sum(np.abs(H), axis=1) - np.abs(np.diag(H))
    return float(max(0.0, -np.min(np.real(np.diag(H)) - radii)))


def principal_eigenvector(
    H: np.ndarray,
    tol: float = 1e-10,
    max_pi_iters: int = 200_000,
    x0: Optional[np.ndarray] = None,
    square_every: int = 64,
):
    """Eigenpair of the largest algebraic eigenvalue of Hermitian ``H``.

    ``H`` may be indefinite, so it is shifted by a Gershgorin bound first;
    the shifted matrix is PSD and its dominant eigenvalue is the largest
    algebraic eigenvalue of ``H``. If the plain iteration has not converged
    after ``square_every`` steps the iteration matrix is squared (which keeps
    the eigenvector ordering of a PSD matrix), so later steps advance
    ``2, 4, 8, ...`` power steps at once. ``max_pi_iters`` bounds the number
    of effective power steps.

    Returns ``(x, lam)`` with ``||x|| = 1`` and ``||H x - lam x|| <= tol * ||H||_F``.
    """
    H = np.asarray(H, dtype=complex)
    n = H.shape[0]
    H = 0.5 * (H + H.conj().T)
    h_norm = np.linalg.norm(H)
    x = np.ones(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    nx = np.linalg.norm(x)
    if nx == 0:
        x, nx = np.ones(n, dtype=complex), np.sqrt(n)
    x /= nx
    if h_norm == 0:
        return x, 0.0

    S = H + gershgorin_shift(H) * np.eye(n)
    S /= np.linalg.norm(S)
    steps_per_mult = 1
    steps = 0
    since_square = 0
    residual = np.inf
    while True:
        Hx = H @ x
        lam = float(np.real(np.vdot(x, Hx)))
        residual = float(np.linalg.norm(Hx - lam * x))
        if residual <= tol * h_norm:
            return x, lam
        if steps >= max_pi_iters:
            raise PowerIterationError(residual, steps)
        y = S @ x
        ny = np.linalg.norm(y)
        if ny == 0:
            # x sits in the null space of the shifted matrix; perturb deterministically
            y = x + np.arange(1, n + 1) / n
            ny = np.linalg.norm(y)
        x = y / ny
        steps += steps_per_mult
        since_square += 1
        if since_square >= square_every:
            S = S @ S
            S = 0.5 * (S + S.conj().T)
            S /= np.linalg.norm(S)
            steps_per_mult *= 2
            since_square = 0
