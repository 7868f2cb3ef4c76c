"""Discrete-time LTI systems and the Lyapunov-based H2 norm."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import UnstableSystemError

LYAP_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class LtiSystem:
    """State-space data ``x+ = A x + Bp wp + Bd d``, ``zp = Cp x + Dp wp``.

    ``wp`` is the performance input, ``d`` an external process disturbance
    with known input matrix ``Bd`` (possibly zero columns), ``zp`` the
    performance output.
    """

    A: np.ndarray
    Bp: np.ndarray
    Bd: np.ndarray
    Cp: np.ndarray
    Dp: np.ndarray

    def __post_init__(self):
        for name in ("A", "Bp", "Bd", "Cp", "Dp"):
            object.__setattr__(self, name,
                               np.atleast_2d(np.asarray(getattr(self, name),
                                                        dtype=float)))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        if self.Bp.shape[0] != n or self.Bd.shape[0] != n:
            raise ValueError("Bp and Bd must have as many rows as A")
        if self.Cp.shape[1] != n:
            raise ValueError("Cp must have as many columns as A")
        if self.Dp.shape != (self.Cp.shape[0], self.Bp.shape[1]):
            raise ValueError("Dp must be p_p x m_p")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m_p(self) -> int:
        return self.Bp.shape[1]

    @property
    def m_d(self) -> int:
        return self.Bd.shape[1]

    @property
    def p_p(self) -> int:
        return self.Cp.shape[0]


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(A)))))


def solve_discrete_lyapunov(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve ``A W A' - W + Q = 0`` and enforce the residual contract."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    W = scipy.linalg.solve_discrete_lyapunov(A, Q)
    W = 0.5 * (W + W.T)
    residual = np.linalg.norm(A @ W @ A.T - W + Q)
    if residual > LYAP_RESIDUAL_TOL * max(1.0, np.linalg.norm(W)):
        raise ArithmeticError(
            f"Lyapunov solve residual {residual:.3e} exceeds tolerance")
    return W


def h2_norm(A, B, C, D) -> float:
    """H2 norm of ``(A, B, C, D)`` via the controllability Gramian.

    ``gamma = sqrt(trace(C W C' + D D'))`` with ``A W A' - W + B B' = 0``;
    requires asymptotic stability.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise UnstableSystemError(
            f"H2 norm undefined: spectral radius {rho:.6f} >= 1")
    W = solve_discrete_lyapunov(A, B @ B.T)
    val = float(np.trace(C @ W @ C.T) + np.trace(D @ D.T))
    return float(np.sqrt(max(val, 0.0)))


def true_h2(sys: LtiSystem) -> float:
    """H2 norm of the performance channel ``wp -> zp``."""
    return h2_norm(sys.A, sys.Bp, sys.Cp, sys.Dp)
