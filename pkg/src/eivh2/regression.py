"""Errors-in-variables linear regression and its exact LFT parametrization.

The data model is ``Y - L2 V2 R2 = Theta (X - L1 V1 R1)`` with unknown noise
blocks ``V1`` (regressor) and ``V2`` (regressand).  Given a right inverse
``G`` of the regressor, every consistent parameter matrix is the closure of
one fixed LFT with ``delta = diag(V1, V2)``; :func:`build_lft` constructs
that LFT and :func:`close_lft` evaluates it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import RankDeficientError, WellPosednessError

RANK_RTOL = 1e-9  # relative sigma_min threshold for all rank decisions


@dataclass(frozen=True)
class StructuredRegression:
    """Data matrices plus noise structure factors.

    ``Y`` (p x N) and ``X`` (n x N) are the stacked regressand / regressor
    samples; the noise enters as ``L1 @ V1 @ R1`` (n x N) and
    ``L2 @ V2 @ R2`` (p x N).
    """

    Y: np.ndarray
    X: np.ndarray
    L1: np.ndarray
    R1: np.ndarray
    L2: np.ndarray
    R2: np.ndarray

    def __post_init__(self):
        for name in ("Y", "X", "L1", "R1", "L2", "R2"):
            object.__setattr__(self, name,
                               np.atleast_2d(np.asarray(getattr(self, name),
                                                        dtype=float)))
        p, Ny = self.Y.shape
        n, Nx = self.X.shape
        if Ny != Nx or Ny < 1:
            raise ValueError(f"Y has {Ny} columns but X has {Nx}")
        if self.L1.shape[0] != n:
            raise ValueError(f"L1 must have {n} rows, got {self.L1.shape[0]}")
        if self.L2.shape[0] != p:
            raise ValueError(f"L2 must have {p} rows, got {self.L2.shape[0]}")
        if self.R1.shape[1] != Ny or self.R2.shape[1] != Ny:
            raise ValueError("R1 and R2 must have as many columns as the data")

    @property
    def n_samples(self) -> int:
        return self.X.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.Y.shape[0]


@dataclass(frozen=True)
class RankReport:
    ok: bool
    sigma_min: float


@dataclass(frozen=True)
class SignalToNoiseReport:
    ok: bool
    margin: float


def _row_rank_svd(X: np.ndarray):
    """Singular values plus a full-row-rank verdict at the shared tolerance."""
    s = np.linalg.svd(X, compute_uv=False)
    n = X.shape[0]
    if X.shape[1] < n or s.size < n:
        return s, False
    smax = s[0]
    return s, bool(smax > 0 and s[n - 1] > RANK_RTOL * smax)


def check_data_rank(X: np.ndarray) -> RankReport:
    """Report whether the regressor has full row rank (Assumption on XG = I)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    s, ok = _row_rank_svd(X)
    sigma_min = float(s[X.shape[0] - 1]) if s.size >= X.shape[0] else 0.0
    return RankReport(ok=ok, sigma_min=sigma_min)


def right_inverse_moore_penrose(X: np.ndarray) -> np.ndarray:
    """Right inverse with the smallest norm (Moore-Penrose), X @ G = I."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, N = X.shape
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if N < n or s[-1] <= RANK_RTOL * s[0]:
        raise RankDeficientError(
            f"regressor is not full row rank (sigma_min={s[-1]:.3e})",
            sigma_min=float(s[-1]))
    return (Vt.T / s) @ U.T


def right_inverse_weighted(X: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Weighted right inverse ``R^-1 X' (X R^-1 X')^-1`` for R > 0.

    Minimizes the size of the mapped uncertainty set; reduces to the
    Moore-Penrose inverse at R = I.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, N = X.shape
    if R.shape != (N, N):
        raise ValueError(f"weight must be {N}x{N}, got {R.shape}")
    if np.max(np.abs(R - R.T)) > 1e-10 * max(1.0, np.max(np.abs(R))):
        raise ValueError("weight matrix is not symmetric")
    try:
        cho = scipy.linalg.cho_factor(R)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise ValueError("weight matrix is not positive definite") from exc
    s, ok = _row_rank_svd(X)
    if not ok:
        raise RankDeficientError(
            f"regressor is not full row rank (sigma_min={s[-1]:.3e})",
            sigma_min=float(s[-1]))
    RinvXT = scipy.linalg.cho_solve(cho, X.T)
    M = X @ RinvXT  # X R^-1 X', positive definite for full-row-rank X
    return RinvXT @ np.linalg.inv(M)


def check_signal_to_noise(X: np.ndarray, L1: np.ndarray, R1: np.ndarray,
                          v_bound: float) -> SignalToNoiseReport:
    """Sufficient condition for invertibility of ``I - L1 V1 R1 G``.

    Positive margin ``sigma_min(X) - sigma_max(L1) * v_bound * sigma_max(R1)``
    guarantees the noisy regressor keeps full row rank for every admissible
    ``V1`` with spectral norm at most ``v_bound`` and every right inverse G.
    """
    if v_bound < 0:
        raise ValueError("v_bound must be nonnegative")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    s = np.linalg.svd(X, compute_uv=False)
    sigma_min = float(s[X.shape[0] - 1]) if s.size >= X.shape[0] else 0.0
    l1 = float(np.linalg.svd(np.atleast_2d(L1), compute_uv=False)[0])
    r1 = float(np.linalg.svd(np.atleast_2d(R1), compute_uv=False)[0])
    margin = sigma_min - l1 * v_bound * r1
    return SignalToNoiseReport(ok=bool(margin > 0), margin=margin)


@dataclass(frozen=True)
class RegressionLft:
    """The 3x3-block coefficient matrix of the consistent-set LFT.

    Row blocks (y, z1, z2), column blocks (x, w1, w2); spans are recorded as
    half-open (start, stop) index pairs so downstream partitioning never
    guesses positions.  Blocks (z1, w2) and (z2, w2) are exactly zero.
    """

    M: np.ndarray
    row_spans: dict[str, tuple[int, int]]
    col_spans: dict[str, tuple[int, int]]

    def block(self, row: str, col: str) -> np.ndarray:
        r0, r1 = self.row_spans[row]
        c0, c1 = self.col_spans[col]
        return self.M[r0:r1, c0:c1]

    @property
    def a(self) -> np.ndarray:
        return self.block("y", "x")

    @property
    def b(self) -> np.ndarray:
        r0, r1 = self.row_spans["y"]
        return self.M[r0:r1, self.col_spans["w1"][0]:]

    @property
    def c(self) -> np.ndarray:
        c0, c1 = self.col_spans["x"]
        return self.M[self.row_spans["z1"][0]:, c0:c1]

    @property
    def d(self) -> np.ndarray:
        return self.M[self.row_spans["z1"][0]:, self.col_spans["w1"][0]:]


def build_lft(reg: StructuredRegression, G: np.ndarray,
              tol: float = 1e-8) -> RegressionLft:
    """Assemble the LFT whose closures sweep all data-consistent Theta.

    The coefficient matrix is ``[[YG, YG L1, -L2], [R1 G, R1 G L1, 0],
    [R2 G, R2 G L1, 0]]``; closing with ``delta = diag(V1, V2)`` for
    admissible noise yields exactly the consistent parameter matrices.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n = reg.n
    residual = np.linalg.norm(reg.X @ G - np.eye(n))
    if residual > tol:
        raise ValueError(
            f"G is not a right inverse of X (||XG - I||_F = {residual:.3e})")
    p = reg.p
    r1, r2 = reg.L1.shape[1], reg.L2.shape[1]
    c1, c2 = reg.R1.shape[0], reg.R2.shape[0]
    YG = reg.Y @ G
    R1G = reg.R1 @ G
    R2G = reg.R2 @ G
    M = np.block([
        [YG, YG @ reg.L1, -reg.L2],
        [R1G, R1G @ reg.L1, np.zeros((c1, r2))],
        [R2G, R2G @ reg.L1, np.zeros((c2, r2))],
    ])
    row_spans = {"y": (0, p), "z1": (p, p + c1), "z2": (p + c1, p + c1 + c2)}
    col_spans = {"x": (0, n), "w1": (n, n + r1), "w2": (n + r1, n + r1 + r2)}
    return RegressionLft(M=M, row_spans=row_spans, col_spans=col_spans)


def close_lft(lft: RegressionLft, delta: np.ndarray,
              cond_limit: float = 1e12) -> np.ndarray:
    """Evaluate ``A + B delta (I - D delta)^-1 C`` for one uncertainty value."""
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    D = lft.d
    F = np.eye(D.shape[0]) - D @ delta
    cond = np.linalg.cond(F)
    if not np.isfinite(cond) or cond > cond_limit:
        raise WellPosednessError(
            f"I - D delta is numerically singular (cond = {cond:.3e})",
            cond=float(cond))
    return lft.a + lft.b @ delta @ np.linalg.solve(F, lft.c)


def consistency_residual(theta: np.ndarray, reg: StructuredRegression,
                         V1: np.ndarray, V2: np.ndarray) -> float:
    """Frobenius residual of the regression equation at a given noise pair."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    V1 = np.atleast_2d(np.asarray(V1, dtype=float))
    V2 = np.atleast_2d(np.asarray(V2, dtype=float))
    lhs = reg.Y - reg.L2 @ V2 @ reg.R2
    rhs = theta @ (reg.X - reg.L1 @ V1 @ reg.R1)
    return float(np.linalg.norm(lhs - rhs))
