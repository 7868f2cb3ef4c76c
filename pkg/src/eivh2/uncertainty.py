"""Bounded error sources as quadratic matrix inequalities (QMIs).

Each source is the set ``{V : V' Q V + R >= 0}`` with ``Q <= 0`` and
``R >= 0``; stacking sources gives the block-diagonal uncertainty that closes
the regression LFT.  Scaling each source QMI by a nonnegative scalar yields
the affine multiplier family used by the robust-analysis LMIs, and
:func:`reduce_source` performs the exact column reduction ``{V E} ->
{Vt : Vt' Q Vt + E' R E >= 0}`` for full-column-rank ``E``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import RankDeficientError

MEMBERSHIP_TOL = 1e-10


@dataclass(frozen=True)
class QmiSource:
    """One bounded error block ``{V : V' Q V + R >= 0}``.

    ``Q`` (rows x rows) must be negative semidefinite and ``R``
    (cols x cols) positive semidefinite, so the set always contains V = 0.
    Strict positive definiteness of R is required only by operations that
    need it (column reduction), which lets zero-bound sources degenerate to
    the single point {0}.
    """

    label: str
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        for name, M in (("Q", Q), ("R", R)):
            if M.shape[0] != M.shape[1]:
                raise ValueError(f"{name} must be square, got {M.shape}")
            if np.max(np.abs(M - M.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(M), initial=0.0)):
                raise ValueError(f"{name} must be symmetric")
        scale_q = max(1.0, float(np.max(np.abs(Q), initial=0.0)))
        if np.linalg.eigvalsh(Q)[-1] > 1e-10 * scale_q:
            raise ValueError(f"source {self.label!r}: Q is not negative semidefinite")
        scale_r = max(1.0, float(np.max(np.abs(R), initial=0.0)))
        if np.linalg.eigvalsh(R)[0] < -1e-10 * scale_r:
            raise ValueError(f"source {self.label!r}: R is not positive semidefinite")

    @property
    def rows(self) -> int:
        return self.Q.shape[0]

    @property
    def cols(self) -> int:
        return self.R.shape[0]


def spectral_ball(label: str, rows: int, cols: int, bound: float) -> QmiSource:
    """Source whose admissible set is the spectral-norm ball of given radius."""
    if bound < 0:
        raise ValueError("bound must be nonnegative")
    return QmiSource(label=label, Q=-np.eye(rows),
                     R=bound ** 2 * np.eye(cols))


def scalar_interval(label: str, bound: float) -> QmiSource:
    """Scalar source with admissible set ``[-bound, bound]``."""
    if bound < 0:
        raise ValueError("bound must be nonnegative")
    return QmiSource(label=label, Q=np.array([[-1.0]]),
                     R=np.array([[bound ** 2]]))


@dataclass(frozen=True)
class MembershipReport:
    ok: bool
    min_eig: float


def membership(source: QmiSource, V: np.ndarray) -> MembershipReport:
    """Evaluate the source QMI at a candidate noise value."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.shape != (source.rows, source.cols):
        raise ValueError(
            f"V must be {source.rows}x{source.cols}, got {V.shape}")
    min_eig = float(np.linalg.eigvalsh(V.T @ source.Q @ V + source.R)[0])
    return MembershipReport(ok=bool(min_eig >= -MEMBERSHIP_TOL), min_eig=min_eig)


def reduce_source(source: QmiSource, E: np.ndarray) -> QmiSource:
    """Exact column reduction: ``{V E}`` equals the set with R -> E' R E.

    Requires E to have full column rank and ``E' R E`` to be positive
    definite; callers skip the reduction when either fails.
    """
    E = np.atleast_2d(np.asarray(E, dtype=float))
    if E.shape[0] != source.cols:
        raise ValueError(f"E must have {source.cols} rows, got {E.shape[0]}")
    s = np.linalg.svd(E, compute_uv=False)
    if E.shape[1] > E.shape[0] or s[-1] <= 1e-9 * s[0]:
        raise RankDeficientError(
            f"reduction matrix is not full column rank (sigma_min={s[-1]:.3e})",
            sigma_min=float(s[-1]))
    R_new = E.T @ source.R @ E
    R_new = 0.5 * (R_new + R_new.T)
    if np.linalg.eigvalsh(R_new)[0] <= 0:
        raise ValueError(
            f"source {source.label!r}: reduced R is not positive definite")
    return QmiSource(label=source.label, Q=source.Q, R=R_new)


@dataclass(frozen=True)
class UncertaintySet:
    """Ordered stack of QMI sources with their block-diagonal index maps.

    ``row_spans[i]`` / ``col_spans[i]`` give the half-open row/column spans of
    source i inside ``delta = blockdiag(V_1, ..., V_k)`` (rows index the
    w channel, columns the z channel).
    """

    sources: tuple[QmiSource, ...]
    row_spans: tuple[tuple[int, int], ...]
    col_spans: tuple[tuple[int, int], ...]

    @property
    def w_dim(self) -> int:
        return self.row_spans[-1][1] if self.row_spans else 0

    @property
    def z_dim(self) -> int:
        return self.col_spans[-1][1] if self.col_spans else 0

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    def embed(self, blocks) -> np.ndarray:
        """Assemble blockdiag(delta) from one matrix per source."""
        if len(blocks) != self.n_sources:
            raise ValueError(f"expected {self.n_sources} blocks")
        delta = np.zeros((self.w_dim, self.z_dim))
        for src, (r0, r1), (c0, c1), blk in zip(self.sources, self.row_spans,
                                                self.col_spans, blocks):
            blk = np.atleast_2d(np.asarray(blk, dtype=float))
            if blk.shape != (src.rows, src.cols):
                raise ValueError(
                    f"block for {src.label!r} must be {src.rows}x{src.cols}")
            delta[r0:r1, c0:c1] = blk
        return delta

    def extract(self, delta: np.ndarray):
        """Per-source blocks of a stacked delta."""
        return [delta[r0:r1, c0:c1]
                for (r0, r1), (c0, c1) in zip(self.row_spans, self.col_spans)]


def stack_sources(sources) -> UncertaintySet:
    """Stack sources in the given order into one uncertainty set."""
    sources = tuple(sources)
    if not sources:
        raise ValueError("at least one source is required")
    row_spans, col_spans = [], []
    r = c = 0
    for src in sources:
        row_spans.append((r, r + src.rows))
        col_spans.append((c, c + src.cols))
        r += src.rows
        c += src.cols
    return UncertaintySet(sources=sources, row_spans=tuple(row_spans),
                          col_spans=tuple(col_spans))


def _psd_sqrt(M: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(M)
    w = np.clip(w, 0.0, None)
    return (U * np.sqrt(w)) @ U.T


def _sample_source(source: QmiSource, rng: np.random.Generator,
                   mode: str) -> np.ndarray:
    """One admissible block: ``(-Q)^-1/2 W R^1/2`` with sigma_max(W) <= 1."""
    w, U = np.linalg.eigh(-source.Q)
    if w[0] <= 1e-12 * max(1.0, w[-1]):
        raise ValueError(
            f"source {source.label!r}: Q is singular, admissible set is "
            "unbounded and cannot be sampled")
    negQ_invsqrt = (U / np.sqrt(w)) @ U.T
    R_sqrt = _psd_sqrt(source.R)
    if mode == "boundary":
        u = rng.standard_normal(source.rows)
        v = rng.standard_normal(source.cols)
        W = np.outer(u / np.linalg.norm(u), v / np.linalg.norm(v))
    elif mode == "interior":
        W = rng.standard_normal((source.rows, source.cols))
        smax = np.linalg.svd(W, compute_uv=False)[0]
        if smax > 0:
            W *= rng.uniform(0.0, 1.0) / smax
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return negQ_invsqrt @ W @ R_sqrt


def sample_delta(uset: UncertaintySet, seed, mode: str = "interior") -> np.ndarray:
    """Sample a block-diagonal admissible uncertainty value.

    ``mode="boundary"`` uses rank-one directions scaled so each block's QMI
    is tight (minimum eigenvalue zero); a fixed seed gives identical output.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return uset.embed([_sample_source(src, rng, mode) for src in uset.sources])


@dataclass(frozen=True)
class MultiplierFamily:
    """Per-source nonnegative scalings of the stacked QMI.

    For every tau >= 0 and every admissible block-diagonal delta,
    ``[delta; I]' P(tau) [delta; I] >= 0`` with P as in
    :func:`multiplier_matrix` (the S-procedure certificate family).
    """

    uset: UncertaintySet

    @property
    def n_scalars(self) -> int:
        return self.uset.n_sources


def multiplier_matrix(family: MultiplierFamily, tau) -> np.ndarray:
    """Assemble ``P(tau) = blockdiag(diag_s(tau_s Q_s), diag_s(tau_s R_s))``."""
    tau = np.asarray(tau, dtype=float).ravel()
    uset = family.uset
    if tau.size != uset.n_sources:
        raise ValueError(f"expected {uset.n_sources} scalars, got {tau.size}")
    if np.any(tau < 0):
        raise ValueError("multiplier scalars must be nonnegative")
    if not uset.sources:
        return np.zeros((0, 0))
    blocks = [t * s.Q for t, s in zip(tau, uset.sources)]
    blocks += [t * s.R for t, s in zip(tau, uset.sources)]
    return scipy.linalg.block_diag(*blocks)
