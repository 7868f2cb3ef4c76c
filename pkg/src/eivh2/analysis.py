"""Robust H2 analysis from noisy state/output data.

Pipeline: stack the measured trajectory into one errors-in-variables
regression whose unknown parameter contains all system matrices, wrap every
consistent system into a single LFT via a right inverse of the regressor,
then certify an H2 upper bound valid for the whole consistent set (hence for
the true system) by solving one SDP with per-source QMI multipliers.  The
SDP size is independent of the data length once the uncertainty columns are
reduced.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import sdp
from .data import NoiseBounds, NoisyDataset, matrix_from_json, matrix_to_json
from .exceptions import WellPosednessError
from .lti import h2_norm, spectral_radius
from .regression import (RANK_RTOL, StructuredRegression, build_lft,
                         right_inverse_weighted)
from .uncertainty import (MultiplierFamily, QmiSource, UncertaintySet,
                          sample_delta, scalar_interval, spectral_ball,
                          stack_sources)

DEFAULT_EPS = 1e-7


def build_analysis_regression(dataset: NoisyDataset, Bd, bounds: NoiseBounds):
    """Stack measured data into the regression ``Ybar = Theta Xbar + noise``.

    Regressor ``[X; Wp]``, regressand ``[X+; Zp]``; the state-measurement
    noise enters the regressor through ``L1 = [I; 0]`` (inputs are known
    exactly), while the regressand collects the shifted state noise, the
    output noise, and the constant disturbance through ``Bd``.  Spectral
    noise bounds scale per-instant radii by sqrt(N-1).

    Returns ``(reg, uset)`` with source order (V_X, V_X+, V_Zp, d).
    """
    n, m_p, p_p = dataset.n, dataset.m_p, dataset.p_p
    N = dataset.n_samples
    n_min = n + m_p + 1
    if N < n_min:
        raise ValueError(
            f"need at least N = {n_min} state samples for n = {n}, "
            f"m_p = {m_p}; got {N}")
    if Bd is None:
        Bd = np.zeros((n, 0))
    Bd = np.atleast_2d(np.asarray(Bd, dtype=float))
    if Bd.shape[0] != n:
        raise ValueError(f"Bd must have {n} rows, got {Bd.shape[0]}")
    m_d = Bd.shape[1]
    T = N - 1  # data-matrix columns

    X = dataset.states[:, :T]
    Xp = dataset.states[:, 1:]
    regressor = np.vstack([X, dataset.inputs])
    regressand = np.vstack([Xp, dataset.outputs])

    scale = np.sqrt(T)
    sources = [
        spectral_ball("V_X", n, T, bounds.v_x * scale),
        spectral_ball("V_X+", n, T, bounds.v_x * scale),
        spectral_ball("V_Zp", p_p, T, bounds.v_zp * scale),
    ]
    L1 = np.vstack([np.eye(n), np.zeros((m_p, n))])
    R1 = np.eye(T)
    L2_blocks = [np.vstack([np.eye(n), np.zeros((p_p, n))]),
                 np.vstack([np.zeros((n, p_p)), np.eye(p_p)])]
    R2_blocks = [np.eye(T), np.eye(T)]
    if m_d > 0:
        if m_d == 1:
            sources.append(scalar_interval("d", bounds.d_bar))
        else:
            # constant disturbance vector in the box [-d_bar, d_bar]^m_d
            sources.append(spectral_ball("d", m_d, 1,
                                         bounds.d_bar * np.sqrt(m_d)))
        L2_blocks.append(np.vstack([Bd, np.zeros((p_p, m_d))]))
        R2_blocks.append(np.ones((1, T)))
    L2 = np.hstack(L2_blocks)
    R2 = np.vstack(R2_blocks)
    reg = StructuredRegression(Y=regressand, X=regressor, L1=L1, R1=R1,
                               L2=L2, R2=R2)
    return reg, stack_sources(sources)


def analysis_weight_matrix(reg: StructuredRegression,
                           uset: UncertaintySet) -> np.ndarray:
    """Weight ``[R1; R2]' diag(R_source) [R1; R2]`` for the weighted inverse.

    Source order must match :func:`build_analysis_regression`: the first
    source weights the R1 rows, the remaining sources the R2 row blocks.
    """
    W = reg.R1.T @ uset.sources[0].R @ reg.R1
    r = 0
    for src in uset.sources[1:]:
        rows = reg.R2[r:r + src.cols]
        W = W + rows.T @ src.R @ rows
        r += src.cols
    if r != reg.R2.shape[0]:
        raise ValueError("source columns do not cover the R2 rows")
    return W


def weighted_right_inverse(reg: StructuredRegression,
                           uset: UncertaintySet) -> np.ndarray:
    """The right inverse minimizing the mapped uncertainty volume."""
    return right_inverse_weighted(reg.X, analysis_weight_matrix(reg, uset))


@dataclass(frozen=True)
class AnalysisLft:
    """Partitioned LFT of all data-consistent systems.

    State/performance channel ``(A, B1, C1, D1)``, uncertainty input ``B2`` /
    ``D12``, uncertainty output ``(C2, D21, D2)``; at delta = 0 the nominal
    quadruple is the partition of ``Ybar @ G``.
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    D1: np.ndarray
    D12: np.ndarray
    C2: np.ndarray
    D21: np.ndarray
    D2: np.ndarray
    uncertainty: UncertaintySet
    G: np.ndarray
    reduction_log: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m_p(self) -> int:
        return self.B1.shape[1]

    @property
    def p_p(self) -> int:
        return self.C1.shape[0]

    @property
    def w_dim(self) -> int:
        return self.B2.shape[1]

    @property
    def z_dim(self) -> int:
        return self.C2.shape[0]

    def close(self, delta: np.ndarray, cond_limit: float = 1e12):
        """Closed-loop quadruple ``(A, B1, C1, D1)`` at a frozen uncertainty."""
        if self.z_dim == 0:
            return self.A, self.B1, self.C1, self.D1
        delta = np.atleast_2d(np.asarray(delta, dtype=float))
        F = np.eye(self.z_dim) - self.D2 @ delta
        cond = np.linalg.cond(F)
        if not np.isfinite(cond) or cond > cond_limit:
            raise WellPosednessError(
                f"I - D2 delta is numerically singular (cond = {cond:.3e})",
                cond=float(cond))
        K = delta @ np.linalg.solve(F, np.hstack([self.C2, self.D21]))
        Kx, Kw = K[:, :self.n], K[:, self.n:]
        return (self.A + self.B2 @ Kx, self.B1 + self.B2 @ Kw,
                self.C1 + self.D12 @ Kx, self.D1 + self.D12 @ Kw)


def assemble_analysis_lft(reg: StructuredRegression, uset: UncertaintySet,
                          G: np.ndarray, reduce: bool = True) -> AnalysisLft:
    """Partition the consistent-set regression LFT into analysis form.

    Two exact rewrites keep the SDP small and well conditioned:

    - point-set sources (R exactly zero, admissible set {0}) contribute
      nothing to any closure, so their channels are dropped entirely;
      keeping them would leave the multiplier scalars unbounded at the
      optimum and wreck interior-point accuracy;
    - with ``reduce`` enabled, every remaining source with more than
      ``n + m_p`` columns whose channel factor ``E_s = (R rows) @ G`` has
      full column rank is rewritten against the shared reduced channel
      ``xbar + L1 w1`` with its QMI columns shrunk to ``n + m_p`` (an exact
      set equality); sources failing the rank test fall back to the
      unreduced channel.

    Both actions are noted in the reduction log.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n = reg.L1.shape[1]
    n_xbar = reg.X.shape[0]       # n + m_p
    m_p = n_xbar - n
    p_p = reg.p - n
    if m_p < 0 or p_p < 0:
        raise ValueError("regression does not have analysis structure")
    lft = build_lft(reg, G, tol=1e-8)

    YG = lft.block("y", "x")
    A, B1 = YG[:n, :n], YG[:n, n:]
    C1, D1 = YG[n:, :n], YG[n:, n:]
    Bw = np.hstack([lft.block("y", "w1"), lft.block("y", "w2")])

    # Stacked uncertainty channel: z = Rbar G (xbar + L1 w1), per source rows.
    RbarG = np.vstack([reg.R1 @ G, reg.R2 @ G])

    new_sources: list[QmiSource] = []
    factors = []  # channel factor F_s with z_s = F_s (xbar + L1 w1)
    kept = []
    log = []
    for src, (c0, c1) in zip(uset.sources, uset.col_spans):
        if np.all(src.R == 0.0):
            kept.append(False)
            log.append(f"{src.label}: dropped (admissible set is {{0}})")
            continue
        kept.append(True)
        E = RbarG[c0:c1, :]
        reduced = None
        if reduce and src.cols > n_xbar:
            s = np.linalg.svd(E, compute_uv=False)
            if s[-1] > RANK_RTOL * s[0]:
                R_new = E.T @ src.R @ E
                R_new = 0.5 * (R_new + R_new.T)
                if np.linalg.eigvalsh(R_new)[0] > 0:
                    reduced = QmiSource(label=src.label, Q=src.Q, R=R_new)
        if reduced is not None:
            new_sources.append(reduced)
            factors.append(np.eye(n_xbar))
            log.append(f"{src.label}: reduced {src.cols} -> {n_xbar} columns")
        else:
            new_sources.append(src)
            factors.append(E)
            if reduce and src.cols > n_xbar:
                log.append(f"{src.label}: kept {src.cols} columns "
                           "(reduction matrix rank-deficient)")
            else:
                log.append(f"{src.label}: kept {src.cols} columns")

    # w layout over the kept sources only
    w_cols = [np.arange(r0, r1)
              for flag, (r0, r1) in zip(kept, uset.row_spans) if flag]
    w_sel = np.concatenate(w_cols) if w_cols else np.zeros(0, dtype=int)
    B2, D12 = Bw[:n][:, w_sel], Bw[n:][:, w_sel]
    w_dim = w_sel.size

    # regressor-noise feedback (first source) survives only if kept
    w1_width = uset.sources[0].rows if kept[0] else 0
    c2_rows, d21_rows, d2_rows = [], [], []
    for F in factors:
        c2_rows.append(F[:, :n])
        d21_rows.append(F[:, n:])
        d2 = np.zeros((F.shape[0], w_dim))
        if w1_width:
            d2[:, :w1_width] = F @ reg.L1
        d2_rows.append(d2)

    row_spans, col_spans = [], []
    r = c = 0
    for src in new_sources:
        row_spans.append((r, r + src.rows))
        col_spans.append((c, c + src.cols))
        r += src.rows
        c += src.cols
    new_uset = UncertaintySet(sources=tuple(new_sources),
                              row_spans=tuple(row_spans),
                              col_spans=tuple(col_spans))

    def stack(blocks, width):
        return np.vstack(blocks) if blocks else np.zeros((0, width))

    return AnalysisLft(A=A, B1=B1, B2=B2, C1=C1, D1=D1, D12=D12,
                       C2=stack(c2_rows, n), D21=stack(d21_rows, m_p),
                       D2=stack(d2_rows, w_dim), uncertainty=new_uset, G=G,
                       reduction_log=tuple(log))


def _multiplier_coeff(src: QmiSource, w_rows: np.ndarray,
                      z_rows: np.ndarray) -> np.ndarray:
    M = w_rows.T @ src.Q @ w_rows + z_rows.T @ src.R @ z_rows
    return 0.5 * (M + M.T)


def assemble_h2_sdp(lft: AnalysisLft, family: MultiplierFamily,
                    eps: float = DEFAULT_EPS) -> sdp.ConicProblem:
    """Emit the robust-H2 feasibility/minimization SDP.

    Decision variables: Lyapunov matrix X > 0, output-energy bound Z > 0,
    and one nonnegative multiplier scalar per source and per LMI.  Minimizes
    trace(Z); the certified bound is ``sqrt(trace(Z))``.  Strict inequalities
    are implemented with margin ``eps``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    uset = family.uset
    n, m_p, w_dim, z_dim = lft.n, lft.m_p, lft.w_dim, lft.z_dim
    if uset.w_dim != w_dim or uset.z_dim != z_dim:
        raise ValueError("multiplier family does not match the LFT dimensions")

    side1 = n + w_dim
    side2 = w_dim + m_p

    # LMI 1 outer factors over (x, w)
    top1 = np.hstack([np.eye(n), np.zeros((n, w_dim))])
    dyn1 = np.hstack([lft.A, lft.B2])
    wsel1 = np.hstack([np.zeros((w_dim, n)), np.eye(w_dim)])
    zmap1 = np.hstack([lft.C2, lft.D2])
    perf1 = np.hstack([lft.C1, lft.D12])

    # LMI 2 outer factors over (w, wp)
    wpsel2 = np.hstack([np.zeros((m_p, w_dim)), np.eye(m_p)])
    dyn2 = np.hstack([lft.B2, lft.B1])
    wsel2 = np.hstack([np.eye(w_dim), np.zeros((w_dim, m_p))])
    zmap2 = np.hstack([lft.D2, lft.D21])
    perf2 = np.hstack([lft.D12, lft.D1])

    tau1 = tuple(f"tau1_{i}" for i in range(uset.n_sources))
    tau2 = tuple(f"tau2_{i}" for i in range(uset.n_sources))

    lmi1_scalars = {}
    lmi2_scalars = {}
    for i, (src, (r0, r1), (c0, c1)) in enumerate(
            zip(uset.sources, uset.row_spans, uset.col_spans)):
        lmi1_scalars[tau1[i]] = _multiplier_coeff(src, wsel1[r0:r1],
                                                  zmap1[c0:c1])
        lmi2_scalars[tau2[i]] = _multiplier_coeff(src, wsel2[r0:r1],
                                                  zmap2[c0:c1])

    constraints = (
        sdp.LmiConstraint(
            label="X_pd",
            constant=eps * np.eye(n),
            sym_terms={"X": (sdp.CongruenceTerm(-1.0, np.eye(n)),)}),
        sdp.LmiConstraint(
            label="Z_pd",
            constant=eps * np.eye(m_p),
            sym_terms={"Z": (sdp.CongruenceTerm(-1.0, np.eye(m_p)),)}),
        sdp.LmiConstraint(
            label="lmi1",
            constant=perf1.T @ perf1 + eps * np.eye(side1),
            sym_terms={"X": (sdp.CongruenceTerm(-1.0, top1),
                             sdp.CongruenceTerm(1.0, dyn1))},
            scalar_terms=lmi1_scalars),
        sdp.LmiConstraint(
            label="lmi2",
            constant=perf2.T @ perf2 + eps * np.eye(side2),
            sym_terms={"Z": (sdp.CongruenceTerm(-1.0, wpsel2),),
                       "X": (sdp.CongruenceTerm(1.0, dyn2),)},
            scalar_terms=lmi2_scalars),
    )
    return sdp.ConicProblem(
        sym_vars=(("X", n), ("Z", m_p)),
        scalar_vars=tau1 + tau2,
        constraints=constraints,
        objective_sym={"Z": np.eye(m_p)},
    )


@dataclass(frozen=True)
class H2Certificate:
    """Solved robust-H2 bound with the certifying variables."""

    status: str
    gamma: float | None
    X_lyap: np.ndarray | None
    Z: np.ndarray | None
    tau1: np.ndarray | None
    tau2: np.ndarray | None
    solve_time: float
    eps: float = DEFAULT_EPS

    def to_json_dict(self) -> dict:
        def mat(M):
            return None if M is None else matrix_to_json(M)

        return {
            "status": self.status,
            "gamma": self.gamma,
            "X_lyap": mat(self.X_lyap),
            "Z": mat(self.Z),
            "tau1": None if self.tau1 is None else self.tau1.tolist(),
            "tau2": None if self.tau2 is None else self.tau2.tolist(),
            "solve_time": self.solve_time,
            "eps": self.eps,
        }

    @classmethod
    def from_json_dict(cls, obj) -> "H2Certificate":
        def mat(o):
            return None if o is None else matrix_from_json(o)

        def vec(o):
            return None if o is None else np.asarray(o, dtype=float)

        return cls(status=obj["status"], gamma=obj["gamma"],
                   X_lyap=mat(obj["X_lyap"]), Z=mat(obj["Z"]),
                   tau1=vec(obj["tau1"]), tau2=vec(obj["tau2"]),
                   solve_time=obj["solve_time"], eps=obj.get("eps", DEFAULT_EPS))


def solve_h2_bound(problem: sdp.ConicProblem, backend=None, tol: float = 1e-8,
                   max_iter: int = 200, eps: float = DEFAULT_EPS) -> H2Certificate:
    """Solve the assembled SDP and package the certificate.

    Status ``optimal`` reports ``gamma = sqrt(trace(Z))``; infeasibility and
    numerical breakdown are first-class outcomes, never fabricated bounds.
    """
    t0 = time.perf_counter()
    sol = sdp.solve(problem, backend=backend, tol=tol, max_iter=max_iter)
    elapsed = time.perf_counter() - t0
    if sol.status != sdp.OPTIMAL:
        return H2Certificate(status=sol.status, gamma=None, X_lyap=None,
                             Z=None, tau1=None, tau2=None,
                             solve_time=elapsed, eps=eps)
    values = sol.values
    n_tau = sum(1 for name in values if name.startswith("tau1_"))
    tau1 = np.array([values[f"tau1_{i}"] for i in range(n_tau)])
    tau2 = np.array([values[f"tau2_{i}"] for i in range(n_tau)])
    Z = values["Z"]
    gamma = float(np.sqrt(max(np.trace(Z), 0.0)))
    return H2Certificate(status=sdp.OPTIMAL, gamma=gamma,
                         X_lyap=values["X"], Z=Z, tau1=tau1, tau2=tau2,
                         solve_time=elapsed, eps=eps)


@dataclass(frozen=True)
class VerificationReport:
    """A-posteriori plug-back and sampling validation of a certificate."""

    ok: bool
    lmi1_max_eig: float
    lmi2_max_eig: float
    x_min_eig: float
    z_min_eig: float
    n_samples: int
    worst_h2_ratio: float
    worst_cond: float
    violations: tuple[str, ...]


def verify_certificate(lft: AnalysisLft, cert: H2Certificate,
                       n_samples: int = 100, seed: int = 0,
                       cond_limit: float = 1e12) -> VerificationReport:
    """Re-check an optimal certificate against the LMIs and sampled deltas.

    Plugs the solution back into both LMIs (max eigenvalue must stay below
    ``-eps/2``), then closes the LFT at sampled admissible uncertainties
    (interior and boundary, always including delta = 0) and checks
    well-posedness, stability, and ``H2(delta) <= gamma * (1 + 1e-6)``.
    """
    if cert.status != sdp.OPTIMAL:
        raise ValueError("verification requires an optimal certificate")
    eps = cert.eps
    violations = []

    problem = assemble_h2_sdp(lft, MultiplierFamily(lft.uncertainty), eps=eps)
    values = {"X": cert.X_lyap, "Z": cert.Z}
    values.update({f"tau1_{i}": v for i, v in enumerate(cert.tau1)})
    values.update({f"tau2_{i}": v for i, v in enumerate(cert.tau2)})
    lmi_eigs = {}
    for con in problem.constraints:
        if con.label in ("lmi1", "lmi2"):
            F = sdp.evaluate_constraint(con, values) - eps * np.eye(con.side)
            lmi_eigs[con.label] = float(np.linalg.eigvalsh(F)[-1])
    for label, eig in lmi_eigs.items():
        if eig > -eps / 2:
            violations.append(f"{label} max eigenvalue {eig:.3e} > -eps/2")

    x_min = float(np.linalg.eigvalsh(cert.X_lyap)[0])
    z_min = float(np.linalg.eigvalsh(cert.Z)[0])
    if x_min <= 0:
        violations.append(f"X_lyap not positive definite (min eig {x_min:.3e})")
    if z_min <= 0:
        violations.append(f"Z not positive definite (min eig {z_min:.3e})")

    rng = np.random.default_rng(seed)
    gamma = cert.gamma
    worst_ratio = 0.0
    worst_cond = 1.0
    deltas = [np.zeros((lft.w_dim, lft.z_dim))]
    for i in range(n_samples - 1):
        mode = "boundary" if i % 2 else "interior"
        deltas.append(sample_delta(lft.uncertainty, rng, mode=mode))
    for idx, delta in enumerate(deltas):
        F = np.eye(lft.z_dim) - lft.D2 @ delta
        cond = float(np.linalg.cond(F)) if lft.z_dim else 1.0
        worst_cond = max(worst_cond, cond)
        if not np.isfinite(cond) or cond > cond_limit:
            violations.append(f"sample {idx}: ill-posed closure (cond {cond:.3e})")
            continue
        Acl, B1cl, C1cl, D1cl = lft.close(delta, cond_limit=cond_limit)
        rho = spectral_radius(Acl)
        if rho >= 1.0:
            violations.append(f"sample {idx}: closed loop unstable (rho {rho:.6f})")
            continue
        try:
            h2 = h2_norm(Acl, B1cl, C1cl, D1cl)
        except ArithmeticError as exc:
            violations.append(f"sample {idx}: H2 evaluation failed ({exc})")
            continue
        ratio = h2 / gamma if gamma > 0 else np.inf
        worst_ratio = max(worst_ratio, ratio)
        if h2 > gamma * (1 + 1e-6):
            violations.append(
                f"sample {idx}: closed-loop H2 {h2:.6f} exceeds gamma {gamma:.6f}")

    return VerificationReport(
        ok=not violations,
        lmi1_max_eig=lmi_eigs["lmi1"],
        lmi2_max_eig=lmi_eigs["lmi2"],
        x_min_eig=x_min,
        z_min_eig=z_min,
        n_samples=len(deltas),
        worst_h2_ratio=worst_ratio,
        worst_cond=worst_cond,
        violations=tuple(violations),
    )
