"""Conic-program data model, standard-form lowering, and pluggable solvers.

A :class:`ConicProblem` holds symmetric-matrix and nonnegative-scalar decision
variables, a linear objective, and affine LMI constraints.  :func:`lower`
turns it into the standard primal form

    minimize    c' u
    subject to  A u + s = b,   s in K,

where K is a product of a nonnegative orthant (one slot per scalar variable)
and one PSD cone per LMI constraint, in svec coordinates.  Solving is
delegated to an interior-point backend (Clarabel by default, SCS as a
fallback); statuses are normalized to ``optimal`` / ``infeasible`` /
``numerical_failure`` and never raised as solver exceptions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse

from .exceptions import EivError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"

_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# svec / smat
# ---------------------------------------------------------------------------

def svec_len(d: int) -> int:
    return d * (d + 1) // 2


def svec_side(length: int) -> int:
    """Matrix side for an svec vector of the given length."""
    d = int(round((math.sqrt(8 * length + 1) - 1) / 2))
    if svec_len(d) != length:
        raise ValueError(f"{length} is not a triangular number")
    return d


def _triu_colmajor(d: int):
    """Index arrays for the upper triangle, stacked column by column."""
    cols = np.concatenate([np.full(j + 1, j) for j in range(d)])
    rows = np.concatenate([np.arange(j + 1) for j in range(d)])
    return rows, cols


def svec(S: np.ndarray, sym_tol: float = 1e-12) -> np.ndarray:
    """Isometric vectorization of a symmetric matrix.

    Upper-triangular entries stacked column by column, off-diagonal entries
    scaled by sqrt(2), so that ``svec(S) @ svec(T) == trace(S @ T)``.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    if np.max(np.abs(S - S.T), initial=0.0) > sym_tol:
        raise ValueError("matrix is not symmetric within tolerance")
    d = S.shape[0]
    rows, cols = _triu_colmajor(d)
    scale = np.where(rows == cols, 1.0, _SQRT2)
    return S[rows, cols] * scale


def smat(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float).ravel()
    d = svec_side(v.size)
    rows, cols = _triu_colmajor(d)
    S = np.zeros((d, d))
    vals = v / np.where(rows == cols, 1.0, _SQRT2)
    S[rows, cols] = vals
    S[cols, rows] = vals
    return S


# ---------------------------------------------------------------------------
# Problem model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CongruenceTerm:
    """Contribution ``coef * W.T @ S @ W`` of a symmetric variable S."""

    coef: float
    weight: np.ndarray  # (dim(S), constraint side)


@dataclass(frozen=True)
class LmiConstraint:
    """Affine symmetric-matrix constraint ``constant + sum(terms) {nsd|psd} 0``.

    ``sym_terms`` maps a symmetric variable name to congruence terms;
    ``scalar_terms`` maps a scalar variable name to its symmetric coefficient
    matrix (contribution ``x * coeff``).
    """

    label: str
    constant: np.ndarray
    sym_terms: dict[str, tuple[CongruenceTerm, ...]] = field(default_factory=dict)
    scalar_terms: dict[str, np.ndarray] = field(default_factory=dict)
    sense: str = "nsd"  # "nsd": expression <= 0; "psd": expression >= 0

    @property
    def side(self) -> int:
        return self.constant.shape[0]


@dataclass(frozen=True)
class ConicProblem:
    """LMI-constrained program over symmetric and nonnegative scalar variables.

    The objective (to minimize) is ``sum_v trace(objective_sym[v] @ S_v)
    + sum_s objective_scalar[s] * x_s``.
    """

    sym_vars: tuple[tuple[str, int], ...]
    scalar_vars: tuple[str, ...]
    constraints: tuple[LmiConstraint, ...]
    objective_sym: dict[str, np.ndarray] = field(default_factory=dict)
    objective_scalar: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        dims = dict(self.sym_vars)
        names = set(dims) | set(self.scalar_vars)
        if len(names) != len(self.sym_vars) + len(self.scalar_vars):
            raise ValueError("duplicate variable names")
        for name in list(self.objective_sym) + list(self.objective_scalar):
            if name not in names:
                raise ValueError(f"objective references undeclared variable {name!r}")
        for con in self.constraints:
            if con.sense not in ("nsd", "psd"):
                raise ValueError(f"constraint {con.label!r}: bad sense {con.sense!r}")
            m = con.side
            if con.constant.shape != (m, m):
                raise ValueError(f"constraint {con.label!r}: constant not square")
            for name, terms in con.sym_terms.items():
                if name not in dims:
                    raise ValueError(
                        f"constraint {con.label!r} references undeclared symmetric "
                        f"variable {name!r}")
                for t in terms:
                    if t.weight.shape != (dims[name], m):
                        raise ValueError(
                            f"constraint {con.label!r}, variable {name!r}: weight "
                            f"shape {t.weight.shape} != {(dims[name], m)}")
            for name, coeff in con.scalar_terms.items():
                if name not in self.scalar_vars:
                    raise ValueError(
                        f"constraint {con.label!r} references undeclared scalar "
                        f"variable {name!r}")
                if coeff.shape != (m, m):
                    raise ValueError(
                        f"constraint {con.label!r}, scalar {name!r}: coefficient "
                        f"shape {coeff.shape} != {(m, m)}")


def evaluate_constraint(con: LmiConstraint, values: dict) -> np.ndarray:
    """Numeric value of the constraint's affine expression at given values."""
    F = np.array(con.constant, dtype=float, copy=True)
    for name, terms in con.sym_terms.items():
        S = np.asarray(values[name], dtype=float)
        for t in terms:
            F += t.coef * (t.weight.T @ S @ t.weight)
    for name, coeff in con.scalar_terms.items():
        F += float(values[name]) * coeff
    return F


# ---------------------------------------------------------------------------
# Lowering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StandardConicProgram:
    """Lowered problem: minimize c'u  s.t.  A u + s = b, s in product cone.

    Variable ordering in ``u``: scalar variables in declaration order, then
    each symmetric variable in declaration order, in svec coordinates.  Cone
    ordering in the rows of ``A``/``b``: one nonnegative cone covering all
    scalar variables, then one PSD (svec) cone per LMI constraint in
    declaration order.  ``var_index`` maps each variable name to
    ``(kind, offset, length)`` into ``u``.
    """

    c: np.ndarray
    A: sparse.csc_matrix
    b: np.ndarray
    cones: tuple[tuple[str, int], ...]
    var_index: dict[str, tuple[str, int, int]]

    @property
    def n_vars(self) -> int:
        return self.c.size

    def pack(self, values: dict) -> np.ndarray:
        u = np.zeros(self.n_vars)
        for name, (kind, off, length) in self.var_index.items():
            if kind == "scalar":
                u[off] = float(values[name])
            else:
                u[off:off + length] = svec(np.asarray(values[name]))
        return u

    def unpack(self, u: np.ndarray) -> dict:
        out = {}
        for name, (kind, off, length) in self.var_index.items():
            if kind == "scalar":
                out[name] = float(u[off])
            else:
                out[name] = smat(u[off:off + length])
        return out

    def slack(self, u: np.ndarray) -> np.ndarray:
        return self.b - self.A @ u

    def max_cone_violation(self, u: np.ndarray) -> float:
        """Largest violation of ``b - A u`` against the cone product."""
        s = self.slack(u)
        worst = 0.0
        off = 0
        for kind, size in self.cones:
            if kind == "nonneg":
                block = s[off:off + size]
                if size:
                    worst = max(worst, float(-np.min(block, initial=0.0)))
                off += size
            else:  # psd, size = matrix side
                m = svec_len(size)
                block = smat(s[off:off + m])
                worst = max(worst, float(-np.linalg.eigvalsh(block)[0]))
                off += m
        return worst

    def to_json_dict(self) -> dict:
        coo = self.A.tocoo()
        return {
            "c": self.c.tolist(),
            "b": self.b.tolist(),
            "A": {
                "shape": list(self.A.shape),
                "rows": coo.row.tolist(),
                "cols": coo.col.tolist(),
                "vals": coo.data.tolist(),
            },
            "cones": [list(c) for c in self.cones],
            "variables": {
                name: {"kind": kind, "offset": off, "length": length}
                for name, (kind, off, length) in self.var_index.items()
            },
        }

    def dump(self, path) -> None:
        """Self-describing JSON dump for cross-checking with external solvers."""
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)


def _sym_basis(d: int):
    """Orthonormal basis of S^d matching svec coordinates."""
    rows, cols = _triu_colmajor(d)
    for i, j in zip(rows, cols):
        B = np.zeros((d, d))
        if i == j:
            B[i, i] = 1.0
        else:
            B[i, j] = B[j, i] = 1.0 / _SQRT2
        yield B


def _symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def lower(problem: ConicProblem) -> StandardConicProgram:
    """Lower a :class:`ConicProblem` to standard primal conic form."""
    var_index: dict[str, tuple[str, int, int]] = {}
    off = 0
    for name in problem.scalar_vars:
        var_index[name] = ("scalar", off, 1)
        off += 1
    for name, d in problem.sym_vars:
        var_index[name] = ("symmetric", off, svec_len(d))
        off += svec_len(d)
    n_u = off

    c = np.zeros(n_u)
    for name, coeff in problem.objective_scalar.items():
        _, o, _ = var_index[name]
        c[o] = float(coeff)
    for name, C in problem.objective_sym.items():
        _, o, length = var_index[name]
        c[o:o + length] = svec(np.asarray(C, dtype=float))

    rows = []
    b_parts = []
    cones: list[tuple[str, int]] = []

    n_scalar = len(problem.scalar_vars)
    if n_scalar:
        blk = np.zeros((n_scalar, n_u))
        for i, name in enumerate(problem.scalar_vars):
            _, o, _ = var_index[name]
            blk[i, o] = -1.0
        rows.append(blk)
        b_parts.append(np.zeros(n_scalar))
        cones.append(("nonneg", n_scalar))

    sym_dims = dict(problem.sym_vars)
    for con in problem.constraints:
        m = con.side
        mlen = svec_len(m)
        K = np.zeros((mlen, n_u))
        for name, terms in con.sym_terms.items():
            _, o, _ = var_index[name]
            d = sym_dims[name]
            for k, B in enumerate(_sym_basis(d)):
                col = np.zeros((m, m))
                for t in terms:
                    col += t.coef * (t.weight.T @ B @ t.weight)
                K[:, o + k] += svec(_symmetrize(col), sym_tol=np.inf)
        for name, coeff in con.scalar_terms.items():
            _, o, _ = var_index[name]
            K[:, o] += svec(_symmetrize(coeff), sym_tol=np.inf)
        # nsd: slack = svec(-F) = svec(-constant) - K u  ->  A block = +K
        # psd: slack = svec(+F) = svec(+constant) + K u  ->  A block = -K
        const = _symmetrize(con.constant)
        if con.sense == "nsd":
            rows.append(K)
            b_parts.append(svec(-const, sym_tol=np.inf))
        else:
            rows.append(-K)
            b_parts.append(svec(const, sym_tol=np.inf))
        cones.append(("psd", m))

    A = sparse.csc_matrix(np.vstack(rows)) if rows else sparse.csc_matrix((0, n_u))
    b = np.concatenate(b_parts) if b_parts else np.zeros(0)
    return StandardConicProgram(c=c, A=A, b=b, cones=tuple(cones),
                                var_index=var_index)


# ---------------------------------------------------------------------------
# Solution and backends
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Solution:
    """Solver output in problem (named-variable) coordinates."""

    status: str
    values: dict | None
    objective: float | None
    primal_residual: float
    iterations: int
    solve_time: float
    backend: str = ""


class ClarabelBackend:
    """Interior-point backend via the Clarabel conic solver."""

    name = "clarabel"

    def solve_lowered(self, prog: StandardConicProgram, tol: float,
                      max_iter: int):
        import clarabel

        cones = []
        for kind, size in prog.cones:
            if kind == "nonneg":
                cones.append(clarabel.NonnegativeConeT(size))
            else:
                cones.append(clarabel.PSDTriangleConeT(size))
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.max_iter = max_iter
        settings.max_threads = 1  # reproducible reductions
        settings.tol_feas = tol
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol
        P = sparse.csc_matrix((prog.n_vars, prog.n_vars))
        solver = clarabel.DefaultSolver(P, prog.c, prog.A, prog.b, cones,
                                        settings)
        sol = solver.solve()
        status = str(sol.status)
        if status == "Solved":
            mapped = OPTIMAL
        elif status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            mapped = INFEASIBLE
        else:
            mapped = NUMERICAL_FAILURE
        x = np.asarray(sol.x) if mapped == OPTIMAL else None
        return mapped, x, float(sol.obj_val), int(sol.iterations), float(sol.solve_time)


class ScsBackend:
    """First-order backend via SCS (fallback; looser accuracy than Clarabel)."""

    name = "scs"

    def solve_lowered(self, prog: StandardConicProgram, tol: float,
                      max_iter: int):
        import scs

        # SCS expects nonneg rows first, PSD cones in *lower*-triangular
        # column-major svec order; ours is upper-triangular column-major.
        perm = []
        off = 0
        psd_sides = []
        for kind, size in prog.cones:
            if kind == "nonneg":
                perm.extend(range(off, off + size))
                off += size
            else:
                d = size
                psd_sides.append(d)
                rows_u, cols_u = _triu_colmajor(d)
                pos = {(i, j): k for k, (i, j) in enumerate(zip(rows_u, cols_u))}
                for a in range(d):          # lower triangle, column-major
                    for bb in range(a, d):
                        perm.append(off + pos[(a, bb)])
                off += svec_len(d)
        perm = np.asarray(perm)
        A = prog.A.tocsr()[perm].tocsc()
        b = prog.b[perm]
        n_nonneg = sum(s for k, s in prog.cones if k == "nonneg")
        data = {"A": A, "b": b, "c": prog.c}
        cone = {"l": n_nonneg, "s": psd_sides}
        solver = scs.SCS(data, cone, verbose=False, eps_abs=tol, eps_rel=tol,
                         max_iters=max(max_iter, 2500))
        out = solver.solve()
        status = out["info"]["status"]
        if status in ("solved", "solved (inaccurate - reached max_iters)"):
            mapped = OPTIMAL if status == "solved" else NUMERICAL_FAILURE
        elif "infeasible" in status:
            mapped = INFEASIBLE
        else:
            mapped = NUMERICAL_FAILURE
        x = np.asarray(out["x"]) if mapped == OPTIMAL else None
        obj = float(out["info"]["pobj"])
        iters = int(out["info"]["iter"])
        t = float(out["info"]["solve_time"]) * 1e-3
        return mapped, x, obj, iters, t


_DEFAULT_BACKEND = None


def default_backend():
    global _DEFAULT_BACKEND
    if _DEFAULT_BACKEND is None:
        try:
            import clarabel  # noqa: F401
            _DEFAULT_BACKEND = ClarabelBackend()
        except ImportError:
            _DEFAULT_BACKEND = ScsBackend()
    return _DEFAULT_BACKEND


def solve(program, backend=None, tol: float = 1e-8,
          max_iter: int = 200) -> Solution:
    """Solve a :class:`ConicProblem` or lowered :class:`StandardConicProgram`.

    Returns a :class:`Solution`; solver breakdowns are reported as status
    ``numerical_failure``, never raised.  The primal residual is recomputed
    from the lowered data, independent of the backend's own report.
    """
    if isinstance(program, ConicProblem):
        prog = lower(program)
    elif isinstance(program, StandardConicProgram):
        prog = program
    else:
        raise TypeError(f"cannot solve object of type {type(program).__name__}")
    backend = backend or default_backend()
    try:
        status, x, obj, iters, t = backend.solve_lowered(prog, tol, max_iter)
    except EivError:
        raise
    except Exception:
        return Solution(status=NUMERICAL_FAILURE, values=None, objective=None,
                        primal_residual=float("inf"), iterations=0,
                        solve_time=0.0, backend=backend.name)
    if status != OPTIMAL or x is None:
        return Solution(status=status, values=None, objective=None,
                        primal_residual=float("inf"), iterations=iters,
                        solve_time=t, backend=backend.name)
    residual = prog.max_cone_violation(x)
    return Solution(status=OPTIMAL, values=prog.unpack(x),
                    objective=float(prog.c @ x), primal_residual=residual,
                    iterations=iters, solve_time=t, backend=backend.name)
