import json

import numpy as np
import pytest

from eivh2 import sdp
from eivh2.sdp import (ClarabelBackend, ConicProblem, CongruenceTerm,
                       LmiConstraint, ScsBackend, lower, smat, solve, svec)


def random_symmetric(rng, d):
    M = rng.standard_normal((d, d))
    return M + M.T


class TestSvecSmat:
    def test_identity_2x2(self):
        np.testing.assert_allclose(svec(np.eye(2)), [1.0, 0.0, 1.0])

    def test_offdiagonal_scaling(self):
        np.testing.assert_allclose(svec(np.array([[0.0, 1.0], [1.0, 0.0]])),
                                   [0.0, np.sqrt(2.0), 0.0])

    def test_smat_inverts(self):
        np.testing.assert_allclose(smat(np.array([1.0, 0.0, 1.0])), np.eye(2))
        np.testing.assert_allclose(smat(np.zeros(6)), np.zeros((3, 3)))

    def test_round_trip_and_isometry(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            d = rng.integers(1, 31)
            S = random_symmetric(rng, d)
            T = random_symmetric(rng, d)
            assert np.max(np.abs(smat(svec(S)) - S)) <= 1e-12
            assert abs(svec(S) @ svec(T) - np.trace(S @ T)) \
                <= 1e-12 * max(1.0, abs(np.trace(S @ T)))

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            svec(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_bad_length_rejected(self):
        with pytest.raises(ValueError):
            smat(np.zeros(4))


def scalar_min_problem():
    # minimize t  s.t.  t*I2 >= I2, t >= 0
    return ConicProblem(
        sym_vars=(),
        scalar_vars=("t",),
        constraints=(LmiConstraint(label="bound",
                                   constant=-np.eye(2),
                                   scalar_terms={"t": np.eye(2)},
                                   sense="psd"),),
        objective_scalar={"t": 1.0})


def infeasible_problem():
    # -I >= eps*I can never hold
    return ConicProblem(
        sym_vars=(),
        scalar_vars=("t",),
        constraints=(LmiConstraint(label="impossible",
                                   constant=-(1 + 1e-7) * np.eye(2),
                                   scalar_terms={"t": np.zeros((2, 2))},
                                   sense="psd"),),
        objective_scalar={"t": 1.0})


def lyapunov_scalar_problem(a=0.5, eps=1e-6):
    # x*(a^2 - 1) <= -eps, x >= eps, for the stable scalar system
    return ConicProblem(
        sym_vars=(("x", 1),),
        scalar_vars=(),
        constraints=(
            LmiConstraint(label="decay",
                          constant=eps * np.eye(1),
                          sym_terms={"x": (CongruenceTerm(a ** 2 - 1.0, np.eye(1)),)},
                          sense="nsd"),
            LmiConstraint(label="pos",
                          constant=eps * np.eye(1),
                          sym_terms={"x": (CongruenceTerm(-1.0, np.eye(1)),)},
                          sense="nsd"),
        ),
        objective_sym={"x": np.eye(1)})


class TestLowering:
    def test_scalar_objective_lowering(self):
        prog = lower(ConicProblem(sym_vars=(), scalar_vars=("t",),
                                  constraints=(), objective_scalar={"t": 1.0}))
        assert prog.cones == (("nonneg", 1),)
        np.testing.assert_allclose(prog.c, [1.0])

    def test_variable_ordering_documented(self):
        problem = ConicProblem(
            sym_vars=(("S", 2),), scalar_vars=("a", "b"),
            constraints=(), objective_scalar={"a": 1.0})
        prog = lower(problem)
        assert prog.var_index["a"] == ("scalar", 0, 1)
        assert prog.var_index["b"] == ("scalar", 1, 1)
        assert prog.var_index["S"] == ("symmetric", 2, 3)

    def test_pack_unpack_round_trip(self):
        problem = lyapunov_scalar_problem()
        prog = lower(problem)
        values = {"x": np.array([[3.25]])}
        recovered = prog.unpack(prog.pack(values))
        np.testing.assert_allclose(recovered["x"], values["x"])

    def test_feasible_point_maps_to_cone_feasible(self):
        # X = 2I satisfies I - X <= 0; its slack must lie in the cones
        problem = ConicProblem(
            sym_vars=(("X", 3),), scalar_vars=("t",),
            constraints=(LmiConstraint(
                label="lower", constant=np.eye(3),
                sym_terms={"X": (CongruenceTerm(-1.0, np.eye(3)),)},
                sense="nsd"),),
            objective_sym={"X": np.eye(3)})
        prog = lower(problem)
        u = prog.pack({"X": 2.0 * np.eye(3), "t": 0.5})
        assert prog.max_cone_violation(u) <= 1e-9

    def test_congruence_term_lowering_matches_evaluation(self):
        rng = np.random.default_rng(3)
        W = rng.standard_normal((3, 4))
        con = LmiConstraint(label="c", constant=random_symmetric(rng, 4),
                            sym_terms={"S": (CongruenceTerm(0.7, W),)},
                            sense="nsd")
        problem = ConicProblem(sym_vars=(("S", 3),), scalar_vars=(),
                               constraints=(con,), objective_sym={"S": np.eye(3)})
        prog = lower(problem)
        S = random_symmetric(rng, 3)
        u = prog.pack({"S": S})
        slack = prog.slack(u)
        F = sdp.evaluate_constraint(con, {"S": S})
        np.testing.assert_allclose(smat(slack), -F, atol=1e-12)

    def test_dimension_validation(self):
        with pytest.raises(ValueError):
            ConicProblem(sym_vars=(("S", 2),), scalar_vars=(),
                         constraints=(LmiConstraint(
                             label="bad", constant=np.eye(3),
                             sym_terms={"S": (CongruenceTerm(1.0, np.eye(2)),)}),),
                         objective_sym={})
        with pytest.raises(ValueError):
            ConicProblem(sym_vars=(), scalar_vars=(),
                         constraints=(), objective_scalar={"ghost": 1.0})


BACKENDS = [ClarabelBackend(), ScsBackend()]
TOLS = {"clarabel": 1e-9, "scs": 1e-5}


class TestSolve:
    @pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.name)
    def test_scalar_min(self, backend):
        sol = solve(scalar_min_problem(), backend=backend)
        assert sol.status == "optimal"
        assert abs(sol.values["t"] - 1.0) <= 100 * TOLS[backend.name]
        assert sol.primal_residual <= 1e-6

    @pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.name)
    def test_infeasible(self, backend):
        sol = solve(infeasible_problem(), backend=backend)
        assert sol.status == "infeasible"
        assert sol.values is None

    def test_lyapunov_scalar_feasible(self):
        sol = solve(lyapunov_scalar_problem())
        assert sol.status == "optimal"
        assert sol.values["x"][0, 0] > 0

    def test_determinism(self):
        problem = scalar_min_problem()
        a = solve(problem)
        b = solve(problem)
        assert a.status == b.status
        assert abs(a.objective - b.objective) <= 1e-9

    def test_solver_exception_is_numerical_failure(self):
        class Broken:
            name = "broken"

            def solve_lowered(self, prog, tol, max_iter):
                raise RuntimeError("boom")

        sol = solve(scalar_min_problem(), backend=Broken())
        assert sol.status == "numerical_failure"

    def test_dump_is_self_describing(self, tmp_path):
        prog = lower(lyapunov_scalar_problem())
        path = tmp_path / "program.json"
        prog.dump(path)
        payload = json.loads(path.read_text())
        assert payload["cones"] == [["psd", 1], ["psd", 1]]
        assert len(payload["c"]) == prog.n_vars
        assert payload["A"]["shape"] == list(prog.A.shape)
