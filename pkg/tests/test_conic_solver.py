"""Solver-facing tests: fixed tiny fixtures with known answers, adapter
conformance between the embedded interior-point backend and the HiGHS
wrapper, weak duality on reported multipliers, and determinism."""

import numpy as np
import pytest

from drssd.conic import ConicProgram, SocRow, solve
from drssd.conic.backends import DEFAULT_TOLS, SolverError, adapter_solve


def simplex_lp():
    # min -x1 - 2 x2  s.t.  x1 + x2 <= 1, x >= 0   -> -2 at (0, 1)
    return ConicProgram(
        c=np.array([-1.0, -2.0]),
        a_in=np.array([[1.0, 1.0]]),
        b_in=np.array([1.0]),
        lb=np.zeros(2),
    )


class TestFixedAnswers:
    def test_single_variable_bound(self):
        p = ConicProgram(c=np.array([1.0]), lb=np.array([1.0]), ub=np.array([3.0]))
        r = solve(p)
        assert r.status == "optimal"
        assert r.obj == pytest.approx(1.0, abs=1e-8)
        assert r.x[0] == pytest.approx(1.0, abs=1e-7)

    def test_norm_epigraph(self):
        # min t  s.t.  ||(3, 4)|| <= t   -> 5
        p = ConicProgram(
            c=np.array([1.0]),
            socs=[SocRow(F=np.zeros((2, 1)), g=np.array([3.0, 4.0]), a=np.array([1.0]), b=0.0)],
        )
        r = solve(p)
        assert r.status == "optimal"
        assert r.obj == pytest.approx(5.0, abs=1e-7)

    def test_simplex_lp_with_duals(self):
        r = solve(simplex_lp())
        assert r.status == "optimal"
        assert r.obj == pytest.approx(-2.0, abs=1e-8)
        np.testing.assert_allclose(r.x, [0.0, 1.0], atol=1e-6)
        np.testing.assert_allclose(r.z_in, [2.0], atol=1e-6)

    def test_infeasible_certificate(self):
        p = ConicProgram(
            c=np.array([0.0]),
            a_in=np.array([[1.0], [-1.0]]),
            b_in=np.array([-1.0, -1.0]),  # x <= -1 and x >= 1
        )
        assert solve(p).status == "infeasible"

    def test_unbounded_certificate(self):
        p = ConicProgram(c=np.array([-1.0]), lb=np.array([0.0]))
        assert solve(p).status == "unbounded"

    def test_rotated_distance_socp(self):
        # min ||x - (1, 1)||  s.t.  x1 + x2 <= 1   -> distance 1/sqrt(2)
        p = ConicProgram(
            c=np.array([0.0, 0.0, 1.0]),
            a_in=np.array([[1.0, 1.0, 0.0]]),
            b_in=np.array([1.0]),
            socs=[
                SocRow(
                    F=np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
                    g=np.array([-1.0, -1.0]),
                    a=np.array([0.0, 0.0, 1.0]),
                    b=0.0,
                )
            ],
        )
        r = solve(p)
        assert r.status == "optimal"
        assert r.obj == pytest.approx(np.sqrt(0.5), abs=1e-7)


class TestSolveContract:
    def test_weak_duality_on_gap(self):
        r = solve(simplex_lp())
        assert r.residuals["gap"] <= 1e-8

    def test_determinism(self):
        p = simplex_lp()
        r1, r2 = solve(p), solve(p)
        assert r1.status == r2.status
        assert r1.obj == r2.obj
        np.testing.assert_array_equal(r1.x, r2.x)
        assert r1.iterations == r2.iterations

    def test_objective_scaling_invariance(self):
        rng = np.random.default_rng(7)
        A = rng.normal(size=(4, 3))
        p1 = ConicProgram(c=rng.normal(size=3), a_in=A, b_in=rng.normal(size=4) + 2.0,
                          lb=np.full(3, -4.0), ub=np.full(3, 4.0))
        p2 = ConicProgram(c=10.0 * p1.c, a_in=A, b_in=p1.b_in, lb=p1.lb, ub=p1.ub)
        r1, r2 = solve(p1), solve(p2)
        assert r2.obj == pytest.approx(10.0 * r1.obj, rel=1e-6, abs=1e-8)
        np.testing.assert_allclose(r1.x, r2.x, atol=1e-6)

    def test_tolerance_keys_rejected(self):
        with pytest.raises(ValueError):
            solve(simplex_lp(), tols={"feasibility": 1e-9})

    def test_iteration_limit_status(self):
        r = solve(simplex_lp(), tols={"maxIter": 1})
        assert r.status in ("iteration_limit", "optimal")
        assert r.iterations <= 1


class TestAdapters:
    def test_backends_agree_on_lp(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            n = int(rng.integers(2, 6))
            m = int(rng.integers(2, 7))
            p = ConicProgram(
                c=rng.normal(size=n),
                a_in=rng.normal(size=(m, n)),
                b_in=rng.normal(size=m) + 1.5,
                lb=np.full(n, -3.0),
                ub=np.full(n, 3.0),
            )
            r_emb = adapter_solve(p, "embedded", DEFAULT_TOLS)
            r_hig = adapter_solve(p, "scipy_linprog", DEFAULT_TOLS)
            assert r_emb.status == r_hig.status
            if r_emb.status == "optimal":
                assert r_emb.obj == pytest.approx(r_hig.obj, rel=1e-6, abs=1e-7)

    def test_scipy_backend_rejects_cones(self):
        p = ConicProgram(
            c=np.array([1.0]),
            socs=[SocRow(F=np.zeros((2, 1)), g=np.array([3.0, 4.0]), a=np.array([1.0]), b=0.0)],
        )
        with pytest.raises(SolverError):
            adapter_solve(p, "scipy_linprog", DEFAULT_TOLS)

    def test_unknown_backend(self):
        with pytest.raises(SolverError):
            adapter_solve(simplex_lp(), "no_such_backend", DEFAULT_TOLS)

    def test_degenerate_soc_becomes_linear(self):
        # ||0|| <= x - 1 is just x >= 1; both backends must accept it
        p = ConicProgram(
            c=np.array([1.0]),
            socs=[SocRow(F=np.zeros((0, 1)), g=np.zeros(0), a=np.array([1.0]), b=-1.0)],
        )
        for backend in ("embedded", "scipy_linprog"):
            r = adapter_solve(p, backend, DEFAULT_TOLS)
            assert r.status == "optimal"
            assert r.obj == pytest.approx(1.0, abs=1e-7)


class TestValidation:
    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            ConicProgram(c=np.array([1.0, 2.0]), a_in=np.array([[1.0]]), b_in=np.array([1.0]))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            ConicProgram(c=np.array([np.nan]))
