"""Upper-bound machinery: interval splits, the two master builders, the
alternating solve, the primal/dual subproblem pair, and the split
constraint evaluator, checked against the discrete oracle and against each
other (strong duality)."""

import numpy as np
import pytest

from drssd.conic import ConicProgram, SocRow, solve
from drssd.model import EtaRange, Polyhedron, SsdInstance, SupportPolytope, WassersteinBall
from drssd.oracle import evaluate_g_discrete, pointwise_sup_eta
from drssd.upper_bound import (
    DualBlock,
    IntervalSplit,
    build_master_fixed_multipliers,
    build_master_fixed_z,
    default_budget_slack,
    primal_subproblem,
    robust_constraint_value,
    sca_solve,
    solve_master_fixed_z,
    split_eta_intervals,
    strict_feasibility_margin,
)

from test_lower_bound import box_instance, random_instance


def tiny_radius_instance(rng, radius=1e-12):
    """Random bounded instance with a near-degenerate ball, so the split
    constraint value is numerically the discrete (empirical) one."""
    inst = random_instance(rng)
    return SsdInstance(
        objective=inst.objective,
        decision_set=inst.decision_set,
        benchmark=inst.benchmark,
        ball=WassersteinBall(samples=inst.ball.samples, radius=radius),
        support=inst.support,
        half_norm_objective=False,
    )


def random_feasible_z(inst, rng):
    """A point of Z: random convex combination of coordinate scalings."""
    n = inst.n
    w = rng.uniform(0.1, 1.0, size=n)
    z = w / w.sum() * rng.uniform(0.0, 1.0)
    assert inst.decision_set.contains(z)
    return z


def eta_range_of(inst):
    pay0 = inst.ball.samples @ inst.benchmark
    return EtaRange(r_min=float(pay0.min()), r_max=float(pay0.max()))


def dual_branch_value(inst, split, z, lam, i, k, first, tols=None):
    """Standalone dual of one branch subproblem with lambda pinned.

    min over (mu >= 0, nu >= 0) of the epigraph row value, subject to the
    transport cone row with the given lambda on the right-hand side; by
    strong duality this equals the matching primal branch optimum whenever
    that branch is strictly feasible.
    """
    C, d = inst.support.C, inst.support.d
    l = C.shape[0]
    lo, hi = split.endpoints[k]
    xi = inst.ball.samples[i]
    pay, pay0 = float(z @ xi), float(inst.benchmark @ xi)
    slack = d - C @ xi
    nvar = 3 + l
    if first:
        c = np.concatenate([[pay0 - hi, hi - pay, hi - lo], slack])
        const = hi - pay
        mu_cols = np.column_stack([-inst.benchmark, z])
        g = np.asarray(z, dtype=float)
        sign_row, sign_rhs = [1.0, -1.0, -1.0], 1.0
    else:
        c = np.concatenate([[pay0 - hi, pay - hi, hi - lo], slack])
        const = 0.0
        mu_cols = np.column_stack([-inst.benchmark, -np.asarray(z, dtype=float)])
        g = np.zeros(inst.n)
        sign_row, sign_rhs = [1.0, 1.0, -1.0], 0.0
    a_in = np.zeros((2, nvar))
    b_in = np.array([1.0, sign_rhs])
    a_in[0, 0] = 1.0
    a_in[1, :3] = sign_row
    f = np.zeros((inst.n, nvar))
    f[:, :2] = mu_cols
    f[:, 3:] = C.T
    soc = SocRow(F=f, g=g, a=np.zeros(nvar), b=float(lam))
    res = solve(ConicProgram(c=c, a_in=a_in, b_in=b_in, socs=[soc], lb=np.zeros(nvar)), tols)
    if res.status == "unbounded":
        return -np.inf
    assert res.x is not None, res.status
    return float(res.obj) + const


class TestIntervalSplit:
    def test_ten_intervals_over_example_range(self):
        sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), 10)
        assert sp.k == 10
        assert sp.endpoints[0] == pytest.approx([0.0, 25.0])
        assert sp.endpoints[-1] == pytest.approx([225.0, 250.0])
        assert sp.r_min == 0.0 and sp.r_max == 250.0

    def test_single_interval_is_full_range(self):
        sp = split_eta_intervals(EtaRange(r_min=-2.0, r_max=5.0), 1)
        assert sp.endpoints.shape == (1, 2)
        assert sp.endpoints[0] == pytest.approx([-2.0, 5.0])

    def test_degenerate_range_gives_zero_width_rows(self):
        sp = split_eta_intervals(EtaRange(r_min=3.0, r_max=3.0), 4)
        assert sp.k == 4
        assert np.all(sp.endpoints == 3.0)

    def test_nonpositive_count_rejected(self):
        for k in (0, -3):
            with pytest.raises(ValueError, match="at least 1"):
                split_eta_intervals(EtaRange(r_min=0.0, r_max=1.0), k)

    def test_widths_cover_range_exactly(self):
        sp = split_eta_intervals(EtaRange(r_min=0.3, r_max=7.7), 13)
        widths = sp.endpoints[:, 1] - sp.endpoints[:, 0]
        assert widths == pytest.approx(np.full(13, 7.4 / 13))
        assert sp.endpoints[1:, 0] == pytest.approx(sp.endpoints[:-1, 1])

    def test_malformed_endpoints_rejected(self):
        with pytest.raises(ValueError, match="widths"):
            IntervalSplit(k=2, endpoints=np.array([[0.0, 1.0], [1.0, 3.0]]))
        with pytest.raises(ValueError, match="contiguous"):
            IntervalSplit(k=2, endpoints=np.array([[0.0, 1.0], [1.5, 2.5]]))
        with pytest.raises(ValueError, match="\\(K, 2\\)"):
            IntervalSplit(k=3, endpoints=np.array([[0.0, 1.0], [1.0, 2.0]]))


class TestDualBlock:
    def good(self):
        return DualBlock(
            mu=np.array([0.8, 0.1, 0.2]),
            nu=np.zeros(4),
            mu_t=np.array([0.5, 0.2, 0.9]),
            nu_t=np.zeros(4),
            v=0.0,
        )

    def test_valid_block_passes(self):
        self.good().validate()

    def test_negative_multiplier_rejected(self):
        b = self.good()
        b.mu = np.array([0.8, -0.1, 0.2])
        with pytest.raises(ValueError, match="dual block invalid"):
            b.validate()

    def test_mu1_cap_enforced(self):
        b = self.good()
        b.mu_t = np.array([1.2, 0.2, 1.5])
        with pytest.raises(ValueError, match="dual block invalid"):
            b.validate()

    def test_sign_rows_enforced(self):
        b = self.good()
        b.mu = np.array([1.0, 0.0, 0.0])  # 1 - 1 + 0 + 0 = 0, fine
        b.validate()
        b.mu_t = np.array([1.0, 0.0, 0.0])  # -1 - 0 + 0 < 0
        with pytest.raises(ValueError, match="dual block invalid"):
            b.validate()


class TestFixedZMaster:
    def test_benchmark_certificate_satisfies_all_rows(self):
        # lambda = 0, mu = (1,0,0), mu~ = 0, nu = 0, V = 0 is feasible at z0
        # with no budget slack: every subproblem value collapses to zero.
        inst = box_instance()
        for K in (1, 3):
            sp = split_eta_intervals(eta_range_of(inst), K)
            prog = build_master_fixed_z(inst, sp, inst.benchmark)
            x = np.zeros(prog.nvar)
            blk = 7 + 2 * inst.support.C.shape[0]
            for pos in range(K, prog.nvar, blk):
                x[pos] = 1.0  # mu_1 of each (i, k) block
            resid = prog.a_in @ x - prog.b_in
            assert float(resid.max()) <= 1e-9
            for soc in prog.socs:
                lhs = np.linalg.norm(soc.F @ x + soc.g)
                assert lhs <= float(soc.a @ x + soc.b) + 1e-9

    def test_benchmark_start_solves_every_k(self):
        inst = box_instance()
        for K in (1, 2, 5):
            sp = split_eta_intervals(eta_range_of(inst), K)
            blocks, res = solve_master_fixed_z(inst, sp, inst.benchmark)
            assert res.status != "infeasible"
            assert len(blocks) == inst.ball.n_samples
            assert all(len(row) == K for row in blocks)
            for row in blocks:
                for b in row:
                    b.validate()

    def test_violating_z_reported_infeasible(self):
        # K = 1 demands scenario-wise dominance of the benchmark payoff,
        # which (0.5, 0.5) does not deliver on the example data.
        inst = box_instance()
        sp = split_eta_intervals(eta_range_of(inst), 1)
        with pytest.raises(ValueError, match="z infeasible for K-split upper bound"):
            solve_master_fixed_z(inst, sp, np.array([0.5, 0.5]))

    def test_budget_slack_grows_feasible_region(self):
        # with a large enough budget slack the same z becomes acceptable
        inst = box_instance()
        sp = split_eta_intervals(eta_range_of(inst), 1)
        blocks, res = solve_master_fixed_z(
            inst, sp, np.array([0.5, 0.5]), budget_slack=50.0
        )
        assert res.status != "infeasible"
        blocks[0][0].validate()


class TestFixedMultipliersMaster:
    def test_zero_multiplier_epigraph_rows_match_direct_formula(self):
        # with mu = mu~ = 0 the first epigraph row must read
        # V >= d'nu - xi_i'(z + C'nu) + hi  for every (i, k)
        inst = box_instance()
        sp = split_eta_intervals(eta_range_of(inst), 3)
        l = inst.support.C.shape[0]
        zero = [
            [
                DualBlock(
                    mu=np.zeros(3),
                    nu=np.zeros(l),
                    mu_t=np.zeros(3),
                    nu_t=np.zeros(l),
                    v=0.0,
                )
                for _ in range(sp.k)
            ]
            for _ in range(inst.ball.n_samples)
        ]
        prog = build_master_fixed_multipliers(inst, sp, zero)
        rng = np.random.default_rng(5)
        x = rng.normal(size=prog.nvar)
        x_abs = np.abs(x)
        n_z_rows = inst.decision_set.a_ub.shape[0]
        a = prog.a_in.toarray() if hasattr(prog.a_in, "toarray") else prog.a_in
        z = x[: inst.n]
        base = inst.n + 1 + sp.k  # z | norm epigraph | lambdas
        blk2 = 2 * l + 1
        for i in range(inst.ball.n_samples):
            for kk in range(sp.k):
                row = n_z_rows + sp.k + 2 * (i * sp.k + kk)
                off = base + (i * sp.k + kk) * blk2
                nu = x_abs[off : off + l]
                x_probe = x.copy()
                x_probe[off : off + l] = nu
                v = x_probe[off + blk2 - 1]
                got = float(a[row] @ x_probe - prog.b_in[row])
                hi = sp.endpoints[kk, 1]
                want = (
                    inst.support.d @ nu
                    - inst.ball.samples[i] @ (z + inst.support.C.T @ nu)
                    + hi
                    - v
                )
                assert got == pytest.approx(want, abs=1e-9)

    def test_blocks_from_benchmark_keep_benchmark_feasible(self):
        inst = box_instance()
        sp = split_eta_intervals(eta_range_of(inst), 4)
        slack = default_budget_slack(inst)
        blocks, _ = solve_master_fixed_z(inst, sp, inst.benchmark, budget_slack=slack)
        prog = build_master_fixed_multipliers(inst, sp, blocks, budget_slack=slack)
        res = solve(prog)
        assert res.status != "infeasible"
        assert res.x is not None
        z = res.x[: inst.n]
        assert inst.objective_value(z) <= inst.objective_value(inst.benchmark) + 1e-7

    def test_bad_grid_shape_rejected(self):
        inst = box_instance()
        sp = split_eta_intervals(eta_range_of(inst), 2)
        blocks, _ = solve_master_fixed_z(inst, sp, inst.benchmark)
        with pytest.raises(ValueError, match="N x K"):
            build_master_fixed_multipliers(inst, sp, blocks[:-1])

    def test_invalid_block_rejected(self):
        inst = box_instance()
        sp = split_eta_intervals(eta_range_of(inst), 2)
        blocks, _ = solve_master_fixed_z(inst, sp, inst.benchmark)
        blocks[0][0].mu = np.array([2.0, 0.0, 0.0])
        with pytest.raises(ValueError, match="dual block invalid"):
            build_master_fixed_multipliers(inst, sp, blocks)


class TestScaSolve:
    def test_example_instance_value_in_published_band(self):
        inst = box_instance()
        sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), 12)
        rep = sca_solve(inst, sp, z_start=np.array([0.5, 0.5]))
        assert rep.bound_type == "upper"
        assert rep.value == pytest.approx(0.3025, abs=0.01)
        assert inst.decision_set.contains(np.asarray(rep.solution))
        assert rep.value == pytest.approx(rep.trace[-1])

    def test_trace_nonincreasing_and_value_is_objective(self):
        inst = box_instance()
        sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), 8)
        rep = sca_solve(inst, sp, z_start=np.array([0.5, 0.5]))
        trace = np.asarray(rep.trace)
        assert np.all(np.diff(trace) <= 0.0)
        assert rep.value == pytest.approx(inst.objective_value(rep.solution), abs=1e-12)

    def test_benchmark_cost_never_beaten_from_above(self):
        inst = box_instance()
        for K in (2, 12):
            sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), K)
            rep = sca_solve(inst, sp)
            assert rep.value <= inst.objective_value(inst.benchmark) + 1e-9

    def test_nested_splits_never_loosen_the_bound(self):
        inst = box_instance()
        vals = []
        for K in (1, 2, 4, 8):
            sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), K)
            vals.append(sca_solve(inst, sp).value)
        assert all(b <= a + 1e-8 for a, b in zip(vals, vals[1:]))

    def test_solution_certified_feasible_for_split_problem(self):
        inst = box_instance()
        sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), 12)
        rep = sca_solve(inst, sp, z_start=np.array([0.5, 0.5]))
        _, g = robust_constraint_value(inst, sp, np.asarray(rep.solution))
        assert g <= rep.config["budget_slack"] + 1e-6

    def test_tiny_radius_solution_meets_exact_certificate(self):
        rng = np.random.default_rng(11)
        inst = tiny_radius_instance(rng, radius=1e-9)
        sp = split_eta_intervals(eta_range_of(inst), 6)
        rep = sca_solve(inst, sp)
        _, g = robust_constraint_value(inst, sp, np.asarray(rep.solution))
        assert g <= 1e-6

    def test_infeasible_start_raises(self):
        inst = box_instance()
        sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), 1)
        with pytest.raises(ValueError, match="start infeasible"):
            sca_solve(inst, sp, z_start=np.array([0.5, 0.5]))

    def test_degenerate_range_collapses_to_one_interval(self):
        inst = box_instance()
        sp = split_eta_intervals(EtaRange(r_min=100.0, r_max=100.0), 5)
        rep = sca_solve(inst, sp, z_start=np.array([0.5, 0.5]))
        assert rep.config["K"] == 1
        assert any("collapsed" in f for f in rep.flags)

    def test_bad_controls_rejected(self):
        inst = box_instance()
        sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), 2)
        with pytest.raises(ValueError, match="max_iter"):
            sca_solve(inst, sp, max_iter=0)

    def test_report_carries_configuration(self):
        inst = box_instance()
        sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), 2)
        rep = sca_solve(inst, sp)
        assert rep.config["K"] == 2
        assert rep.config["epsilon"] == pytest.approx(1e-5)
        assert rep.timings["total"] > 0.0
        assert rep.config["start"] == pytest.approx([1.0, 0.0])


class TestPrimalSubproblem:
    def test_benchmark_subproblem_value_zero(self):
        inst = box_instance()
        sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), 4)
        for lam in (0.0, 1.0):
            for i, k in ((0, 0), (1, 3), (4, 2)):
                _, _, vs = primal_subproblem(inst, sp, inst.benchmark, lam, i, k)
                assert vs == pytest.approx(0.0, abs=1e-6)

    def test_second_branch_never_positive(self):
        rng = np.random.default_rng(3)
        inst = box_instance()
        sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), 3)
        for _ in range(6):
            z = random_feasible_z(inst, rng)
            i = int(rng.integers(inst.ball.n_samples))
            k = int(rng.integers(sp.k))
            _, v2, _ = primal_subproblem(inst, sp, z, float(rng.uniform(0, 2)), i, k)
            assert v2 <= 1e-8

    def test_negative_lambda_rejected(self):
        inst = box_instance()
        sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), 2)
        with pytest.raises(ValueError, match="nonnegative"):
            primal_subproblem(inst, sp, inst.benchmark, -1.0, 0, 0)

    def test_strong_duality_against_standalone_dual(self):
        rng = np.random.default_rng(17)
        inst = box_instance()
        sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), 4)
        checked = 0
        for _ in range(8):
            z = random_feasible_z(inst, rng)
            lam = float(rng.uniform(0.5, 3.0))
            i = int(rng.integers(inst.ball.n_samples))
            k = int(rng.integers(sp.k))
            v1, v2, _ = primal_subproblem(inst, sp, z, lam, i, k)
            for first, v in ((True, v1), (False, v2)):
                if strict_feasibility_margin(inst, sp, z, i, k, first) <= 1e-9:
                    continue
                dual = dual_branch_value(inst, sp, z, lam, i, k, first)
                assert dual == pytest.approx(v, abs=1e-6)
                checked += 1
        assert checked >= 6

    def test_strict_feasibility_margin_positive_on_interior_branch(self):
        inst = box_instance()
        sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), 1)
        m = strict_feasibility_margin(inst, sp, np.array([0.2, 0.1]), 3, 0, True)
        assert m > 1e-6


class TestRobustConstraintValue:
    def test_benchmark_value_zero_every_interval(self):
        inst = box_instance()
        sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), 5)
        per_k, g = robust_constraint_value(inst, sp, inst.benchmark)
        assert np.max(np.abs(np.maximum(per_k, 0.0))) <= 1e-6
        assert g <= 1e-6

    def test_matches_discrete_oracle_at_tiny_radius(self):
        rng = np.random.default_rng(23)
        for trial in range(3):
            inst = tiny_radius_instance(rng)
            sp = split_eta_intervals(eta_range_of(inst), int(rng.integers(2, 5)))
            z = random_feasible_z(inst, rng)
            per_k, g = robust_constraint_value(inst, sp, z)
            _, g_split, per_ref = evaluate_g_discrete(
                z,
                inst.benchmark,
                inst.ball.samples,
                inst.ball,
                intervals=sp.endpoints,
            )
            assert per_k == pytest.approx(per_ref, abs=1e-6)
            assert g == pytest.approx(g_split, abs=1e-6)

    def test_split_refinement_never_increases(self):
        rng = np.random.default_rng(29)
        inst = tiny_radius_instance(rng)
        z = random_feasible_z(inst, rng)
        rng_eta = eta_range_of(inst)
        prev = None
        for K in (1, 2, 4, 8):
            _, g = robust_constraint_value(inst, split_eta_intervals(rng_eta, K), z)
            if prev is not None:
                assert g <= prev + 1e-8
            prev = g

    def test_split_gap_bounded_by_two_widths(self):
        # the split value can overshoot the exact dominance gap by at most
        # twice the interval width
        rng = np.random.default_rng(31)
        inst = tiny_radius_instance(rng)
        rng_eta = eta_range_of(inst)
        span = rng_eta.r_max - rng_eta.r_min
        for _ in range(3):
            z = random_feasible_z(inst, rng)
            g_exact, _, _ = evaluate_g_discrete(
                z, inst.benchmark, inst.ball.samples, inst.ball
            )
            for K in (1, 2, 4):
                _, g_split = robust_constraint_value(
                    inst, split_eta_intervals(rng_eta, K), z
                )
                assert g_split - g_exact <= 2.0 * span / K + 1e-7

    def test_solver_failure_reports_which_interval(self, monkeypatch):
        import types

        import drssd.upper_bound as ub

        inst = box_instance()
        sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), 3)
        monkeypatch.setattr(
            ub, "solve", lambda *a, **k: types.SimpleNamespace(status="infeasible", x=None)
        )
        with pytest.raises(RuntimeError, match="interval 0"):
            robust_constraint_value(inst, sp, inst.benchmark)


class TestBoundSandwich:
    def test_upper_never_below_lower_on_example(self):
        from drssd.lower_bound import solve_lower
        from drssd.model import generate_grids

        inst = box_instance()
        grids = generate_grids(inst, mode="grid", n_xi=49, n_eta=25)
        lower = solve_lower(inst, grids)
        for K, start in ((4, None), (12, np.array([0.5, 0.5]))):
            sp = split_eta_intervals(EtaRange(r_min=0.0, r_max=250.0), K)
            rep = sca_solve(inst, sp, z_start=start)
            assert lower.value <= rep.value + 1e-6
            assert all(lower.value <= t + 1e-6 for t in rep.trace)

    def test_upper_never_below_lower_on_random_instances(self):
        from drssd.lower_bound import solve_lower
        from drssd.model import generate_grids

        rng = np.random.default_rng(41)
        for _ in range(2):
            inst = random_instance(rng, n=2, n_samples=3)
            grids = generate_grids(inst, mode="grid", n_xi=36, n_eta=12)
            lower = solve_lower(inst, grids)
            sp = split_eta_intervals(eta_range_of(inst), 6)
            rep = sca_solve(inst, sp)
            assert lower.value <= rep.value + 1e-6
