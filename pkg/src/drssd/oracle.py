"""Slow, independently-coded reference computations used to certify the
fast paths: a worst-case transport plan found by solving the primal LP over
joint distributions, exact evaluation of the robust dominance gap

    g(z) = max_{eta in R} sup_P E_P[(eta - z'xi)+ - (eta - z0'xi)+]

on finite supports, a discrete dominance check, and a vertex-enumeration
LP solver for cross-checking the interior-point code on tiny problems.

Everything here trades speed for transparency; dimensions are capped and
the routines refuse inputs they cannot enumerate exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .conic import ConicProgram, solve
from .model import WassersteinBall
from .ambiguity import match_samples_to_support

VERTEX_MAX_VARS = 5
VERTEX_MAX_ROWS = 12
VERTEX_MAX_BASES = 10_000
_FEAS = 1e-9


@dataclass(frozen=True)
class TransportPlan:
    """Joint distribution pi over (sample i, support atom j) pairs."""

    pi: np.ndarray       # (N, M), entries >= 0, rows sum to 1/N
    cost: float          # sum_ij pi_ij ||xi_bar_j - xi_hat_i||
    value: float         # sum_ij pi_ij psi_j


def transport_worst_case_lp(
    psi_values: np.ndarray,
    support: np.ndarray,
    ball: WassersteinBall,
    sample_indices=None,
) -> tuple[float, TransportPlan]:
    """Worst-case expectation by direct LP over transport plans.

    max sum_ij pi_ij psi_j  s.t.  sum_j pi_ij = 1/N for each i,
                                  sum_ij pi_ij d_ij <= eps,  pi >= 0.
    """
    psi = np.atleast_1d(np.asarray(psi_values, dtype=float))
    support = np.atleast_2d(np.asarray(support, dtype=float))
    match_samples_to_support(ball.samples, support, sample_indices)
    n, m = ball.n_samples, support.shape[0]
    dists = np.linalg.norm(support[None, :, :] - ball.samples[:, None, :], axis=2)
    nvar = n * m
    a_eq = np.zeros((n, nvar))
    for i in range(n):
        a_eq[i, i * m : (i + 1) * m] = 1.0
    b_eq = np.full(n, 1.0 / n)
    prog = ConicProgram(
        c=-np.tile(psi, n),
        a_eq=a_eq,
        b_eq=b_eq,
        a_in=dists.reshape(1, nvar),
        b_in=np.array([ball.radius]),
        lb=np.zeros(nvar),
    )
    res = solve(prog)
    if not res.optimal:
        raise RuntimeError(f"transport LP solve failed: {res.status}")
    pi = np.maximum(res.x.reshape(n, m), 0.0)
    plan = TransportPlan(pi=pi, cost=float((pi * dists).sum()), value=-float(res.obj))
    return plan.value, plan


def pointwise_sup_eta(
    z: np.ndarray, z0: np.ndarray, xi: np.ndarray, lo: float, hi: float
) -> float:
    """sup over eta in [lo, hi] of (eta - z'xi)+ - (eta - z0'xi)+.

    The function is piecewise linear in eta with kinks at z'xi and z0'xi,
    so the supremum is attained on {lo, hi, clipped kinks}.
    """
    u = float(z @ xi)
    v = float(z0 @ xi)
    cands = np.clip(np.array([lo, hi, u, v]), lo, hi)
    return float(np.max(np.maximum(cands - u, 0.0) - np.maximum(cands - v, 0.0)))


def evaluate_g_discrete(
    z: np.ndarray,
    z0: np.ndarray,
    support: np.ndarray,
    ball: WassersteinBall,
    intervals=None,
    sample_indices=None,
):
    """Exact dominance gap on a finite support, optionally interval-split.

    Returns (g, g_split, per_interval) where g maximizes over single target
    levels eta and g_split maximizes, over the given [lo, hi] intervals, the
    worst-case expectation of the pointwise eta-supremum.  g_split is None
    when no intervals are passed.

    Exactness of g: for fixed worst-case distribution the objective is
    convex in eta between consecutive benchmark kinks z0'xi_bar_j, so the
    maximum over eta is attained at a kink or an endpoint of the eta range.
    """
    from .ambiguity import worst_case_expectation_discrete

    z = np.asarray(z, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    support = np.atleast_2d(np.asarray(support, dtype=float))
    bench = support @ z0
    port = support @ z
    lo, hi = float(bench.min()), float(bench.max())

    etas = np.unique(np.clip(np.concatenate([bench, [lo, hi]]), lo, hi))
    g = -np.inf
    for eta in etas:
        psi = np.maximum(eta - port, 0.0) - np.maximum(eta - bench, 0.0)
        val, _ = worst_case_expectation_discrete(psi, support, ball, sample_indices)
        g = max(g, val)

    g_split = None
    per_interval = None
    if intervals is not None:
        per_interval = []
        for a, b in intervals:
            psi = np.array(
                [pointwise_sup_eta(z, z0, support[j], a, b) for j in range(len(support))]
            )
            val, _ = worst_case_expectation_discrete(psi, support, ball, sample_indices)
            per_interval.append(val)
        per_interval = np.asarray(per_interval)
        g_split = float(per_interval.max())
    return float(g), g_split, per_interval


def ssd_check_discrete(
    x_values: np.ndarray, y_values: np.ndarray, weights: np.ndarray
) -> tuple[bool, float]:
    """Second-order dominance of X over Y under a common discrete law.

    Checks E[(eta - X)+] <= E[(eta - Y)+] at every eta in the union of
    atoms (sufficient: both sides are piecewise linear convex in eta with
    kinks only there, and they agree in slope for eta below/above all
    atoms).  Returns (dominates, max violation).
    """
    x = np.asarray(x_values, dtype=float)
    y = np.asarray(y_values, dtype=float)
    w = np.asarray(weights, dtype=float)
    etas = np.unique(np.concatenate([x, y]))
    lhs = np.maximum(etas[:, None] - x[None, :], 0.0) @ w
    rhs = np.maximum(etas[:, None] - y[None, :], 0.0) @ w
    viol = float(np.max(lhs - rhs))
    return viol <= 1e-12, viol


@dataclass(frozen=True)
class VertexSolution:
    status: str  # optimal | infeasible | unbounded
    obj: float | None
    x: np.ndarray | None


def brute_lp_by_vertex_enumeration(program: ConicProgram) -> VertexSolution:
    """Solve a tiny LP by enumerating basic feasible points.

    Stacks all constraints (inequalities, equalities, finite bounds, and
    degenerate second-order rows with an empty norm part) into a'x <= b /
    a'x = b form and visits every n-subset with an invertible system,
    keeping the feasible vertex with the least objective.  Variables with
    an infinite bound get a large artificial box first; enumerating again
    with the box doubled separates a true optimum from an escaping one.
    """
    n = program.nvar
    if n > VERTEX_MAX_VARS:
        raise ValueError(f"too many variables for vertex enumeration ({n} > {VERTEX_MAX_VARS})")
    m = _stack_rows(program)[0].shape[0]
    if m > VERTEX_MAX_ROWS:
        raise ValueError(f"too many rows for vertex enumeration ({m} > {VERTEX_MAX_ROWS})")

    big = 1e7
    sol = _enumerate_vertices(_with_box(program, big))
    if sol.status == "infeasible":
        return sol
    lb, ub = _bounds(program)
    if np.all(np.isfinite(lb)) and np.all(np.isfinite(ub)):
        return sol
    wider = _enumerate_vertices(_with_box(program, 2 * big))
    assert sol.obj is not None and wider.obj is not None
    if wider.obj < sol.obj - 1e-6 * max(1.0, abs(sol.obj)):
        return VertexSolution("unbounded", None, None)
    return sol


def _enumerate_vertices(program: ConicProgram) -> VertexSolution:
    rows, rhs, is_eq = _stack_rows(program)
    m, n = rows.shape
    if _n_choose_k(m, n) > VERTEX_MAX_BASES:
        raise ValueError("too many candidate bases for vertex enumeration")
    best_obj, best_x = np.inf, None
    for basis in combinations(range(m), n):
        sub = rows[list(basis)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, rhs[list(basis)])
        resid = rows @ x - rhs
        if np.any(resid > _FEAS) or np.any(np.abs(resid[is_eq]) > _FEAS):
            continue
        obj = float(program.c @ x)
        if obj < best_obj - 1e-15:
            best_obj, best_x = obj, x
    if best_x is None:
        return VertexSolution("infeasible", None, None)
    return VertexSolution("optimal", best_obj, best_x)


def _bounds(program: ConicProgram) -> tuple[np.ndarray, np.ndarray]:
    n = program.nvar
    lb = program.lb if program.lb is not None else np.full(n, -np.inf)
    ub = program.ub if program.ub is not None else np.full(n, np.inf)
    return lb, ub


def _with_box(program: ConicProgram, big: float) -> ConicProgram:
    lb0, ub0 = _bounds(program)
    lb = np.where(np.isfinite(lb0), lb0, -big)
    ub = np.where(np.isfinite(ub0), ub0, big)
    return ConicProgram(
        c=program.c,
        a_eq=program.a_eq,
        b_eq=program.b_eq,
        a_in=program.a_in,
        b_in=program.b_in,
        socs=program.socs,
        lb=lb,
        ub=ub,
    )


def _dense(m):
    import scipy.sparse as sp

    return np.asarray(m.todense()) if sp.issparse(m) else m


def _stack_rows(program: ConicProgram):
    """All constraints as (rows, rhs, eq mask) with rows meaning a'x <= b."""
    n = program.nvar
    rows, rhs, is_eq = [], [], []
    if program.a_in is not None:
        for a, b in zip(_dense(program.a_in), program.b_in):
            rows.append(a)
            rhs.append(b)
            is_eq.append(False)
    if program.a_eq is not None:
        for a, b in zip(_dense(program.a_eq), program.b_eq):
            rows.append(a)
            rhs.append(b)
            is_eq.append(True)
    for soc in program.socs:
        if soc.F.shape[0] != 0:
            raise ValueError("vertex enumeration handles linear programs only")
        rows.append(-soc.a)
        rhs.append(float(soc.b) - float(np.linalg.norm(soc.g)))
    is_eq.extend([False] * len(program.socs))
    lb, ub = _bounds(program)
    for k in range(n):
        if np.isfinite(lb[k]):
            e = np.zeros(n)
            e[k] = -1.0
            rows.append(e)
            rhs.append(-lb[k])
            is_eq.append(False)
        if np.isfinite(ub[k]):
            e = np.zeros(n)
            e[k] = 1.0
            rows.append(e)
            rhs.append(ub[k])
            is_eq.append(False)
    if not rows:
        raise ValueError("vertex enumeration needs at least one constraint")
    return np.asarray(rows, dtype=float), np.asarray(rhs, dtype=float), np.asarray(is_eq)


def _n_choose_k(m: int, k: int) -> int:
    from math import comb

    return comb(m, max(0, k))
