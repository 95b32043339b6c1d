"""Split-and-dual upper bound on the robust SSD-constrained optimum.

The target range R = [r_min, r_max] is cut into K equal intervals and the
supremum over eta is pulled inside the worst-case expectation, which can
only increase the constraint value; the resulting per-interval inner
problems are conified through their duals, so the whole thing becomes one
SOCP family

    min  f(z)
    s.t. lambda_k eps + (1/N) sum_i V^{ik} <= 0               k = 1..K
         V^{ik} >= value rows of the two dual subproblems      (i, k)
         ||(1+mu_2)z - mu_1 z0 + C'nu||      <= lambda_k       (i, k)
         ||-mu~_1 z0 - mu~_2 z + C'nu~||     <= lambda_k       (i, k)
         mu-box rows, z in Z, lambda >= 0, mu, nu >= 0.

The products mu_2 z make the master bilinear; the sequential convex
approximation alternates solving it with z frozen (a feasibility SOCP in
the multipliers) and with the mu-multipliers frozen (an SOCP in z), which
yields a nonincreasing sequence of valid upper bounds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .conic import ConicProgram, SocRow, solve
from .conic.backends import solve_scipy_linprog
from .model import EtaRange, SsdInstance, _support_box
from .oracle import pointwise_sup_eta
from .reports import BoundReport

SCA_STEP_TOL = 1e-6
SCA_MAX_ITER = 100
_MULT_TOL = 1e-6


@dataclass(frozen=True)
class IntervalSplit:
    """K contiguous equal-width intervals covering the eta range."""

    k: int
    endpoints: np.ndarray  # (K, 2) rows (lo, hi)

    def __post_init__(self):
        ep = np.atleast_2d(np.asarray(self.endpoints, dtype=float))
        if ep.shape != (self.k, 2):
            raise ValueError("interval split: endpoints must be (K, 2)")
        widths = ep[:, 1] - ep[:, 0]
        scale = max(1.0, abs(ep[0, 0]), abs(ep[-1, 1]))
        if np.any(widths < -1e-12) or np.ptp(widths) > 1e-9 * scale:
            raise ValueError("interval split: widths must be equal and nonnegative")
        if self.k > 1 and np.max(np.abs(ep[1:, 0] - ep[:-1, 1])) > 1e-9 * scale:
            raise ValueError("interval split: intervals must be contiguous")
        object.__setattr__(self, "endpoints", ep)

    @property
    def r_min(self) -> float:
        return float(self.endpoints[0, 0])

    @property
    def r_max(self) -> float:
        return float(self.endpoints[-1, 1])


@dataclass
class DualBlock:
    """Multipliers of the two dual subproblems for one (sample i, interval k).

    mu/nu back the branch where (eta - z'xi)_+ is active, the tilde pair the
    branch where it vanishes; v is the shared epigraph value V^{ik}.
    """

    mu: np.ndarray
    nu: np.ndarray
    mu_t: np.ndarray
    nu_t: np.ndarray
    v: float

    def validate(self, tol: float = _MULT_TOL):
        mu, mu_t = self.mu, self.mu_t
        problems = []
        if mu.shape != (3,) or mu_t.shape != (3,):
            problems.append("mu blocks must have three entries")
        else:
            if np.min(mu) < -tol or np.min(mu_t) < -tol:
                problems.append("negative multiplier")
            if mu[0] > 1 + tol or mu_t[0] > 1 + tol:
                problems.append("mu_1 exceeds 1")
            if 1 - mu[0] + mu[1] + mu[2] < -tol:
                problems.append("sign row 1 - mu_1 + mu_2 + mu_3 violated")
            if -mu_t[0] - mu_t[1] + mu_t[2] < -tol:
                problems.append("sign row -mu~_1 - mu~_2 + mu~_3 violated")
        if np.min(self.nu) < -tol or np.min(self.nu_t) < -tol:
            problems.append("negative polyhedral multiplier")
        if problems:
            raise ValueError("dual block invalid: " + "; ".join(problems))


def split_eta_intervals(rng: EtaRange, k: int) -> IntervalSplit:
    """K equal-width contiguous intervals covering [r_min, r_max]."""
    if k < 1:
        raise ValueError("interval count must be at least 1")
    edges = np.linspace(rng.r_min, rng.r_max, k + 1)
    return IntervalSplit(k=k, endpoints=np.column_stack([edges[:-1], edges[1:]]))


def default_budget_slack(instance: SsdInstance) -> float:
    """Transport-budget slack radius * L with L a bound on the payoff slopes.

    Splitting eta moves the per-scenario supremum inside the expectation, and
    near the low end of the range that supremum is nonnegative for every z
    (eta at the bottom endpoint contributes zero).  Squashing it to zero costs
    a transport penalty of at least the payoff slope, so the budget rows
    carry an irreducible radius * slope surplus and the exact split problem
    admits only the benchmark.  Relaxing each budget row by radius * L keeps
    every decision that is feasible for the radius-0 split problem and lets
    the bound degrade continuously as the radius grows; L = ||z0|| plus a
    per-coordinate box bound on ||z|| over the decision set."""
    ds = instance.decision_set
    n = instance.n
    box = np.zeros(n)
    for j in range(n):
        worst = 0.0
        for sign in (1.0, -1.0):
            c = np.zeros(n)
            c[j] = sign
            res = solve_scipy_linprog(
                ConicProgram(c=c, a_in=ds.a_ub, b_in=ds.b_ub, a_eq=ds.a_eq, b_eq=ds.b_eq)
            )
            if res.status == "unbounded":
                raise ValueError("decision set unbounded; cannot size the budget slack")
            if res.x is not None:
                worst = max(worst, abs(res.x[j]))
        box[j] = worst
    lam_cap = float(np.linalg.norm(instance.benchmark) + np.linalg.norm(box))
    return instance.ball.radius * lam_cap


class _Coo:
    """Row-building scratch for sparse inequality blocks."""

    def __init__(self):
        self.rows, self.cols, self.vals, self.rhs = [], [], [], []
        self.r = 0

    def add(self, cols, vals, rhs):
        self.rows.extend([self.r] * len(cols))
        self.cols.extend(cols)
        self.vals.extend(vals)
        self.rhs.append(float(rhs))
        self.r += 1

    def matrix(self, nvar):
        return (
            sp.coo_matrix((self.vals, (self.rows, self.cols)), shape=(self.r, nvar)).tocsr(),
            np.asarray(self.rhs),
        )


def _soc_sparse(nvar, col_blocks, g, a_col):
    """SOC row ||sum_b M_b x_b + g|| <= x[a_col] from (cols, matrix) blocks."""
    dim = len(g)
    rows, cols, vals = [], [], []
    for idx, mat in col_blocks:
        m = np.asarray(mat, dtype=float)
        for rr in range(dim):
            for cc, col in enumerate(idx):
                if m[rr, cc] != 0.0:
                    rows.append(rr)
                    cols.append(col)
                    vals.append(m[rr, cc])
    f = sp.coo_matrix((vals, (rows, cols)), shape=(dim, nvar)).tocsr()
    a = np.zeros(nvar)
    a[a_col] = 1.0
    return SocRow(F=f, g=np.asarray(g, dtype=float), a=a, b=0.0)


@dataclass(frozen=True)
class _FixedZLayout:
    n_samples: int
    k: int
    l: int

    @property
    def blk(self) -> int:
        return 7 + 2 * self.l

    def off(self, i: int, kk: int) -> int:
        return self.k + (i * self.k + kk) * self.blk

    @property
    def nvar(self) -> int:
        return self.k + self.n_samples * self.k * self.blk


def build_master_fixed_z(
    instance: SsdInstance,
    split: IntervalSplit,
    z: np.ndarray,
    budget_slack: float = 0.0,
) -> ConicProgram:
    """The upper-bound master with z frozen: a pure feasibility SOCP in
    (lambda, mu, nu, mu~, nu~, V).  Objective is zero; the value of this
    phase is f(z), a constant."""
    z = np.asarray(z, dtype=float)
    C, d = instance.support.C, instance.support.d
    l = C.shape[0]
    samples = instance.ball.samples
    n_samp = samples.shape[0]
    K = split.k
    eps = instance.ball.radius
    lay = _FixedZLayout(n_samples=n_samp, k=K, l=l)
    nvar = lay.nvar

    slack = d[None, :] - samples @ C.T         # (N, l): d - C xi_hat_i
    pay = samples @ z                          # xi_hat_i' z
    pay0 = samples @ instance.benchmark        # xi_hat_i' z0

    co = _Coo()
    for kk in range(K):
        cols = [kk] + [lay.off(i, kk) + lay.blk - 1 for i in range(n_samp)]
        vals = [eps] + [1.0 / n_samp] * n_samp
        co.add(cols, vals, budget_slack)

    socs = []
    for i in range(n_samp):
        for kk in range(K):
            off = lay.off(i, kk)
            mu = [off, off + 1, off + 2]
            nu = list(range(off + 3, off + 3 + l))
            mu_t = [off + 3 + l, off + 4 + l, off + 5 + l]
            nu_t = list(range(off + 6 + l, off + 6 + 2 * l))
            v = off + lay.blk - 1
            lo, hi = split.endpoints[kk]

            co.add([mu[0]], [1.0], 1.0)
            co.add([mu_t[0]], [1.0], 1.0)
            co.add(mu, [1.0, -1.0, -1.0], 1.0)
            co.add(mu_t, [1.0, 1.0, -1.0], 0.0)
            # V >= d'nu - xi_i'(z - mu_1 z0 + mu_2 z + C'nu) - mu_3 lo + (1 - mu_1 + mu_2 + mu_3) hi
            co.add(
                [v] + mu + nu,
                [-1.0, pay0[i] - hi, hi - pay[i], hi - lo] + list(slack[i]),
                pay[i] - hi,
            )
            # V >= d'nu~ - xi_i'(-mu~_1 z0 - mu~_2 z + C'nu~) - mu~_3 lo + (-mu~_1 - mu~_2 + mu~_3) hi
            co.add(
                [v] + mu_t + nu_t,
                [-1.0, pay0[i] - hi, pay[i] - hi, hi - lo] + list(slack[i]),
                0.0,
            )
            socs.append(
                _soc_sparse(
                    nvar,
                    [(mu[:2], np.column_stack([-instance.benchmark, z])), (nu, C.T)],
                    z.copy(),
                    kk,
                )
            )
            socs.append(
                _soc_sparse(
                    nvar,
                    [(mu_t[:2], np.column_stack([-instance.benchmark, -z])), (nu_t, C.T)],
                    np.zeros(instance.n),
                    kk,
                )
            )

    a_in, b_in = co.matrix(nvar)
    lb = np.zeros(nvar)
    for i in range(n_samp):
        for kk in range(K):
            lb[lay.off(i, kk) + lay.blk - 1] = -np.inf
    return ConicProgram(c=np.zeros(nvar), a_in=a_in, b_in=b_in, socs=socs, lb=lb)


def _extract_blocks(lay: _FixedZLayout, x: np.ndarray) -> list:
    blocks = []
    l = lay.l
    for i in range(lay.n_samples):
        row = []
        for kk in range(lay.k):
            off = lay.off(i, kk)
            row.append(
                DualBlock(
                    mu=np.maximum(x[off : off + 3], 0.0),
                    nu=np.maximum(x[off + 3 : off + 3 + l], 0.0),
                    mu_t=np.maximum(x[off + 3 + l : off + 6 + l], 0.0),
                    nu_t=np.maximum(x[off + 6 + l : off + 6 + 2 * l], 0.0),
                    v=float(x[off + lay.blk - 1]),
                )
            )
        blocks.append(row)
    return blocks


def _closed_form_blocks(
    instance: SsdInstance,
    split: IntervalSplit,
    z: np.ndarray,
    budget_slack: float = 0.0,
):
    """Analytic multiplier grid for the frozen-z phase, when the budget allows.

    With nu = 0 the dual rows admit a closed-form choice that reproduces the
    pointwise (radius -> 0) per-scenario supremum exactly: on the branch with
    the positive part active, mu = (1, 0, 0) when the benchmark payoff sits
    below the interval top (row value z0'xi - z'xi) and mu = 0 otherwise (row
    value hi - z'xi); on the branch with the positive part vanished, mu~ = 0
    when the benchmark payoff clears the interval bottom (row value 0) and
    mu~ = (1, 0, 1) otherwise (row value z0'xi - lo).  The selection depends
    only on the benchmark, never on z, so the fixed-multiplier phase built on
    these blocks is the exact small-radius split problem rather than a local
    surrogate and the alternation cannot stall on a multiplier choice.

    Returns None when some interval's budget row cannot absorb the transport
    term on top of the averaged row values, in which case the caller should
    fall back to the solver-based phase (whose nu > 0 blocks may still fit).
    """
    z = np.asarray(z, dtype=float)
    z0 = instance.benchmark
    samples = instance.ball.samples
    n_samp = samples.shape[0]
    eps = instance.ball.radius
    l = instance.support.C.shape[0]
    pay0 = samples @ z0
    norm_by_mu1 = {0.0: float(np.linalg.norm(z)), 1.0: float(np.linalg.norm(z - z0))}
    norm_z0 = float(np.linalg.norm(z0))

    blocks = [[None] * split.k for _ in range(n_samp)]
    for kk in range(split.k):
        lo, hi = split.endpoints[kk]
        lam_need = 0.0
        mean_v = 0.0
        for i in range(n_samp):
            mu1 = 1.0 if pay0[i] < hi else 0.0
            mu_t1 = 0.0 if pay0[i] >= lo else 1.0
            v = pointwise_sup_eta(z, z0, samples[i], lo, hi)
            lam_need = max(lam_need, norm_by_mu1[mu1], mu_t1 * norm_z0)
            mean_v += v / n_samp
            blocks[i][kk] = DualBlock(
                mu=np.array([mu1, 0.0, 0.0]),
                nu=np.zeros(l),
                mu_t=np.array([mu_t1, 0.0, mu_t1]),
                nu_t=np.zeros(l),
                v=v,
            )
        if eps * lam_need + mean_v > budget_slack + 1e-12:
            return None
    return blocks


def solve_master_fixed_z(
    instance: SsdInstance,
    split: IntervalSplit,
    z: np.ndarray,
    tols: dict | None = None,
    budget_slack: Optional[float] = None,
):
    """Solve the frozen-z master; returns the DualBlock grid [i][k].

    The phase is a pure feasibility problem, so any block grid would do,
    but its feasible set is unbounded (nothing caps lambda).  Minimizing
    sum_k lambda_k keeps the iterates bounded and hands the next phase the
    tightest transport budgets; feasibility is unchanged."""
    if budget_slack is None:
        budget_slack = default_budget_slack(instance)
    prog = build_master_fixed_z(instance, split, z, budget_slack=budget_slack)
    c = prog.c.copy()
    c[: split.k] = 1.0
    prog = ConicProgram(
        c=c, a_in=prog.a_in, b_in=prog.b_in, socs=prog.socs, lb=prog.lb
    )
    res = solve(prog, tols)
    if res.status == "infeasible":
        raise ValueError("z infeasible for K-split upper bound")
    if res.x is None:
        raise RuntimeError(f"fixed-z master solve failed ({res.status})")
    lay = _FixedZLayout(
        n_samples=instance.ball.n_samples, k=split.k, l=instance.support.C.shape[0]
    )
    return _extract_blocks(lay, res.x), res


def _phase_blocks(
    instance: SsdInstance,
    split: IntervalSplit,
    z: np.ndarray,
    tols: dict | None,
    budget_slack: float,
):
    """Multiplier grid for the current iterate: closed form when admissible,
    otherwise the frozen-z master solve (raises ValueError if even that is
    infeasible)."""
    blocks = _closed_form_blocks(instance, split, z, budget_slack)
    if blocks is not None:
        return blocks
    blocks, _ = solve_master_fixed_z(instance, split, z, tols, budget_slack)
    return blocks


def build_master_fixed_multipliers(
    instance: SsdInstance,
    split: IntervalSplit,
    blocks: list,
    budget_slack: float = 0.0,
) -> ConicProgram:
    """The upper-bound master with every mu and mu~ frozen: an SOCP in
    (z, lambda, nu, nu~, V) minimizing the true objective."""
    C, d = instance.support.C, instance.support.d
    l = C.shape[0]
    samples = instance.ball.samples
    n_samp = samples.shape[0]
    K = split.k
    n = instance.n
    eps = instance.ball.radius
    if len(blocks) != n_samp or any(len(row) != K for row in blocks):
        raise ValueError("multiplier grid must be N x K")
    for row in blocks:
        for blk in row:
            blk.validate()

    has_epi = instance.half_norm_objective
    t_cols = 1 if has_epi else 0
    lam0 = n + t_cols
    blk2 = 2 * l + 1
    base = lam0 + K

    def off(i, kk):
        return base + (i * K + kk) * blk2

    nvar = base + n_samp * K * blk2
    pay0 = samples @ instance.benchmark
    slack = d[None, :] - samples @ C.T

    co = _Coo()
    ds = instance.decision_set
    if ds.a_ub.shape[0]:
        for a, b in zip(ds.a_ub, ds.b_ub):
            nz = np.nonzero(a)[0]
            co.add(nz.tolist(), a[nz].tolist(), b)
    for kk in range(K):
        cols = [lam0 + kk] + [off(i, kk) + blk2 - 1 for i in range(n_samp)]
        co.add(cols, [eps] + [1.0 / n_samp] * n_samp, budget_slack)

    socs = []
    for i in range(n_samp):
        for kk in range(K):
            b = blocks[i][kk]
            mu, mu_t = b.mu, b.mu_t
            lo, hi = split.endpoints[kk]
            nu = list(range(off(i, kk), off(i, kk) + l))
            nu_t = list(range(off(i, kk) + l, off(i, kk) + 2 * l))
            v = off(i, kk) + blk2 - 1
            zc = list(range(n))
            # V >= d'nu - (1+mu_2) xi_i'z + mu_1 xi_i'z0 - xi_i'C'nu - mu_3 lo + (1-mu_1+mu_2+mu_3) hi
            co.add(
                [v] + zc + nu,
                [-1.0] + list(-(1.0 + mu[1]) * samples[i]) + list(slack[i]),
                -mu[0] * pay0[i] + mu[2] * lo - (1 - mu[0] + mu[1] + mu[2]) * hi,
            )
            # V >= d'nu~ + mu~_1 xi_i'z0 + mu~_2 xi_i'z - xi_i'C'nu~ - mu~_3 lo + (-mu~_1-mu~_2+mu~_3) hi
            co.add(
                [v] + zc + nu_t,
                [-1.0] + list(mu_t[1] * samples[i]) + list(slack[i]),
                -mu_t[0] * pay0[i] + mu_t[2] * lo - (-mu_t[0] - mu_t[1] + mu_t[2]) * hi,
            )
            socs.append(
                _soc_sparse(
                    nvar,
                    [(zc, (1.0 + mu[1]) * np.eye(n)), (nu, C.T)],
                    -mu[0] * instance.benchmark,
                    lam0 + kk,
                )
            )
            socs.append(
                _soc_sparse(
                    nvar,
                    [(zc, -mu_t[1] * np.eye(n)), (nu_t, C.T)],
                    -mu_t[0] * instance.benchmark,
                    lam0 + kk,
                )
            )

    a_in, b_in = co.matrix(nvar)
    lb = np.full(nvar, -np.inf)
    lb[lam0:base] = 0.0
    for i in range(n_samp):
        for kk in range(K):
            lb[off(i, kk) : off(i, kk) + 2 * l] = 0.0

    c = np.zeros(nvar)
    if has_epi:
        c[n] = 0.5
        f = sp.hstack([sp.identity(n), sp.csr_matrix((n, nvar - n))]).tocsr()
        a_t = np.zeros(nvar)
        a_t[n] = 1.0
        socs.append(SocRow(F=f, g=np.zeros(n), a=a_t, b=0.0))
    else:
        c[:n] = instance.objective

    kwargs = {}
    if ds.a_eq.shape[0]:
        kwargs = {
            "a_eq": sp.hstack(
                [sp.csr_matrix(ds.a_eq), sp.csr_matrix((ds.a_eq.shape[0], nvar - n))]
            ).tocsr(),
            "b_eq": ds.b_eq,
        }
    return ConicProgram(c=c, a_in=a_in, b_in=b_in, socs=socs, lb=lb, **kwargs)


def robust_constraint_value(
    instance: SsdInstance,
    split: IntervalSplit,
    z: np.ndarray,
    tols: dict | None = None,
):
    """Per-interval constraint values g_k(z, K) and their max g(z, K).

    Each g_k is min over lambda_k >= 0 of lambda_k eps + the averaged dual
    subproblem values; g(z, K) <= 0 certifies z feasible for the split
    upper-bound problem."""
    z = np.asarray(z, dtype=float)
    n_samp = instance.ball.n_samples
    eps = instance.ball.radius
    per_k = np.empty(split.k)
    for kk in range(split.k):
        single = IntervalSplit(k=1, endpoints=split.endpoints[kk : kk + 1])
        prog = build_master_fixed_z(instance, single, z)
        c = prog.c.copy()
        c[0] = eps
        lay = _FixedZLayout(n_samples=n_samp, k=1, l=instance.support.C.shape[0])
        for i in range(n_samp):
            c[lay.off(i, 0) + lay.blk - 1] = 1.0 / n_samp
        # drop the budget row (it's the objective now), keep everything else
        prog2 = ConicProgram(
            c=c,
            a_in=prog.a_in[1:],
            b_in=prog.b_in[1:],
            socs=prog.socs,
            lb=prog.lb,
        )
        res = solve(prog2, tols)
        if res.x is None or res.status in ("infeasible", "unbounded"):
            raise RuntimeError(
                f"robust constraint evaluation failed on interval {kk} ({res.status})"
            )
        per_k[kk] = res.obj
    return per_k, float(per_k.max())


def primal_subproblem(
    instance: SsdInstance,
    split: IntervalSplit,
    z: np.ndarray,
    lam_k: float,
    i: int,
    k: int,
    tols: dict | None = None,
):
    """The two primal subproblems over (xi, eta, s, m) for one (i, k).

    Returns (V_S1, V_S2, max).  A branch whose eta-sign constraint empties
    the feasible set contributes -inf.  Unbounded branches raise."""
    if lam_k < 0:
        raise ValueError("lambda must be nonnegative")
    z = np.asarray(z, dtype=float)
    C, d = instance.support.C, instance.support.d
    n = instance.n
    lo, hi = split.endpoints[k]
    xi_hat = instance.ball.samples[i]
    z0 = instance.benchmark
    nvar = n + 3  # xi | eta | s | m
    # cap m at the support diameter: the cap never binds at an optimum, but
    # it closes the flat direction the objective leaves open when lam_k = 0
    try:
        box_lo, box_hi = _support_box(instance.support)
        m_cap = 1.0 + float(np.linalg.norm(box_hi - box_lo))
    except ValueError:
        m_cap = np.inf

    def branch(first: bool) -> float:
        co = _Coo()
        co.add(list(range(n)) + [n, n + 1], list(-z0) + [1.0, -1.0], 0.0)
        if first:
            co.add(list(range(n)) + [n], list(z) + [-1.0], 0.0)   # z'xi <= eta
        else:
            co.add(list(range(n)) + [n], list(-z) + [1.0], 0.0)   # eta <= z'xi
        for crow, b in zip(C, d):
            nz = np.nonzero(crow)[0]
            co.add(nz.tolist(), crow[nz].tolist(), b)
        co.add([n], [1.0], hi)
        co.add([n], [-1.0], -lo)
        a_in, b_in = co.matrix(nvar)
        lb = np.full(nvar, -np.inf)
        lb[n + 1] = 0.0
        ub = np.full(nvar, np.inf)
        ub[n + 2] = m_cap
        c = np.zeros(nvar)
        c[n + 1] = 1.0
        c[n + 2] = lam_k
        if first:
            c[:n] += z
            c[n] -= 1.0
        f = sp.hstack([sp.identity(n), sp.csr_matrix((n, 3))]).tocsr()
        a_m = np.zeros(nvar)
        a_m[n + 2] = 1.0
        soc = SocRow(F=f, g=-xi_hat, a=a_m, b=0.0)
        res = solve(
            ConicProgram(c=c, a_in=a_in, b_in=b_in, socs=[soc], lb=lb, ub=ub), tols
        )
        if res.status == "infeasible":
            return -np.inf
        if res.status == "unbounded":
            raise RuntimeError(
                f"subproblem (i={i}, k={k}) unbounded; the support must be bounded"
            )
        if res.x is None:
            raise RuntimeError(f"subproblem (i={i}, k={k}) solve failed ({res.status})")
        return -res.obj

    v1 = branch(True)
    v2 = branch(False)
    return v1, v2, max(v1, v2)


def strict_feasibility_margin(
    instance: SsdInstance,
    split: IntervalSplit,
    z: np.ndarray,
    i: int,
    k: int,
    first_branch: bool,
    tols: dict | None = None,
) -> float:
    """Chebyshev radius of the linear part of one primal subproblem.

    A positive margin certifies strict feasibility (the transport-cone row
    is always strictly satisfiable by enlarging m), which is what licenses
    trusting the dual values; nonpositive means the duality-gap check can
    only warn."""
    z = np.asarray(z, dtype=float)
    C, d = instance.support.C, instance.support.d
    n = instance.n
    lo, hi = split.endpoints[k]
    z0 = instance.benchmark
    nvar = n + 3  # xi | eta | s | radius

    co = _Coo()

    def row(a, b):
        norm = float(np.linalg.norm(a))
        nz = np.nonzero(a)[0]
        co.add(nz.tolist() + [n + 2], a[nz].tolist() + [norm], b)

    row(np.concatenate([-z0, [1.0, -1.0]]), 0.0)
    sign = 1.0 if first_branch else -1.0
    row(np.concatenate([sign * z, [-sign, 0.0]]), 0.0)
    for crow, b in zip(C, d):
        row(np.concatenate([crow, [0.0, 0.0]]), b)
    row(np.concatenate([np.zeros(n), [1.0, 0.0]]), hi)
    row(np.concatenate([np.zeros(n), [-1.0, 0.0]]), -lo)
    row(np.concatenate([np.zeros(n), [0.0, -1.0]]), 0.0)
    a_in, b_in = co.matrix(nvar)
    c = np.zeros(nvar)
    c[n + 2] = -1.0
    ub = np.full(nvar, np.inf)
    ub[n + 2] = 1.0
    res = solve(ConicProgram(c=c, a_in=a_in, b_in=b_in, ub=ub), tols)
    if res.x is None:
        return -np.inf
    return float(res.x[n + 2])


def sca_solve(
    instance: SsdInstance,
    split: IntervalSplit,
    z_start: Optional[np.ndarray] = None,
    max_iter: int = SCA_MAX_ITER,
    tol: float = SCA_STEP_TOL,
    tols: dict | None = None,
    budget_slack: Optional[float] = None,
) -> BoundReport:
    """Alternating fixed-z / fixed-multiplier solves (an upper-bound pass).

    Every trace entry is f(z) of an iterate feasible for the split problem,
    hence a valid upper bound; the sequence is nonincreasing by construction
    (a step that fails to improve is rejected and iteration stops)."""
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if budget_slack is None:
        budget_slack = default_budget_slack(instance)
    z = np.asarray(
        instance.benchmark if z_start is None else z_start, dtype=float
    ).copy()
    flags: list = []
    if split.k > 1 and split.r_max == split.r_min:
        split = IntervalSplit(k=1, endpoints=split.endpoints[:1])
        flags.append("degenerate eta range: collapsed split to K=1")
    t0 = time.perf_counter()

    try:
        blocks = _phase_blocks(instance, split, z, tols, budget_slack)
    except ValueError:
        raise ValueError("start infeasible -- increase K or change start") from None

    value = instance.objective_value(z)
    trace = [value]
    iterations = 0
    status = "optimal"
    for _ in range(max_iter):
        master = build_master_fixed_multipliers(
            instance, split, blocks, budget_slack=budget_slack
        )
        res = solve(master, tols)
        if res.status == "infeasible":
            flags.append("dead-end SCA step; keeping previous iterate")
            break
        if res.x is None:
            flags.append("early stop, still a valid upper bound")
            status = res.status
            break
        z_new = res.x[: instance.n]
        value_new = instance.objective_value(z_new)
        if value_new > value:
            flags.append("step rejected: objective would increase")
            break
        step = float(np.max(np.abs(z_new - z)))
        z = z_new
        value = value_new
        trace.append(value)
        iterations += 1
        if step <= tol:
            break
        try:
            blocks = _phase_blocks(instance, split, z, tols, budget_slack)
        except (ValueError, RuntimeError) as exc:
            flags.append(f"early stop, still a valid upper bound ({exc})")
            break
    else:
        flags.append("iteration limit reached")

    return BoundReport(
        bound_type="upper",
        value=value,
        solution=list(z),
        status=status,
        iterations=iterations,
        trace=[float(v) for v in trace],
        timings={"total": time.perf_counter() - t0},
        config={
            "K": int(split.k),
            "epsilon": float(instance.ball.radius),
            "tol": float(tol),
            "max_iter": int(max_iter),
            "budget_slack": float(budget_slack),
            "start": list(np.asarray(instance.benchmark if z_start is None else z_start, dtype=float)),
        },
        flags=flags,
    )
