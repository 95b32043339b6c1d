"""Sample-approximation lower bound on the robust SSD-constrained optimum.

The discretized problem restricts the dominance constraint to a finite grid
of target levels eta_k and distributions supported on a finite set xi_bar_j;
relaxing constraints can only shrink the feasible set's complement, so the
optimum here is a certified lower bound on the true robust optimum.

After dualizing each worst-case expectation the problem is one LP:

    min  f(z)
    s.t. lambda_k eps - (1/N) sum_i beta_ik              <= 0            (a)
         beta_ik + s_jk - lambda_k ||xi_bar_j - xi_hat_i||
                                    <= (eta_k - z0'xi_bar_j)_+           (b)
         s_jk >= eta_k - z'xi_bar_j                                      (c)
         z in Z, lambda >= 0, s >= 0, beta free.

The cutting-plane solver keeps (b)/(c) only for accumulated index sets
J1 (xi) x J2 (eta), finds the most violated (i, j, k) against the full
grids, and grows the sets until the worst violation delta is below
VIOL_TOL.  Blocks for k outside J2 are omitted entirely: with beta free
and no (b) rows they never bind, and the delta check treats them as
lambda_k = 0, beta_ik = 0.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .ambiguity import worst_case_expectation_discrete
from .conic import ConicProgram, SocRow, solve
from .model import SampleGrids, SsdInstance
from .reports import BoundReport

VIOL_TOL = 1e-7
MONOLITHIC_ROW_LIMIT = 200_000
BATCH_ROW_THRESHOLD = 50_000


@dataclass(frozen=True)
class LowerLpLayout:
    """Variable/constraint indexing of the full LP (all j, all k).

    Order: [z | t | lambda | beta | s] with t present only for the
    norm-epigraph objective; beta is indexed i-major, s is j-major.
    """

    n: int
    n_samples: int
    n_xi: int
    n_eta: int
    has_epigraph: bool

    @property
    def t_index(self) -> Optional[int]:
        return self.n if self.has_epigraph else None

    @property
    def lam_offset(self) -> int:
        return self.n + (1 if self.has_epigraph else 0)

    @property
    def beta_offset(self) -> int:
        return self.lam_offset + self.n_eta

    @property
    def s_offset(self) -> int:
        return self.beta_offset + self.n_samples * self.n_eta

    def lam(self, k: int) -> int:
        return self.lam_offset + k

    def beta(self, i: int, k: int) -> int:
        return self.beta_offset + i * self.n_eta + k

    def s(self, j: int, k: int) -> int:
        return self.s_offset + j * self.n_eta + k

    @property
    def nvar(self) -> int:
        return self.s_offset + self.n_xi * self.n_eta

    @property
    def n_dominance_rows(self) -> int:
        m, n_s, n_x = self.n_eta, self.n_samples, self.n_xi
        return m + n_s * n_x * m + n_x * m


@dataclass
class CutSets:
    j1: set = field(default_factory=set)
    j2: set = field(default_factory=set)
    trace: list = field(default_factory=list)


def lower_lp_layout(instance: SsdInstance, grids: SampleGrids) -> LowerLpLayout:
    return LowerLpLayout(
        n=instance.n,
        n_samples=instance.ball.n_samples,
        n_xi=grids.n_xi,
        n_eta=grids.n_eta,
        has_epigraph=instance.half_norm_objective,
    )


@dataclass
class _Assembled:
    program: ConicProgram
    n: int
    has_epigraph: bool
    j_list: list
    k_list: list
    lam_offset: int
    beta_offset: int

    def split(self, x: np.ndarray):
        z = x[: self.n]
        nk = len(self.k_list)
        lam = x[self.lam_offset : self.lam_offset + nk]
        n_samp = (len(x) - self.beta_offset - len(self.j_list) * nk) // max(1, nk) if nk else 0
        beta = x[self.beta_offset : self.beta_offset + n_samp * nk].reshape(n_samp, nk)
        return z, lam, beta


def _grid_data(instance: SsdInstance, grids: SampleGrids):
    xi = grids.xi_samples
    eta = grids.eta_samples
    dists = np.linalg.norm(xi[None, :, :] - instance.ball.samples[:, None, :], axis=2)
    bench = xi @ instance.benchmark
    pos0 = np.maximum(eta[None, :] - bench[:, None], 0.0)  # (n_xi, n_eta)
    return xi, eta, dists, bench, pos0


def _assemble(
    instance: SsdInstance,
    grids: SampleGrids,
    j_list,
    k_list,
) -> _Assembled:
    xi, eta, dists, bench, pos0 = _grid_data(instance, grids)
    n = instance.n
    n_samp = instance.ball.n_samples
    nj, nk = len(j_list), len(k_list)
    eps = instance.ball.radius
    has_epi = instance.half_norm_objective

    t_cols = 1 if has_epi else 0
    lam0 = n + t_cols
    beta0 = lam0 + nk
    s0 = beta0 + n_samp * nk
    nvar = s0 + nj * nk

    def beta_col(i, kk):
        return beta0 + i * nk + kk

    def s_col(jj, kk):
        return s0 + jj * nk + kk

    rows, cols, vals, rhs = [], [], [], []
    r = 0

    ds = instance.decision_set
    if ds.a_ub is not None and ds.a_ub.shape[0]:
        for a, b in zip(ds.a_ub, ds.b_ub):
            nz = np.nonzero(a)[0]
            rows.extend([r] * len(nz))
            cols.extend(nz.tolist())
            vals.extend(a[nz].tolist())
            rhs.append(float(b))
            r += 1

    for kk, k in enumerate(k_list):
        rows.append(r)
        cols.append(lam0 + kk)
        vals.append(eps)
        for i in range(n_samp):
            rows.append(r)
            cols.append(beta_col(i, kk))
            vals.append(-1.0 / n_samp)
        rhs.append(0.0)
        r += 1

    for i in range(n_samp):
        for jj, j in enumerate(j_list):
            for kk, k in enumerate(k_list):
                rows.extend([r, r, r])
                cols.extend([beta_col(i, kk), s_col(jj, kk), lam0 + kk])
                vals.extend([1.0, 1.0, -dists[i, j]])
                rhs.append(pos0[j, k])
                r += 1

    for jj, j in enumerate(j_list):
        for kk, k in enumerate(k_list):
            nz = np.nonzero(xi[j])[0]
            rows.extend([r] * (len(nz) + 1))
            cols.extend(nz.tolist() + [s_col(jj, kk)])
            vals.extend((-xi[j][nz]).tolist() + [-1.0])
            rhs.append(-eta[k])
            r += 1

    a_in = sp.coo_matrix((vals, (rows, cols)), shape=(r, nvar)).tocsr()
    b_in = np.asarray(rhs)

    a_eq = None
    b_eq = None
    if ds.a_eq is not None and ds.a_eq.shape[0]:
        a_eq = sp.hstack(
            [sp.csr_matrix(ds.a_eq), sp.csr_matrix((ds.a_eq.shape[0], nvar - n))]
        ).tocsr()
        b_eq = ds.b_eq

    lb = np.full(nvar, -np.inf)
    lb[lam0:beta0] = 0.0
    lb[s0:] = 0.0

    c = np.zeros(nvar)
    socs = []
    if has_epi:
        c[n] = 0.5
        f = sp.hstack([sp.identity(n), sp.csr_matrix((n, nvar - n))]).tocsr()
        a_t = np.zeros(nvar)
        a_t[n] = 1.0
        socs.append(SocRow(F=f, g=np.zeros(n), a=a_t, b=0.0))
    else:
        c[:n] = instance.objective

    kwargs = {}
    if a_eq is not None:
        kwargs = {"a_eq": a_eq, "b_eq": b_eq}
    program = ConicProgram(c=c, a_in=a_in, b_in=b_in, socs=socs, lb=lb, **kwargs)
    return _Assembled(
        program=program,
        n=n,
        has_epigraph=has_epi,
        j_list=list(j_list),
        k_list=list(k_list),
        lam_offset=lam0,
        beta_offset=beta0,
    )


def build_lower_lp(instance: SsdInstance, grids: SampleGrids) -> ConicProgram:
    """The full discretized LP over all grid points."""
    return _assemble(instance, grids, range(grids.n_xi), range(grids.n_eta)).program


def dominance_certificate(
    instance: SsdInstance, grids: SampleGrids, z: np.ndarray
) -> float:
    """max_k of the exact worst-case expectation of
    (eta_k - z'xi)_+ - (eta_k - z0'xi)_+ over the discrete ball; <= 0 means
    z satisfies every discretized dominance constraint."""
    xi, eta, dists, bench, pos0 = _grid_data(instance, grids)
    port = xi @ z
    worst = -np.inf
    for k in range(grids.n_eta):
        psi = np.maximum(eta[k] - port, 0.0) - pos0[:, k]
        val, _ = worst_case_expectation_discrete(psi, xi, instance.ball)
        worst = max(worst, val)
    return float(worst)


def _report_from_solution(
    instance, grids, value, z, status, iterations, residuals, method, extra_cfg=None
) -> BoundReport:
    cfg = {
        "method": method,
        "n_xi": int(grids.n_xi),
        "n_eta": int(grids.n_eta),
        "epsilon": float(instance.ball.radius),
    }
    if extra_cfg:
        cfg.update(extra_cfg)
    return BoundReport(
        bound_type="lower",
        value=value,
        solution=list(np.asarray(z, dtype=float)),
        status=status,
        iterations=iterations,
        residuals=residuals,
        config=cfg,
    )


def solve_lower(
    instance: SsdInstance,
    grids: SampleGrids,
    method: str = "auto",
    tols: dict | None = None,
    certificate: bool = True,
) -> BoundReport:
    """Solve the discretized lower bound; method 'monolithic' builds the
    full LP, 'cutting_plane' grows it, 'auto' picks by problem size."""
    if method == "auto":
        layout = lower_lp_layout(instance, grids)
        method = (
            "monolithic"
            if layout.n_dominance_rows <= MONOLITHIC_ROW_LIMIT
            else "cutting_plane"
        )
    if method == "cutting_plane":
        report, _ = cutting_plane(instance, grids, tols=tols, certificate=certificate)
        return report
    if method != "monolithic":
        raise ValueError(f"unknown lower-bound method {method!r}")

    t0 = time.perf_counter()
    asm = _assemble(instance, grids, range(grids.n_xi), range(grids.n_eta))
    t_build = time.perf_counter() - t0
    res = solve(asm.program, tols)
    if res.status == "infeasible" or res.x is None:
        raise ValueError("lower approximation infeasible")
    z = res.x[: instance.n]
    residuals = dict(res.residuals)
    if certificate:
        residuals["dominance_violation"] = dominance_certificate(instance, grids, z)
    report = _report_from_solution(
        instance, grids, res.obj, z, res.status, res.iterations, residuals, "monolithic"
    )
    report.timings = {"build": t_build, "solve": time.perf_counter() - t0 - t_build}
    return report


def cutting_plane(
    instance: SsdInstance,
    grids: SampleGrids,
    max_iter: Optional[int] = None,
    viol_tol: float = VIOL_TOL,
    batch: Optional[int] = None,
    cuts: Optional[CutSets] = None,
    tols: dict | None = None,
    certificate: bool = True,
) -> tuple[BoundReport, CutSets]:
    """Delayed constraint generation for the discretized LP.

    Each round solves the relaxation restricted to the current cut sets,
    computes the worst violation delta over every (sample i, support j,
    level k), and admits the argmax pair (j, k) — ties broken by smallest
    (i, j, k) — until delta <= viol_tol.  batch > 1 admits that many
    distinct violated pairs per round; the default picks 1 for small grids
    (finest possible trace) and 16 once the full row count passes
    BATCH_ROW_THRESHOLD, where one-at-a-time admission wastes most of the
    time re-solving near-identical masters.  Passing prior CutSets
    warm-starts the sets (useful when regenerating grids)."""
    if max_iter is None:
        max_iter = grids.n_xi * grids.n_eta
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if batch is None:
        batch = 1 if grids.n_xi * grids.n_eta <= BATCH_ROW_THRESHOLD else 16
    if batch < 1:
        raise ValueError("batch must be >= 1")

    xi, eta, dists, bench, pos0 = _grid_data(instance, grids)
    n_samp = instance.ball.n_samples
    cuts = cuts if cuts is not None else CutSets()
    flags: list = []
    t0 = time.perf_counter()

    res = None
    z = None
    value = None
    delta = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        j_list = sorted(cuts.j1)
        k_list = sorted(cuts.j2)
        asm = _assemble(instance, grids, j_list, k_list)
        res = solve(asm.program, tols)
        if res.status == "infeasible":
            raise ValueError("lower approximation infeasible")
        if res.x is None:
            flags.append(f"master solve failed ({res.status})")
            break
        z, lam_m, beta_m = asm.split(res.x)
        value = res.obj

        lam = np.zeros(grids.n_eta)
        beta = np.zeros((n_samp, grids.n_eta))
        if k_list:
            lam[k_list] = lam_m
            beta[:, k_list] = beta_m

        posz = np.maximum(eta[None, :] - (xi @ z)[:, None], 0.0)
        viol = (
            beta[:, None, :]
            - lam[None, None, :] * dists[:, :, None]
            + posz[None, :, :]
            - pos0[None, :, :]
        )
        delta = float(viol.max())
        added = []
        if delta > viol_tol:
            added = _select_cuts(viol, cuts, viol_tol, batch)
            for j, k in added:
                cuts.j1.add(j)
                cuts.j2.add(k)
        cuts.trace.append(
            {
                "iteration": iterations,
                "delta": delta,
                "value": None if value is None else float(value),
                "added": [[int(j), int(k)] for j, k in added],
                "cut_sizes": [len(cuts.j1), len(cuts.j2)],
            }
        )
        if delta <= viol_tol:
            break
        if not added:
            flags.append("stalled: violations only on pairs already cut")
            break
    else:
        iterations = max_iter

    if delta > viol_tol and not flags:
        flags.append("not converged")
    if res is not None and res.status != "optimal":
        flags.append(f"final master status {res.status}")

    residuals = dict(res.residuals) if res is not None else {}
    residuals["delta"] = delta
    if certificate and z is not None:
        residuals["dominance_violation"] = dominance_certificate(instance, grids, z)
    report = _report_from_solution(
        instance,
        grids,
        value if value is not None else np.nan,
        z if z is not None else np.full(instance.n, np.nan),
        res.status if res is not None else "inaccurate",
        iterations,
        residuals,
        "cutting_plane",
        extra_cfg={"violTol": viol_tol, "batch": batch},
    )
    report.flags = flags
    report.trace = [dict(t) for t in cuts.trace]
    report.timings = {"total": time.perf_counter() - t0}
    return report, cuts


def _select_cuts(viol: np.ndarray, cuts: CutSets, viol_tol: float, batch: int):
    """Most-violated (j, k) pairs not already jointly cut, by decreasing
    violation; ties resolve to the smallest (i, j, k) through C-order."""
    n_samp, n_xi, n_eta = viol.shape
    pair_viol = viol.max(axis=0)
    mask = np.zeros((n_xi, n_eta), dtype=bool)
    if cuts.j1 and cuts.j2:
        mask[np.ix_(sorted(cuts.j1), sorted(cuts.j2))] = True
    cand = np.where(~mask.ravel(), pair_viol.ravel(), -np.inf)
    order = np.argsort(-cand, kind="stable")
    out = []
    for flat in order[:batch]:
        if cand[flat] <= viol_tol:
            break
        out.append(divmod(int(flat), n_eta))
    return out


def classic_ssd_lp(instance: SsdInstance, tols: dict | None = None) -> BoundReport:
    """Non-robust SSD-constrained problem on the empirical distribution,
    with target levels at the benchmark's realized payoffs."""
    xi = instance.ball.samples
    n_samp = instance.ball.n_samples
    n = instance.n
    eta = xi @ instance.benchmark
    rhs_k = np.maximum(eta[None, :] - eta[:, None], 0.0).mean(axis=0)

    has_epi = instance.half_norm_objective
    t_cols = 1 if has_epi else 0
    w0 = n + t_cols
    nvar = w0 + n_samp * n_samp

    rows, cols, vals, rhs = [], [], [], []
    r = 0
    ds = instance.decision_set
    if ds.a_ub is not None and ds.a_ub.shape[0]:
        for a, b in zip(ds.a_ub, ds.b_ub):
            nz = np.nonzero(a)[0]
            rows.extend([r] * len(nz))
            cols.extend(nz.tolist())
            vals.extend(a[nz].tolist())
            rhs.append(float(b))
            r += 1
    for k in range(n_samp):
        for i in range(n_samp):
            rows.append(r)
            cols.append(w0 + i * n_samp + k)
            vals.append(1.0 / n_samp)
        rhs.append(float(rhs_k[k]))
        r += 1
    for i in range(n_samp):
        for k in range(n_samp):
            nz = np.nonzero(xi[i])[0]
            rows.extend([r] * (len(nz) + 1))
            cols.extend(nz.tolist() + [w0 + i * n_samp + k])
            vals.extend((-xi[i][nz]).tolist() + [-1.0])
            rhs.append(-float(eta[k]))
            r += 1
    a_in = sp.coo_matrix((vals, (rows, cols)), shape=(r, nvar)).tocsr()

    lb = np.full(nvar, -np.inf)
    lb[w0:] = 0.0
    c = np.zeros(nvar)
    socs = []
    if has_epi:
        c[n] = 0.5
        f = sp.hstack([sp.identity(n), sp.csr_matrix((n, nvar - n))]).tocsr()
        a_t = np.zeros(nvar)
        a_t[n] = 1.0
        socs.append(SocRow(F=f, g=np.zeros(n), a=a_t, b=0.0))
    else:
        c[:n] = instance.objective
    kwargs = {}
    if ds.a_eq is not None and ds.a_eq.shape[0]:
        kwargs = {
            "a_eq": sp.hstack(
                [sp.csr_matrix(ds.a_eq), sp.csr_matrix((ds.a_eq.shape[0], nvar - n))]
            ).tocsr(),
            "b_eq": ds.b_eq,
        }
    res = solve(ConicProgram(c=c, a_in=a_in, b_in=np.asarray(rhs), socs=socs, lb=lb, **kwargs), tols)
    if res.status == "infeasible" or res.x is None:
        raise ValueError("classic SSD problem reported infeasible")
    return BoundReport(
        bound_type="classic",
        value=res.obj,
        solution=list(res.x[:n]),
        status=res.status,
        iterations=res.iterations,
        residuals=dict(res.residuals),
        config={"method": "classic", "n_samples": int(n_samp)},
    )
