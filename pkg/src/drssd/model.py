"""Domain types for SSD-constrained optimization under Wasserstein ambiguity:
the support polytope Xi = {xi : C xi <= d}, the empirical ball, the instance
(objective, decision polyhedron Z, benchmark z0), the benchmark payoff range
R = z0' Xi, and the finite sample grids Xi_N / Gamma_M used by the lower
bound.  All types are immutable after construction; operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conic import ConicProgram
from .conic.backends import DEFAULT_TOLS, solve_scipy_linprog

FEAS_TOL = 1e-9
DEDUP_TOL = 1e-12
MAX_REJECTION_ATTEMPTS = 10**6


@dataclass(frozen=True, eq=False)
class SupportPolytope:
    """Xi = {xi in R^n : C xi <= d}."""

    C: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        d = np.atleast_1d(np.asarray(self.d, dtype=float))
        if C.shape[0] < 1 or C.shape[1] < 1:
            raise ValueError("support polytope needs l >= 1 rows and n >= 1 columns")
        if d.shape != (C.shape[0],):
            raise ValueError("support polytope: C rows and d length differ")
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(d))):
            raise ValueError("support polytope: nonfinite data")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.C.shape[1]

    @property
    def l(self) -> int:
        return self.C.shape[0]

    def contains(self, xi: np.ndarray, tol: float = FEAS_TOL) -> bool:
        return bool(np.all(self.C @ np.asarray(xi, dtype=float) <= self.d + tol))


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """{z : a_ub z <= b_ub, a_eq z = b_eq}; equalities optional."""

    a_ub: np.ndarray
    b_ub: np.ndarray
    a_eq: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    b_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        a_ub = np.atleast_2d(np.asarray(self.a_ub, dtype=float))
        b_ub = np.atleast_1d(np.asarray(self.b_ub, dtype=float))
        a_eq = np.atleast_2d(np.asarray(self.a_eq, dtype=float))
        b_eq = np.atleast_1d(np.asarray(self.b_eq, dtype=float))
        n = a_ub.shape[1] if a_ub.size else (a_eq.shape[1] if a_eq.size else 0)
        if a_ub.size == 0:
            a_ub = np.zeros((0, n))
            b_ub = np.zeros(0)
        if a_eq.size == 0:
            a_eq = np.zeros((0, n))
            b_eq = np.zeros(0)
        if a_ub.size and b_ub.shape != (a_ub.shape[0],):
            raise ValueError("polyhedron: a_ub rows and b_ub length differ")
        if a_eq.size and (a_eq.shape[1] != n or b_eq.shape != (a_eq.shape[0],)):
            raise ValueError("polyhedron: equality block dimensions inconsistent")
        object.__setattr__(self, "a_ub", a_ub)
        object.__setattr__(self, "b_ub", b_ub)
        object.__setattr__(self, "a_eq", a_eq)
        object.__setattr__(self, "b_eq", b_eq)

    @property
    def n(self) -> int:
        return self.a_ub.shape[1]

    def contains(self, z: np.ndarray, tol: float = FEAS_TOL) -> bool:
        z = np.asarray(z, dtype=float)
        ok = np.all(self.a_ub @ z <= self.b_ub + tol) if self.a_ub.size else True
        if self.a_eq.size:
            ok = ok and np.all(np.abs(self.a_eq @ z - self.b_eq) <= tol)
        return bool(ok)


@dataclass(frozen=True, eq=False)
class WassersteinBall:
    """Empirical center (1/N) sum of point masses at the samples, radius eps
    in the transport metric with Euclidean ground cost."""

    samples: np.ndarray  # (N, n)
    radius: float

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if samples.shape[0] < 1:
            raise ValueError("ball needs at least one sample")
        if not np.all(np.isfinite(samples)):
            raise ValueError("ball samples: nonfinite data")
        if self.radius < 0:
            raise ValueError("ball radius must be >= 0")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True, eq=False)
class SsdInstance:
    """min c'z over z in Z subject to z'xi dominating z0'xi (second order)
    under every distribution in the ball.  With `half_norm_objective` the
    objective is (1/2)||z||_2 instead, handled by a norm-epigraph row so
    every master problem stays LP/SOCP."""

    objective: np.ndarray
    decision_set: Polyhedron
    benchmark: np.ndarray
    ball: WassersteinBall
    support: SupportPolytope
    half_norm_objective: bool = False

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.objective, dtype=float))
        z0 = np.atleast_1d(np.asarray(self.benchmark, dtype=float))
        n = self.support.n
        if c.shape != (n,) or z0.shape != (n,):
            raise ValueError("objective/benchmark dimension differs from support")
        if self.decision_set.n != n:
            raise ValueError("decision set dimension differs from support")
        if self.ball.samples.shape[1] != n:
            raise ValueError("ball sample dimension differs from support")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "benchmark", z0)

    @property
    def n(self) -> int:
        return self.support.n

    def objective_value(self, z: np.ndarray) -> float:
        z = np.asarray(z, dtype=float)
        if self.half_norm_objective:
            return 0.5 * float(np.linalg.norm(z))
        return float(self.objective @ z)


@dataclass(frozen=True)
class EtaRange:
    r_min: float
    r_max: float

    def __post_init__(self):
        if self.r_min > self.r_max + 1e-12:
            raise ValueError("eta range: r_min > r_max")


@dataclass(frozen=True, eq=False)
class SampleGrids:
    xi_samples: np.ndarray   # (N_xi, n), includes every observed sample
    eta_samples: np.ndarray  # sorted scalars, include every z0' xi_hat

    @property
    def n_xi(self) -> int:
        return self.xi_samples.shape[0]

    @property
    def n_eta(self) -> int:
        return self.eta_samples.shape[0]


def _linear_extreme(w: np.ndarray, poly_rows: np.ndarray, poly_rhs: np.ndarray,
                    eq_rows: Optional[np.ndarray] = None,
                    eq_rhs: Optional[np.ndarray] = None):
    """min w'x over {poly_rows x <= poly_rhs, eq}; returns (value, status).

    Uses the simplex backend: grid corners must land exactly on polytope
    vertices so observed samples dedup against lattice points.
    """
    kwargs = {}
    if eq_rows is not None and eq_rows.size:
        kwargs = {"a_eq": eq_rows, "b_eq": eq_rhs}
    prog = ConicProgram(c=w, a_in=poly_rows, b_in=poly_rhs, **kwargs)
    res = solve_scipy_linprog(prog, DEFAULT_TOLS)
    return res.obj, res.status


def eta_range(instance: SsdInstance) -> EtaRange:
    """R = [min z0'xi, max z0'xi] over the support polytope, two LPs."""
    sup = instance.support
    lo, st_lo = _linear_extreme(instance.benchmark, sup.C, sup.d)
    hi_neg, st_hi = _linear_extreme(-instance.benchmark, sup.C, sup.d)
    if st_lo != "optimal" or st_hi != "optimal":
        raise ValueError("support unbounded along benchmark")
    return EtaRange(r_min=float(lo), r_max=float(-hi_neg))


def validate_instance(instance: SsdInstance) -> list:
    """Semantic checks: samples inside the support, z0 in Z, Z bounded,
    support bounded along z0.  Returns a list of violation strings (empty
    means ok).  Structural/dimension errors raise at construction instead.
    """
    violations = []
    sup = instance.support
    for i, xi in enumerate(instance.ball.samples):
        if not sup.contains(xi):
            violations.append(f"sample {i} outside support")
    if not instance.decision_set.contains(instance.benchmark):
        violations.append("benchmark infeasible for decision set")
    ds = instance.decision_set
    for j in range(instance.n):
        w = np.zeros(instance.n)
        w[j] = 1.0
        for sign in (1.0, -1.0):
            _, status = _linear_extreme(sign * w, ds.a_ub, ds.b_ub, ds.a_eq, ds.b_eq)
            if status == "unbounded":
                violations.append("decision set unbounded")
                break
        else:
            continue
        break
    try:
        eta_range(instance)
    except ValueError:
        violations.append("support unbounded along benchmark")
    return violations


def _dedup_rows(points: np.ndarray, tol: float = DEDUP_TOL) -> np.ndarray:
    """Lexicographic sort, then drop rows equal to their predecessor within
    tol per coordinate.  Deterministic for identical input."""
    if points.shape[0] == 0:
        return points
    order = np.lexsort(points.T[::-1])
    pts = points[order]
    keep = [0]
    for i in range(1, pts.shape[0]):
        if np.max(np.abs(pts[i] - pts[keep[-1]])) > tol:
            keep.append(i)
    return pts[keep]


def _support_box(sup: SupportPolytope):
    lo = np.empty(sup.n)
    hi = np.empty(sup.n)
    for j in range(sup.n):
        w = np.zeros(sup.n)
        w[j] = 1.0
        v_lo, st1 = _linear_extreme(w, sup.C, sup.d)
        v_hi, st2 = _linear_extreme(-w, sup.C, sup.d)
        if st1 != "optimal" or st2 != "optimal":
            raise ValueError(f"support unbounded in coordinate {j}")
        lo[j], hi[j] = v_lo, -v_hi
    return lo, hi


def generate_grids(
    instance: SsdInstance,
    mode: str = "grid",
    n_xi: int = 100,
    n_eta: int = 100,
    seed: int = 0,
) -> SampleGrids:
    """Finite approximations Xi_N (support samples) and Gamma_M (eta grid).

    mode "grid": uniform lattice over the support bounding box with
    ceil(n_xi^(1/n)) points per axis, rejecting lattice points outside Xi;
    mode "random": uniform rejection sampling with the given seed.  The N
    observed samples (and their benchmark payoffs for the eta grid) are
    always appended before deduplication, so the output size may differ
    from the request.
    """
    if n_xi < instance.ball.n_samples:
        raise ValueError("n_xi must be at least the number of observed samples")
    if n_eta < 1:
        raise ValueError("n_eta must be >= 1")
    sup = instance.support
    lo, hi = _support_box(sup)

    if mode == "grid":
        per_axis = int(np.ceil(n_xi ** (1.0 / sup.n)))
        axes = [np.linspace(lo[j], hi[j], per_axis) for j in range(sup.n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        inside = np.all(sup.C @ pts.T <= sup.d[:, None] + FEAS_TOL, axis=0)
        pts = pts[inside]
    elif mode == "random":
        rng = np.random.default_rng(seed)
        pts_list = []
        attempts = 0
        while len(pts_list) < n_xi:
            attempts += 1
            if attempts > MAX_REJECTION_ATTEMPTS:
                raise ValueError("support too thin for rejection sampling")
            cand = rng.uniform(lo, hi)
            if sup.contains(cand):
                pts_list.append(cand)
        pts = np.asarray(pts_list)
    else:
        raise ValueError(f"unknown grid mode {mode!r}")

    xi = _dedup_rows(np.vstack([pts, instance.ball.samples]))

    rng_eta = eta_range(instance)
    eta = np.linspace(rng_eta.r_min, rng_eta.r_max, n_eta)
    eta = np.concatenate([eta, instance.ball.samples @ instance.benchmark])
    eta = _dedup_rows(eta[:, None]).ravel()
    return SampleGrids(xi_samples=xi, eta_samples=eta)
