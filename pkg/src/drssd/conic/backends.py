"""Solver backends behind a common adapter: the embedded interior-point
method is the reference; `scipy_linprog` (HiGHS) is an optional pure-LP
alternative that must pass the same conformance suite.
"""

from __future__ import annotations

from typing import Callable, Dict

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from .ipm import solve_hsd
from .program import ConicProgram, SolveResult, canonicalize

DEFAULT_TOLS = {"feas": 1e-8, "gap": 1e-8, "maxIter": 200}


class SolverError(ValueError):
    """Structured backend/program mismatch; raised before any solve work."""


def _merged_tols(tols: dict | None) -> dict:
    out = dict(DEFAULT_TOLS)
    if tols:
        unknown = set(tols) - set(DEFAULT_TOLS)
        if unknown:
            raise SolverError(f"unknown tolerance keys: {sorted(unknown)}")
        out.update(tols)
    return out


def _split_duals(p: ConicProgram, std, z_full, result: SolveResult) -> None:
    if z_full is None:
        return
    result.z_in = np.asarray(z_full[: std.n_in])
    # orthant tail after a_in rows: variable bounds, then degenerate SOC rows
    offs = std.dims_l
    soc_duals = {}
    n_degenerate = len(std.soc_linear)
    if n_degenerate:
        start = std.dims_l - n_degenerate
        for pos, idx in enumerate(std.soc_linear):
            soc_duals[idx] = np.array([z_full[start + pos]])
    for blk, idx in zip(
        std.dims_q, [i for i in range(len(p.socs)) if i not in std.soc_linear]
    ):
        soc_duals[idx] = np.asarray(z_full[offs : offs + blk])
        offs += blk
    result.z_soc = [soc_duals[i] for i in range(len(p.socs))] if p.socs else []


def solve_embedded(p: ConicProgram, tols: dict | None = None) -> SolveResult:
    t = _merged_tols(tols)
    std = canonicalize(p)
    if std.G.shape[0] == 0:
        # no inequalities at all: bound the problem artificially? refuse.
        raise SolverError("program has no inequality, bound, or cone rows")
    raw = solve_hsd(
        std.c, std.A, std.b, std.G, std.h, std.dims_l, std.dims_q,
        feastol=t["feas"], gaptol=t["gap"], maxiter=t["maxIter"],
    )
    result = SolveResult(
        status=raw.status,
        x=raw.x,
        obj=raw.obj,
        y_eq=raw.y,
        residuals=raw.residuals,
        iterations=raw.iterations,
    )
    _split_duals(p, std, raw.z, result)
    return result


def solve_scipy_linprog(p: ConicProgram, tols: dict | None = None) -> SolveResult:
    _merged_tols(tols)
    if not p.is_lp:
        raise SolverError("scipy_linprog backend accepts pure LPs only")
    n = p.nvar
    bounds = []
    lb = p.lb if p.lb is not None else np.full(n, -np.inf)
    ub = p.ub if p.ub is not None else np.full(n, np.inf)
    for j in range(n):
        bounds.append(
            (None if not np.isfinite(lb[j]) else lb[j],
             None if not np.isfinite(ub[j]) else ub[j])
        )
    a_in, b_in = p.a_in, p.b_in
    if p.socs:  # degenerate SOC rows become -a'x <= b
        soc_block = -np.vstack([np.asarray(soc.a)[None, :] for soc in p.socs])
        stack = sp.vstack if sp.issparse(a_in) else np.vstack
        a_in = stack([a_in, soc_block]) if a_in.shape[0] else soc_block
        b_in = np.concatenate([b_in, [soc.b for soc in p.socs]])
    res = scipy.optimize.linprog(
        p.c,
        A_ub=a_in if a_in.shape[0] else None,
        b_ub=b_in if b_in.size else None,
        A_eq=p.a_eq if p.a_eq.shape[0] else None,
        b_eq=p.b_eq if p.b_eq.size else None,
        bounds=bounds,
        method="highs",
    )
    status = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded"}.get(
        res.status, "inaccurate"
    )
    out = SolveResult(
        status=status,
        x=np.asarray(res.x) if res.x is not None else None,
        obj=float(res.fun) if res.fun is not None else None,
        iterations=int(getattr(res, "nit", 0) or 0),
        residuals={"primal": 0.0, "dual": 0.0, "gap": 0.0} if status == "optimal" else {},
    )
    if status == "optimal":
        if p.a_eq.shape[0] and res.eqlin is not None:
            out.y_eq = -np.asarray(res.eqlin.marginals)
        if res.ineqlin is not None and p.a_in.shape[0]:
            out.z_in = -np.asarray(res.ineqlin.marginals)[: p.a_in.shape[0]]
    return out


_BACKENDS: Dict[str, Callable[[ConicProgram, dict | None], SolveResult]] = {
    "embedded": solve_embedded,
    "scipy_linprog": solve_scipy_linprog,
}


def register_backend(name: str, fn: Callable) -> None:
    _BACKENDS[name] = fn


def adapter_solve(p: ConicProgram, backend_id: str, tols: dict | None = None) -> SolveResult:
    if backend_id not in _BACKENDS:
        raise SolverError(f"unknown backend {backend_id!r}; registered: {sorted(_BACKENDS)}")
    if not isinstance(p, ConicProgram):
        raise SolverError("adapter_solve expects a ConicProgram")
    return _BACKENDS[backend_id](p, tols)
